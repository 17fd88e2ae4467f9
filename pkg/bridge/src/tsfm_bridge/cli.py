"""Command line entry points: serve a live adapter or build replay fixtures."""

from __future__ import annotations

import argparse

from .backends import DEFAULT_API_KEY_ENV, DEFAULT_SAMPLES, AdapterConfig
from .post import run_post
from .serve import serve

BACKENDS = ["stub-seasonal-naive", "stub-noise", "chronos", "moirai", "timegpt"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsfm-bridge", description="Forecast adapter speaking the gateway wire protocol v1")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", required=True, type=lambda s: s.replace("_", "-").lower(), choices=BACKENDS, help="forecasting backend")
    common.add_argument("--variant", default=None, help="model size or variant, backend specific")
    common.add_argument("--device", default="cpu", help="device hint for local models")
    common.add_argument("--seed", type=int, default=0, help="base seed for stochastic backends")
    common.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="sample paths per request for probabilistic models")
    common.add_argument("--noise-scale", type=float, default=1.0, help="noise standard deviation for the stub-noise backend")
    common.add_argument("--api-key-env", default=DEFAULT_API_KEY_ENV, help="environment variable holding the hosted-API key")
    sub = parser.add_subparsers(dest="command", required=True)
    p_serve = sub.add_parser("serve", parents=[common], help="answer requests on stdin/stdout until EOF")
    p_serve.add_argument("--record-requests", default=None, metavar="PATH", help="append each valid request to PATH for later post runs")
    p_post = sub.add_parser("post", parents=[common], help="run the backend over a saved request stream and write a replay fixture")
    p_post.add_argument("--requests", required=True, metavar="PATH", help="newline-delimited request stream")
    p_post.add_argument("--out", required=True, metavar="PATH", help="fixture file to write")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(
        backend=args.backend,
        variant=args.variant,
        device=args.device,
        seed=args.seed,
        samples=args.samples,
        noise_scale=args.noise_scale,
        api_key_env=args.api_key_env,
    )
    if args.command == "serve":
        return serve(config, record_requests=args.record_requests)
    return run_post(config, args.requests, args.out)
