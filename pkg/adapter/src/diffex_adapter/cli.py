"""Adapter CLI: serve the wire protocol, or selftest a running endpoint."""

from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig
from .conformance import conformance_selftest
from .errors import AdapterStartupError
from .server import AdapterServer
from .stub import StubModel


def build_model(config: AdapterConfig):
    if config.mode == "stub":
        return StubModel(config)
    from .realmode import RealModel

    return RealModel(config)


def cmd_serve(args) -> int:
    config = AdapterConfig(
        mode=args.mode,
        labels=tuple(l for l in args.labels.split(",") if l),
        domains=(args.domain,),
        seed=args.seed,
        image_count=args.images,
        editor_model=args.editor or "",
        classifier_model=args.classifier or "",
        image_dir=args.image_dir or "",
        device=args.device,
    )
    try:
        model = build_model(config)
    except AdapterStartupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    server = AdapterServer(model, host=args.host, port=args.port)
    print(f"serving {config.mode} adapter on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_selftest(args) -> int:
    report = conformance_selftest(args.endpoint, image_id=args.image_id)
    print(report.summary())
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffex-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve the wire protocol")
    p.add_argument("--mode", choices=["stub", "real"], default="stub")
    p.add_argument("--port", type=int, default=8602)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--labels", default="negative,positive", help="comma-separated class labels")
    p.add_argument("--domain", default="stub")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=8, help="stub mode: number of seeded images")
    p.add_argument("--editor", help="real mode: diffusion editor model id")
    p.add_argument("--classifier", help="real mode: image classifier model id")
    p.add_argument("--image-dir", help="real mode: directory of source images")
    p.add_argument("--device", default="cpu")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("selftest", help="run the conformance selftest against an endpoint")
    p.add_argument("endpoint")
    p.add_argument("--image-id", default="stub-0000")
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
