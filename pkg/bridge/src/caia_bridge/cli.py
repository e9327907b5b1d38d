"""caia-bridge command line: serve a model or export logits offline."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import BridgeConfig, BridgeConfigError, load_config
from .export import ExportError, export_logits
from .server import serve_bridge


def _config_from_args(args) -> BridgeConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = BridgeConfig()
    overrides = {}
    if getattr(args, "bind", None):
        overrides["bind"] = args.bind
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if overrides:
        config = BridgeConfig(
            model_kind=config.model_kind,
            model_path=config.model_path,
            num_classes=config.num_classes,
            device=config.device,
            bind=overrides.get("bind", config.bind),
            mode=overrides.get("mode", config.mode),
            preprocess=config.preprocess,
        )
    return config


def cmd_serve(args) -> int:
    config = _config_from_args(args)
    server = serve_bridge(config)
    print(f"serving at {server.address}", file=sys.stderr, flush=True)
    try:
        server.join()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_export(args) -> int:
    config = _config_from_args(args)
    count = export_logits(config, args.attack_set, args.out)
    print(f"exported {count} logit records")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caia-bridge",
        description="Oracle HTTP bridge around image classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve the oracle protocol")
    p.add_argument("--config", help="bridge config JSON")
    p.add_argument("--bind", help="host:port (overrides config)")
    p.add_argument("--mode", choices=("logits", "attribute_scores", "both"))
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="export logits for an attack manifest")
    p.add_argument("--config", help="bridge config JSON")
    p.add_argument("--attack-set", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (BridgeConfigError, ExportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
