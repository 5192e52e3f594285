"""Command-line surface: run a config or preset, list presets."""

import argparse
import asyncio
import logging
from pathlib import Path
from typing import List, Optional

from cstdoa.config import available_presets, load_run_config, settings
from cstdoa.exceptions import AudioFormatError, ConfigError, CstdoaError
from cstdoa.cli.writers import write_run
from cstdoa.models import RunConfig
from cstdoa.services.runner import ScenarioRunner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cstdoa",
        description="Compressive-sensing TDOA estimation for distributed sensor arrays",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario or audio-pair config")
    run.add_argument("config", nargs="?", type=Path, help="TOML run configuration")
    run.add_argument("--preset", help="Shipped preset name instead of a config file")
    run.add_argument("--seed", type=int, help="Override the run seed")
    run.add_argument("--out", type=Path, help="Output directory")
    run.add_argument("--dry-run", action="store_true", help="Validate and write the manifest only")
    run.add_argument("--workers", type=int, help="Worker threads")
    run.add_argument("--log-level", help="Logging level (default from LOG_LEVEL)")

    sub.add_parser("presets", help="List shipped presets")
    return parser


def output_dir(cfg: RunConfig) -> Path:
    return cfg.output_dir or settings.runs_dir / cfg.name


def execute(cfg: RunConfig, dry_run: bool = False, workers: Optional[int] = None) -> List[Path]:
    """Run cfg (unless dry_run) and write its outputs."""
    out = output_dir(cfg)
    if dry_run:
        logger.info(f"Dry run of '{cfg.name}', config is valid")
        return write_run(out, cfg, None)

    logger.info(f"Starting run '{cfg.name}' ({cfg.mode}, seed {cfg.seed})")
    result = asyncio.run(ScenarioRunner(cfg, workers).run())
    return write_run(out, cfg, result)


def cmd_run(args: argparse.Namespace) -> int:
    if args.config is None and args.preset is None:
        logger.error("run needs a config file or --preset")
        return EXIT_CONFIG

    try:
        cfg = load_run_config(
            path=args.config,
            preset=args.preset,
            overrides={"seed": args.seed, "output_dir": args.out, "workers": args.workers},
        )
        execute(cfg, dry_run=args.dry_run, workers=args.workers)
    except (ConfigError, AudioFormatError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except CstdoaError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    for name in available_presets():
        print(name)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "log_level", None):
        logging.getLogger().setLevel(args.log_level.upper())
    if args.command == "run":
        return cmd_run(args)
    return cmd_presets(args)
