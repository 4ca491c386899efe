"""Command-line entry point: ``trajphase --config run.json [--stage NAME]``."""

import argparse
import json
import logging
import sys

from . import config as config_mod
from .errors import TrajphaseError
from .pipeline import STAGES, run_stages

_STD_ATTRS = set(vars(logging.LogRecord("", 0, "", 0, "", (), None))) | {"message", "asctime"}


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        doc = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        doc.update({k: v for k, v in vars(record).items() if k not in _STD_ATTRS})
        return json.dumps(doc, default=str, sort_keys=True)


def _setup_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger("trajphase")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def build_parser():
    p = argparse.ArgumentParser(prog="trajphase", description=__doc__)
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--stage", default="all", choices=("all",) + STAGES)
    p.add_argument("--output", help="run directory (overrides output_dir)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    log = logging.getLogger("trajphase")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        cfg = config_mod.load(args.config, overrides)
        if args.output:
            cfg["output_dir"] = args.output
        stages = STAGES if args.stage == "all" else (args.stage,)
        run_stages(cfg, stages, threads=args.threads)
    except TrajphaseError as exc:
        log.error(str(exc), extra={"error": type(exc).__name__, "exit_code": exc.exit_code})
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        log.error(str(exc), extra={"error": type(exc).__name__, "exit_code": 11})
        return 11
    return 0


if __name__ == "__main__":
    sys.exit(main())
