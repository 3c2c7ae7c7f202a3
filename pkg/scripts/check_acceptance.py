from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Any, Dict

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
SRC_DIR = os.path.join(ROOT_DIR, "src")
if SRC_DIR not in sys.path:
    sys.path.insert(0, SRC_DIR)

from config.schema import ConfigError  # noqa: E402
from foqsim.acceptance import cbr_checks, report, run_pair, tcp_checks  # noqa: E402
from foqsim.logging_utils import setup_logging  # noqa: E402
from foqsim.utils import RunDirectory, write_json  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Band checks for the desk-scale CBR and TCP scenarios")
    parser.add_argument("--cbr-config", default=os.path.join(ROOT_DIR, "configs", "cbr_scaled.yaml"))
    parser.add_argument("--tcp-config", default=os.path.join(ROOT_DIR, "configs", "tcp_scaled.yaml"))
    parser.add_argument("--skip-tcp", action="store_true", help="Only run the CBR scenario")
    parser.add_argument("--output-dir", default="outputs")
    parser.add_argument("--progress", action="store_true")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    run = RunDirectory.create(args.output_dir, prefix="acceptance_")
    logger = setup_logging(run.file("logs.txt"))
    for key, value in run.record_provenance().items():
        logger.info("%s=%s", key, value)

    result: Dict[str, Any] = {}
    try:
        t0 = time.perf_counter()
        cfg, off, gb = run_pair(args.cbr_config, progress=args.progress)
        result["cbr"] = report(cbr_checks(off, gb, cfg.duration))
        result["cbr"]["runtime_sec"] = time.perf_counter() - t0
        logger.info("cbr passed=%s runtime_sec=%.1f", result["cbr"]["passed"], result["cbr"]["runtime_sec"])

        if not args.skip_tcp:
            t0 = time.perf_counter()
            cfg, off, gb = run_pair(args.tcp_config, progress=args.progress)
            result["tcp"] = report(tcp_checks(off, gb, cfg))
            result["tcp"]["runtime_sec"] = time.perf_counter() - t0
            logger.info("tcp passed=%s runtime_sec=%.1f", result["tcp"]["passed"], result["tcp"]["runtime_sec"])
    except ConfigError as exc:
        logger.error("config_error=%s", exc)
        return 1
    except Exception:
        logger.exception("acceptance run failed")
        return 2

    result["passed"] = all(section["passed"] for section in result.values() if isinstance(section, dict))
    path = write_json(result, run.file("acceptance.json"))
    logger.info("report_path=%s passed=%s", path, result["passed"])
    return 0 if result["passed"] else 2


if __name__ == "__main__":
    raise SystemExit(main())
