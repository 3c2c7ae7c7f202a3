from __future__ import annotations

import argparse
import itertools
import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Dict, List, Optional

import pandas as pd
from tqdm import tqdm

ROOT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
SRC_DIR = os.path.join(ROOT_DIR, "src")
if SRC_DIR not in sys.path:
    sys.path.insert(0, SRC_DIR)

from config.schema import load_yaml, save_yaml  # noqa: E402
from foqsim.utils import RunDirectory  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Grid sweep over experiment parameters")
    parser.add_argument("--base-config", required=True, help="Base experiment YAML")
    parser.add_argument("--search-space", required=True, help="Search space YAML")
    parser.add_argument("--jobs", type=int, default=1, help="Concurrent simulator processes")
    parser.add_argument("--output-dir", default="outputs", help="Where run directories go")
    return parser.parse_args()


def get_metric(summary: Dict[str, Any], metric_path: str) -> Any:
    cur: Any = summary.get("metrics", {})
    for p in metric_path.split("."):
        if not isinstance(cur, dict) or p not in cur:
            return None
        cur = cur[p]
    return cur


def better(score: float, best: Optional[float], mode: str) -> bool:
    if best is None:
        return True
    return score > best if mode == "max" else score < best


def run_trial(base_config: str, overrides: List[str], run_id: str, output_dir: str, log_path: str) -> Dict[str, Any]:
    cmd = [sys.executable, "scripts/foqsim.py", "run", base_config, "--run-id", run_id]
    cmd += ["--overrides", f"output_dir={json.dumps(output_dir)}"]
    for ov in overrides:
        cmd += ["--overrides", ov]
    with open(log_path, "w", encoding="utf-8") as log_f:
        log_f.write(f"$ {' '.join(cmd)}\n")
        log_f.flush()
        proc = subprocess.run(cmd, cwd=ROOT_DIR, stdout=log_f, stderr=log_f)
    if proc.returncode != 0:
        return {"run_id": run_id, "status": f"failed_rc{proc.returncode}"}
    summary_path = os.path.join(output_dir, run_id, "summary.json")
    if not os.path.exists(summary_path):
        return {"run_id": run_id, "status": "missing_summary"}
    with open(summary_path, "r", encoding="utf-8") as f:
        return {"run_id": run_id, "status": "ok", "summary": json.load(f)}


def main() -> int:
    args = parse_args()
    args.base_config = os.path.abspath(args.base_config)
    search_space = load_yaml(args.search_space)
    parameters: Dict[str, List[Any]] = search_space.get("parameters", {})
    objective = search_space.get("objective", {})
    constraint = search_space.get("constraint", {})
    mode = objective.get("mode", "max")
    if mode not in {"max", "min"}:
        print(f"objective.mode must be max or min, got {mode!r}", file=sys.stderr)
        return 1

    output_dir = os.path.abspath(os.path.join(ROOT_DIR, args.output_dir))
    sweep = RunDirectory.create(output_dir, prefix="sweep_")
    sweep_id, sweep_dir = sweep.run_id, sweep.path

    keys = list(parameters.keys())
    combos = list(itertools.product(*[parameters[k] for k in keys]))

    trials = []
    for idx, combo in enumerate(combos, start=1):
        overrides = [f"{k}={json.dumps(v)}" for k, v in zip(keys, combo)]
        run_id = f"{sweep_id}_t{idx:02d}"
        trials.append((run_id, dict(zip(keys, combo)), overrides))

    results: Dict[str, Dict[str, Any]] = {}
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = {
            pool.submit(
                run_trial,
                args.base_config,
                overrides,
                run_id,
                output_dir,
                os.path.join(sweep_dir, f"{run_id}.log"),
            ): run_id
            for run_id, _, overrides in trials
        }
        for fut in tqdm(as_completed(futures), total=len(futures), desc="sweep"):
            results[futures[fut]] = fut.result()

    rows = []
    best_score: Optional[float] = None
    best_run: Optional[str] = None
    for run_id, params, _ in trials:
        res = results[run_id]
        row: Dict[str, Any] = {"run_id": run_id, **params, "score": None, "status": res["status"]}
        if res["status"] == "ok":
            summary = res["summary"]
            metric_path = objective.get("metric")
            score = get_metric(summary, metric_path) if metric_path else None
            row["score"] = score
            if constraint:
                c_val = get_metric(summary, constraint.get("metric", ""))
                c_min = constraint.get("min")
                c_max = constraint.get("max")
                if c_val is None or (c_min is not None and c_val < c_min) or (c_max is not None and c_val > c_max):
                    row["status"] = "constraint_fail"
            if row["status"] == "ok" and score is not None and better(score, best_score, mode):
                best_score = score
                best_run = run_id
        rows.append(row)

    leaderboard = pd.DataFrame(rows, columns=["run_id", *keys, "score", "status"])
    leaderboard.to_csv(sweep.file("leaderboard.csv"), index=False, lineterminator="\n")

    if best_run:
        resolved_path = os.path.join(output_dir, best_run, "config.resolved.yaml")
        if os.path.exists(resolved_path):
            save_yaml(load_yaml(resolved_path), sweep.file("best_config.yaml"))

    print(f"sweep_dir={sweep_dir} best_run={best_run} best_score={best_score}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
