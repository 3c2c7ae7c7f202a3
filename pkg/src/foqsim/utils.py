"""Run directories and provenance files for simulator runs."""

from __future__ import annotations

import json
import os
import platform
import subprocess
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Dict, Iterable, Optional
from uuid import uuid4

RUNTIME_PACKAGES = ("numpy", "pandas", "pyyaml", "tqdm", "pytest")


def ensure_dir(path: str) -> None:
    if path:
        os.makedirs(path, exist_ok=True)


def generate_run_id(prefix: str = "") -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S")
    return f"{prefix}{stamp}_{uuid4().hex[:6]}"


def get_git_hash(cwd: Optional[str] = None) -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=cwd, capture_output=True, check=True, text=True
        )
    except (OSError, subprocess.CalledProcessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def collect_env_versions(packages: Iterable[str] = RUNTIME_PACKAGES) -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not_installed"
    return versions


def write_json(data: Dict[str, Any], path: str) -> str:
    ensure_dir(os.path.dirname(path))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


@dataclass(frozen=True)
class RunDirectory:
    """``<output_dir>/<run_id>/`` holding logs, config snapshots and provenance."""

    run_id: str
    path: str

    @classmethod
    def create(cls, output_dir: str, run_id: Optional[str] = None, prefix: str = "") -> "RunDirectory":
        run_id = run_id or generate_run_id(prefix)
        path = os.path.join(output_dir or "outputs", run_id)
        ensure_dir(path)
        return cls(run_id=run_id, path=path)

    def file(self, name: str) -> str:
        return os.path.join(self.path, name)

    def record_provenance(self, packages: Iterable[str] = RUNTIME_PACKAGES) -> Dict[str, str]:
        """Write git_commit.txt and env_versions.json; returns what to log."""
        git_hash = get_git_hash()
        with open(self.file("git_commit.txt"), "w", encoding="utf-8") as f:
            f.write(f"{git_hash}\n")
        env_path = write_json(collect_env_versions(packages), self.file("env_versions.json"))
        return {
            "command_line": " ".join(sys.argv),
            "git_hash": git_hash,
            "env_versions_path": env_path,
        }
