"""Machine-readable run reports: deterministic JSON and CSV emission.

Reports must be byte-identical across runs with the same effective config
and seed, so wall-clock timings go to a separate timings file and all floats
are serialized via round-trip-exact representations (repr in JSON, %.17g in
CSV).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__

__all__ = ["CheckResult", "RunReport", "write_csv", "write_timings"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: object
    tolerance: object = None
    detail: str = ""


@dataclass
class RunReport:
    command: str
    version: str
    seed: int
    config_hash: str
    config: dict
    checks: list[CheckResult] = field(default_factory=list)
    payload: dict = field(default_factory=dict)

    def add_check(self, name, passed, measured, tolerance=None, detail="") -> CheckResult:
        check = CheckResult(
            name=name, passed=bool(passed), measured=measured,
            tolerance=tolerance, detail=detail,
        )
        self.checks.append(check)
        return check

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return _plain({
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
            "checks": [asdict(c) for c in self.checks],
            "all_passed": self.all_passed,
            **self.payload,
        })

    def write_json(self, path: str | Path) -> None:
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2)
        Path(path).write_text(text + "\n", encoding="utf-8")


def _plain(obj):
    """Recursively convert numpy/dataclass values into JSON-stable types."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": _plain(obj.real), "im": _plain(obj.imag)}
    return obj


def write_csv(path: str | Path, columns: list[str], rows, version: str, cfg_hash: str) -> None:
    """UTF-8 CSV with a provenance comment and %.17g numeric formatting."""
    lines = [f"# mzsde {version} config={cfg_hash}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _format_cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_timings(path: str | Path, command: str, stages: dict[str, float]) -> None:
    """Wall-clock stage timings; deliberately outside the reproducible report."""
    payload = {
        "command": command,
        "version": __version__,
        "stages": {k: float(v) for k, v in stages.items()},
        "total_seconds": float(sum(stages.values())),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
