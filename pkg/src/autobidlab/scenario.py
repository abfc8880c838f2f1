"""Scenario files and deterministic output formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ValidationError

SIG_DIGITS = 12

OPERATIONS = ("solve-bid", "equilibrium", "verify", "sweep", "simulate")

# (valuation, landscape) pairs used by the default format-comparison sweep
THEOREM1_PAIRS = (
    ("uniform", "power:1"),
    ("uniform", "power:2"),
    ("uniform", "power:3"),
    ("uniform", "power:4"),
    ("uniform:1:20", "pareto_hat"),
    ({"family": "truncated_pareto", "alpha": 2.0, "lo": 0.1, "hi": 1.0}, "power:2"),
)


def fmt(x: float) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), f".{SIG_DIGITS}g")


def normalize(obj: Any) -> Any:
    """Round floats to the fixed significant digits; non-finite floats
    become string markers so the JSON stays valid."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if hasattr(obj, "tolist") and getattr(obj, "ndim", 0) > 0:
        return normalize(obj.tolist())
    if isinstance(obj, float) or hasattr(obj, "dtype"):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(fmt(x)) + 0.0  # folds -0.0
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if hasattr(obj, "tolist"):
        return normalize(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(normalize(obj), indent=2, sort_keys=True) + "\n"


def rows_to_csv(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r[f]) if isinstance(r[f], (int, float)) else r[f] for f in fields])
    return buf.getvalue()


def csv_to_rows(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    return [{k: float(v) for k, v in row.items()} for row in reader]


@dataclass
class Scenario:
    operation: str
    name: str = "scenario"
    valuation: Any = None
    landscape: Any = None
    competition: Optional[dict] = None
    aucsim: Optional[dict] = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, operation: Optional[str] = None) -> "Scenario":
        if not isinstance(d, dict):
            raise ValidationError("scenario must be a JSON object")
        op = operation or d.get("operation")
        if op not in OPERATIONS:
            raise ValidationError(f"unknown operation {op!r}; expected one of {OPERATIONS}")
        if d.get("operation") not in (None, op):
            raise ValidationError(f"scenario is for {d['operation']!r}, not {op!r}")
        known = {"operation", "name", "valuation", "landscape", "competition", "aucsim", "params", "seed", "tolerances", "output"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown scenario keys {sorted(extra)}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        return cls(
            operation=op,
            name=d.get("name", "scenario"),
            valuation=d.get("valuation"),
            landscape=d.get("landscape"),
            competition=d.get("competition"),
            aucsim=d.get("aucsim"),
            params=dict(d.get("params", {})),
            seed=seed,
            tolerances=dict(d.get("tolerances", {})),
            output=dict(d.get("output", {})),
        )

    @classmethod
    def load(cls, path: str, operation: Optional[str] = None) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read scenario {path}: {exc.strerror}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed scenario JSON: {exc.msg} at line {exc.lineno}") from None
        return cls.from_dict(d, operation)

    def require(self, *blocks: str) -> None:
        missing = [b for b in blocks if getattr(self, b) is None]
        if missing:
            raise ValidationError(f"{self.operation} needs scenario blocks {missing}")

    def to_dict(self) -> dict:
        out = {
            "operation": self.operation,
            "name": self.name,
            "params": self.params,
            "seed": self.seed,
        }
        for k in ("valuation", "landscape", "competition", "aucsim"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        if self.tolerances:
            out["tolerances"] = self.tolerances
        return out
