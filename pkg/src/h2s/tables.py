"""Calibration tables for the ball-radius estimators.

``xi`` scales the distance-to-center spread added to the median in the
corrected ball estimator; ``inv_zeta`` is the expected pairwise distance of a
uniform unit N-ball. Both are tabulated at powers of two and interpolated
linearly in log2(N) between entries.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

XI_TABLE = {
    2: 1.2733,
    4: 1.0115,
    8: 0.8796,
    16: 0.8107,
    32: 0.8384,
    64: 0.8638,
    128: 0.9579,
    256: 1.0403,
    512: 1.1938,
    1024: 1.4268,
    2048: 1.8384,
    4096: 2.4485,
}

INV_ZETA_TABLE = {
    1: 0.6673,
    2: 0.9039,
    4: 1.1043,
    8: 1.2407,
    16: 1.3230,
    32: 1.3657,
    64: 1.3898,
    128: 1.4020,
    256: 1.4081,
    512: 1.4111,
    1024: 1.4127,
    2048: 1.4134,
    4096: 1.4138,
}

INV_ZETA_ASYMPTOTE = math.sqrt(2.0)


def _lookup(table: dict[int, float], n: float) -> float:
    if n in table:
        return table[n]
    keys = np.array(sorted(table), dtype=float)
    values = np.array([table[int(k)] for k in keys])
    # np.interp clamps outside the tabulated range
    return float(np.interp(math.log2(n), np.log2(keys), values))


@dataclass(frozen=True)
class CalibrationTables:
    xi: dict[int, float]
    inv_zeta: dict[int, float]

    def __post_init__(self):
        for name, table in (("xi", self.xi), ("inv_zeta", self.inv_zeta)):
            if not table:
                raise ValidationError(f"calibration table {name!r} is empty")
            for n, value in table.items():
                if int(n) < 1 or not np.isfinite(value) or value <= 0:
                    raise ValidationError(f"calibration table {name!r} has invalid entry {n}: {value}")
        object.__setattr__(self, "xi", {int(k): float(v) for k, v in sorted(self.xi.items(), key=lambda kv: int(kv[0]))})
        object.__setattr__(
            self, "inv_zeta", {int(k): float(v) for k, v in sorted(self.inv_zeta.items(), key=lambda kv: int(kv[0]))}
        )

    def xi_at(self, n: int) -> float:
        """xi(N); clamps to the first/last entry outside the table."""
        if n < 1:
            raise ValidationError(f"dimension must be positive, got {n}")
        return _lookup(self.xi, n)

    def inv_zeta_at(self, n: int) -> float:
        """1/zeta(N); sqrt(2) beyond the largest tabulated N."""
        if n < 1:
            raise ValidationError(f"dimension must be positive, got {n}")
        if n > max(self.inv_zeta):
            return INV_ZETA_ASYMPTOTE
        return _lookup(self.inv_zeta, n)

    def zeta_at(self, n: int) -> float:
        return 1.0 / self.inv_zeta_at(n)

    def to_dict(self) -> dict:
        return {
            "xi": {str(k): v for k, v in self.xi.items()},
            "inv_zeta": {str(k): v for k, v in self.inv_zeta.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationTables":
        try:
            return cls(
                {int(k): float(v) for k, v in data["xi"].items()},
                {int(k): float(v) for k, v in data["inv_zeta"].items()},
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise ValidationError(f"malformed calibration tables: {e}") from e


DEFAULT_TABLES = CalibrationTables(dict(XI_TABLE), dict(INV_ZETA_TABLE))


def load_tables(path: str | Path | None) -> CalibrationTables:
    """Load tables from JSON, or return the shipped defaults when ``path`` is None."""
    if path is None:
        return DEFAULT_TABLES
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"calibration tables not found: {path}")
    with open(path) as f:
        data = json.load(f)
    logger.info(f"Loaded calibration tables from {path}")
    return CalibrationTables.from_dict(data)


def save_tables(tables: CalibrationTables, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(tables.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
