"""Performance report record shared by the analytical and simulated paths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import InfeasibleError


@dataclass(frozen=True)
class PerfReport:
    """False-alarm probability, mean detection delay and average energy,
    together with provenance (analytic model or Monte Carlo estimate)."""

    pfa: float
    edd: float
    avg_energy: float
    method: str  # "analytical" | "simulated"
    config_hash: str = ""
    pfa_halfwidth: Optional[float] = None
    edd_halfwidth: Optional[float] = None
    replications: Optional[int] = None
    censored: int = 0
    notes: str = ""

    def __post_init__(self):
        if not (0.0 <= self.pfa <= 1.0):
            raise InfeasibleError(f"pfa must be a probability, got {self.pfa}")
        if self.edd < 0 or not math.isfinite(self.edd):
            raise InfeasibleError(f"edd must be finite and >= 0, got {self.edd}")
        if self.method not in ("analytical", "simulated"):
            raise InfeasibleError(f"unknown method {self.method!r}")

    def to_row(self) -> dict:
        row = {
            "config_hash": self.config_hash,
            "method": self.method,
            "pfa": self.pfa,
            "edd": self.edd,
            "avg_energy": self.avg_energy,
        }
        if self.method == "simulated":
            row.update(
                pfa_halfwidth=self.pfa_halfwidth,
                edd_halfwidth=self.edd_halfwidth,
                replications=self.replications,
                censored=self.censored,
            )
        return row

    def to_json(self) -> str:
        return json.dumps(self.to_row(), sort_keys=True)
