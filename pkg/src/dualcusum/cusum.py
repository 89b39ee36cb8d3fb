"""Reflected-random-walk detectors and their increment rules.

One recursion covers every detector in the system:

    W[k+1] = max(0, W[k] + Z[k+1])

with Z either a log-likelihood ratio of two observation laws (parametric
mode) or the raw observation minus a reference constant (nonparametric
mode).  Sensors gate their transmissions on W > gamma; the fusion center
runs the same recursion on the channel output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .distributions import DistributionSpec, Gaussian
from .errors import ConfigError, DualCusumError


@dataclass(frozen=True)
class CusumDetector:
    """State of one reflected-random-walk detector.

    ``crossed_at`` records the first time index with W >= threshold;
    threshold crossing uses >= (first-passage convention) while the
    transmission gate uses strict > (both events coincide a.s. for
    continuous increments).  The detector keeps evolving after a crossing
    so callers can measure sojourns above the threshold.
    """

    threshold: float
    w: float = 0.0
    crossed_at: Optional[int] = None
    overshoot: Optional[float] = None

    def __post_init__(self):
        if not (self.threshold > 0):
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        if self.w < 0:
            raise ConfigError("detector state must be >= 0")


def step(det: CusumDetector, z: float, k: int) -> CusumDetector:
    """Advance the recursion by one increment observed at time index ``k``."""
    if not math.isfinite(z) and not (z == math.inf):
        raise DualCusumError(f"non-finite increment {z!r} at k={k}")
    w = max(0.0, det.w + z)
    if det.crossed_at is None and w >= det.threshold:
        return replace(det, w=w, crossed_at=k, overshoot=w - det.threshold)
    return replace(det, w=w)


@dataclass(frozen=True)
class FusionModel:
    """Increment rule at the fusion center.

    Parametric: log g_I(y) / g0(y) where g0 is the channel-noise law and
    g_I the same law shifted by amplitude * design_level.  Nonparametric:
    y - shift.
    """

    kind: str  # "parametric" | "nonparametric"
    noise: Optional[DistributionSpec] = None
    amplitude: float = 1.0  # b
    design_level: float = 1.0  # I
    shift: Optional[float] = None  # nonparametric reference

    def __post_init__(self):
        if self.kind == "parametric":
            if self.noise is None:
                raise ConfigError("parametric fusion needs a noise law")
        elif self.kind == "nonparametric":
            if self.shift is None:
                raise ConfigError("nonparametric fusion needs a shift")
        else:
            raise ConfigError(f"unknown fusion kind {self.kind!r}")

    @property
    def bias(self) -> float:
        """The designed mean shift b*I the parametric rule tests for."""
        return self.amplitude * self.design_level


def sensor_increment(x, mode) -> Union[float, np.ndarray]:
    """Detector increment for one raw observation.

    ``mode`` is an (f0, f1) pair for the parametric rule log(f1(x)/f0(x)),
    or a float d for the nonparametric rule x - d.  Where f0(x) = 0 but
    f1(x) > 0 the ratio is +inf, which the recursion treats as an immediate
    crossing; both densities zero means x lies outside the common support.
    """
    if isinstance(mode, tuple):
        f0, f1 = mode
        p0 = np.asarray(f0.pdf(x), dtype=float)
        p1 = np.asarray(f1.pdf(x), dtype=float)
        if np.any((p0 == 0.0) & (p1 == 0.0)):
            raise ConfigError(f"observation {x!r} outside the support of both laws")
        with np.errstate(divide="ignore"):
            out = np.log(p1) - np.log(p0)
        return float(out) if np.isscalar(x) else out
    return x - float(mode)


def fusion_increment(y, model: FusionModel) -> Union[float, np.ndarray]:
    """Fusion-center increment for one channel output sample."""
    if model.kind == "nonparametric":
        return y - model.shift
    noise = model.noise
    if isinstance(noise, Gaussian):
        # log ratio of two equal-variance Gaussians is affine in y
        bi = model.bias
        return (bi * (np.asarray(y, dtype=float) - noise.mean_value) - bi**2 / 2.0) / noise.variance_value
    return sensor_increment(y, (noise, _shifted_noise(model)))


def _shifted_noise(model: FusionModel) -> DistributionSpec:
    from .distributions import PointMassShift

    return PointMassShift(offset=model.bias, base=model.noise)


def transmit_decision(det: CusumDetector, b: float) -> float:
    """Transmitted amplitude: b while the statistic is strictly above threshold."""
    return b if det.w > det.threshold else 0.0
