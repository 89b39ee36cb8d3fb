"""Univariate observation and increment laws.

Provides the distribution families used by the sensors and the fusion channel
(Gaussian, Laplace, Exponential, Pareto, Lognormal, plus a shift wrapper),
tail classification, moment matching across families, and the log-likelihood
ratio transform that maps an observation law into the law of a detector
increment.  Everything downstream (integral-equation solvers, batch models,
simulator) consumes these objects through a small common interface:
``cdf``, ``mean``, ``variance``, ``excess_mean`` and ``sample``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainMismatchError, InfeasibleError

__all__ = [
    "Family",
    "TailClass",
    "DistributionSpec",
    "Gaussian",
    "Laplace",
    "Exponential",
    "Pareto",
    "Lognormal",
    "PointMassShift",
    "EmpiricalLaw",
    "IncrementSpec",
    "Law",
    "classify_tail",
    "llr_increment_law",
    "moment_matched_spec",
]


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    EXPONENTIAL = "exponential"
    PARETO = "pareto"
    LOGNORMAL = "lognormal"
    POINT_MASS_SHIFT = "point_mass_shift"


class TailClass(str, Enum):
    LIGHT = "light"
    HEAVY_SUBEXPONENTIAL = "heavy_subexponential"


class DistributionSpec:
    """Base class for parametric univariate laws.

    Subclasses are frozen dataclasses; instances are immutable and safe to
    share across threads.  Samplers take an explicit ``numpy.random.Generator``
    so concurrent callers can use independent streams.
    """

    family: Family

    # -- core interface -------------------------------------------------

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        """Survival function P(X > x)."""
        return 1.0 - self.cdf(x)

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def excess_mean(self, t: float) -> float:
        """E[(X - t)+], the integrated upper tail beyond ``t``."""
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def tail(self) -> TailClass:
        return classify_tail(self)

    def std(self) -> float:
        return math.sqrt(self.variance())


@dataclass(frozen=True)
class Gaussian(DistributionSpec):
    mean_value: float = 0.0
    variance_value: float = 1.0

    family = Family.GAUSSIAN

    def __post_init__(self):
        if not (self.variance_value > 0) or not math.isfinite(self.variance_value):
            raise ConfigError(f"gaussian variance must be > 0, got {self.variance_value}")
        if not math.isfinite(self.mean_value):
            raise ConfigError("gaussian mean must be finite")

    def pdf(self, x):
        return stats.norm.pdf(x, self.mean_value, self.std())

    def cdf(self, x):
        return stats.norm.cdf(x, self.mean_value, self.std())

    def sf(self, x):
        return stats.norm.sf(x, self.mean_value, self.std())

    def sample(self, rng, size=None):
        return rng.normal(self.mean_value, self.std(), size)

    def mean(self):
        return self.mean_value

    def variance(self):
        return self.variance_value

    def excess_mean(self, t):
        s = self.std()
        d = (self.mean_value - t) / s
        return (self.mean_value - t) * stats.norm.cdf(d) + s * stats.norm.pdf(d)

    def support(self):
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class Laplace(DistributionSpec):
    location: float = 0.0
    scale: float = 1.0

    family = Family.LAPLACE

    def __post_init__(self):
        if not (self.scale > 0):
            raise ConfigError(f"laplace scale must be > 0, got {self.scale}")

    def pdf(self, x):
        return stats.laplace.pdf(x, self.location, self.scale)

    def cdf(self, x):
        return stats.laplace.cdf(x, self.location, self.scale)

    def sf(self, x):
        return stats.laplace.sf(x, self.location, self.scale)

    def sample(self, rng, size=None):
        return rng.laplace(self.location, self.scale, size)

    def mean(self):
        return self.location

    def variance(self):
        return 2.0 * self.scale**2

    def excess_mean(self, t):
        a, s = self.location, self.scale
        if t >= a:
            return 0.5 * s * math.exp(-(t - a) / s)
        return (a - t) + 0.5 * s * math.exp((t - a) / s)

    def support(self):
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    rate: float = 1.0

    family = Family.EXPONENTIAL

    def __post_init__(self):
        if not (self.rate > 0):
            raise ConfigError(f"exponential rate must be > 0, got {self.rate}")

    def pdf(self, x):
        return stats.expon.pdf(x, scale=1.0 / self.rate)

    def cdf(self, x):
        return stats.expon.cdf(x, scale=1.0 / self.rate)

    def sf(self, x):
        return stats.expon.sf(x, scale=1.0 / self.rate)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def mean(self):
        return 1.0 / self.rate

    def variance(self):
        return 1.0 / self.rate**2

    def excess_mean(self, t):
        if t <= 0:
            return -t + 1.0 / self.rate
        return math.exp(-self.rate * t) / self.rate

    def support(self):
        return (0.0, math.inf)


@dataclass(frozen=True)
class Pareto(DistributionSpec):
    """Pareto law with density K * x_m^K / x^(K+1) on x >= x_m."""

    shape: float  # K
    scale: float = 1.0  # x_m

    family = Family.PARETO

    def __post_init__(self):
        if not (self.shape > 0):
            raise ConfigError(f"pareto shape must be > 0, got {self.shape}")
        if not (self.scale > 0):
            raise ConfigError(f"pareto scale must be > 0, got {self.scale}")

    def pdf(self, x):
        return stats.pareto.pdf(x, self.shape, scale=self.scale)

    def cdf(self, x):
        return stats.pareto.cdf(x, self.shape, scale=self.scale)

    def sf(self, x):
        return stats.pareto.sf(x, self.shape, scale=self.scale)

    def sample(self, rng, size=None):
        # inverse CDF of x_m * U^(-1/K)
        u = rng.random(size)
        return self.scale * u ** (-1.0 / self.shape)

    def mean(self):
        if self.shape <= 1:
            return math.inf
        return self.shape * self.scale / (self.shape - 1.0)

    def variance(self):
        if self.shape <= 2:
            return math.inf
        k, xm = self.shape, self.scale
        return xm**2 * k / ((k - 1.0) ** 2 * (k - 2.0))

    def excess_mean(self, t):
        k, xm = self.shape, self.scale
        if k <= 1:
            return math.inf
        if t <= xm:
            return self.mean() - t
        return t * (xm / t) ** k / (k - 1.0)

    def support(self):
        return (self.scale, math.inf)


@dataclass(frozen=True)
class Lognormal(DistributionSpec):
    log_mean: float = 0.0
    log_std: float = 1.0

    family = Family.LOGNORMAL

    def __post_init__(self):
        if not (self.log_std > 0):
            raise ConfigError(f"lognormal log_std must be > 0, got {self.log_std}")

    def pdf(self, x):
        return stats.lognorm.pdf(x, self.log_std, scale=math.exp(self.log_mean))

    def cdf(self, x):
        return stats.lognorm.cdf(x, self.log_std, scale=math.exp(self.log_mean))

    def sf(self, x):
        return stats.lognorm.sf(x, self.log_std, scale=math.exp(self.log_mean))

    def sample(self, rng, size=None):
        return rng.lognormal(self.log_mean, self.log_std, size)

    def mean(self):
        return math.exp(self.log_mean + 0.5 * self.log_std**2)

    def variance(self):
        s2 = self.log_std**2
        return (math.exp(s2) - 1.0) * math.exp(2.0 * self.log_mean + s2)

    def excess_mean(self, t):
        if t <= 0:
            return self.mean() - t
        mu, s = self.log_mean, self.log_std
        d = (mu - math.log(t)) / s
        return self.mean() * stats.norm.cdf(d + s) - t * stats.norm.cdf(d)

    def support(self):
        return (0.0, math.inf)


@dataclass(frozen=True)
class PointMassShift(DistributionSpec):
    """Law of ``base + offset``; a point mass at ``offset`` when no base is given."""

    offset: float = 0.0
    base: Optional[DistributionSpec] = None

    family = Family.POINT_MASS_SHIFT

    def __post_init__(self):
        if not math.isfinite(self.offset):
            raise ConfigError("shift offset must be finite")

    def pdf(self, x):
        if self.base is None:
            raise ConfigError("point mass has no density")
        return self.base.pdf(np.asarray(x) - self.offset)

    def cdf(self, x):
        if self.base is None:
            return np.where(np.asarray(x) >= self.offset, 1.0, 0.0)
        return self.base.cdf(np.asarray(x) - self.offset)

    def sf(self, x):
        if self.base is None:
            return np.where(np.asarray(x) >= self.offset, 0.0, 1.0)
        return self.base.sf(np.asarray(x) - self.offset)

    def sample(self, rng, size=None):
        if self.base is None:
            return np.full(size if size is not None else (), self.offset)
        return self.base.sample(rng, size) + self.offset

    def mean(self):
        return self.offset + (self.base.mean() if self.base is not None else 0.0)

    def variance(self):
        return self.base.variance() if self.base is not None else 0.0

    def excess_mean(self, t):
        if self.base is None:
            return max(self.offset - t, 0.0)
        return self.base.excess_mean(t - self.offset)

    def support(self):
        if self.base is None:
            return (self.offset, self.offset)
        lo, hi = self.base.support()
        return (lo + self.offset, hi + self.offset)


_STATIC_TAILS = {
    Family.GAUSSIAN: TailClass.LIGHT,
    Family.LAPLACE: TailClass.LIGHT,
    Family.EXPONENTIAL: TailClass.LIGHT,
    Family.PARETO: TailClass.HEAVY_SUBEXPONENTIAL,
    Family.LOGNORMAL: TailClass.HEAVY_SUBEXPONENTIAL,
}


def classify_tail(spec) -> TailClass:
    """Static per-family tail class; a shift never changes the tail."""
    if isinstance(spec, EmpiricalLaw):
        return spec.tail
    if isinstance(spec, PointMassShift):
        return TailClass.LIGHT if spec.base is None else classify_tail(spec.base)
    try:
        return _STATIC_TAILS[spec.family]
    except (AttributeError, KeyError):
        raise ConfigError(f"unknown family {spec!r}")


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    """Increment law represented by an exact sampler plus a cached sample.

    The CDF is the step function of the sorted cached sample; the partial
    mean E[(Z - t)+] comes from suffix sums over the same sample.  Used for
    log-likelihood-ratio laws with no closed form.
    """

    sampler: Callable[[np.random.Generator, int], np.ndarray]
    sorted_sample: np.ndarray
    tail: TailClass = TailClass.LIGHT

    def __post_init__(self):
        s = np.sort(np.asarray(self.sorted_sample, dtype=float))
        object.__setattr__(self, "sorted_sample", s)

    @cached_property
    def _suffix_sums(self) -> np.ndarray:
        # _suffix_sums[i] = sum(sorted_sample[i:])
        out = np.zeros(len(self.sorted_sample) + 1)
        out[:-1] = np.cumsum(self.sorted_sample[::-1])[::-1]
        return out

    def cdf(self, x):
        n = len(self.sorted_sample)
        return np.searchsorted(self.sorted_sample, np.asarray(x), side="right") / n

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def sample(self, rng, size=None):
        n = size if size is not None else 1
        out = self.sampler(rng, int(np.prod(n)) if not np.isscalar(n) else n)
        return out if size is not None else float(out[0])

    def mean(self):
        return float(np.mean(self.sorted_sample))

    def variance(self):
        return float(np.var(self.sorted_sample))

    def std(self):
        return math.sqrt(self.variance())

    def excess_mean(self, t):
        n = len(self.sorted_sample)
        i = int(np.searchsorted(self.sorted_sample, t, side="left"))
        return float(self._suffix_sums[i] - t * (n - i)) / n

    def support(self):
        return (float(self.sorted_sample[0]), math.inf)


Law = Union[DistributionSpec, EmpiricalLaw]


def _supports_match(f0: DistributionSpec, f1: DistributionSpec) -> bool:
    lo0, hi0 = f0.support()
    lo1, hi1 = f1.support()
    return math.isclose(lo0, lo1, abs_tol=1e-12) and hi0 == hi1


def _llr_closed_form(f0: DistributionSpec, f1: DistributionSpec, regime: DistributionSpec):
    """Closed-form law of log(f1(X)/f0(X)) for pairs where it is affine in a
    standard variable, with X drawn from ``regime``.  Returns None otherwise."""
    if isinstance(f0, Gaussian) and isinstance(f1, Gaussian) and isinstance(regime, Gaussian):
        if math.isclose(f0.variance_value, f1.variance_value):
            v = f0.variance_value
            a = (f1.mean_value - f0.mean_value) / v
            c = (f0.mean_value**2 - f1.mean_value**2) / (2.0 * v)
            # Z = a X + c
            return Gaussian(a * regime.mean_value + c, a**2 * regime.variance_value)
    if isinstance(f0, Pareto) and isinstance(f1, Pareto) and isinstance(regime, Pareto):
        if math.isclose(f0.scale, f1.scale) and f0.shape > f1.shape:
            # Z = log(K1/K0) + (K0-K1) log(X/x_m); log(X/x_m) ~ Exp(K_regime)
            s = f0.shape - f1.shape
            c = math.log(f1.shape / f0.shape)
            return PointMassShift(offset=c, base=Exponential(rate=regime.shape / s))
    if isinstance(f0, Exponential) and isinstance(f1, Exponential) and isinstance(regime, Exponential):
        if f0.rate > f1.rate:
            s = f0.rate - f1.rate
            c = math.log(f1.rate / f0.rate)
            return PointMassShift(offset=c, base=Exponential(rate=regime.rate / s))
    if isinstance(f0, Lognormal) and isinstance(f1, Lognormal) and isinstance(regime, Lognormal):
        if math.isclose(f0.log_std, f1.log_std):
            v = f0.log_std**2
            a = (f1.log_mean - f0.log_mean) / v
            c = (f0.log_mean**2 - f1.log_mean**2) / (2.0 * v)
            # Z = a log(X) + c with log(X) normal
            return Gaussian(a * regime.log_mean + c, a**2 * regime.log_std**2)
    return None


def llr_increment_law(
    f0: DistributionSpec,
    f1: DistributionSpec,
    under="pre",
    *,
    sample_size: int = 200_000,
    seed: int = 0,
) -> Law:
    """Law of the increment Z = log(f1(X)/f0(X)).

    ``under`` selects the regime X is drawn from: ``"pre"`` for f0, ``"post"``
    for f1, or any explicit :class:`DistributionSpec`.  Returns a closed-form
    spec when the ratio is affine in a standard variable (Gaussian pair with
    equal variances, Pareto pair with common scale, exponential and lognormal
    analogues); otherwise an :class:`EmpiricalLaw` backed by exact sampling.

    Raises :class:`DomainMismatchError` when f0 and f1 have different supports.
    """
    if not _supports_match(f0, f1):
        raise DomainMismatchError(
            f"f0 support {f0.support()} differs from f1 support {f1.support()}"
        )
    if under == "pre":
        regime = f0
    elif under == "post":
        regime = f1
    else:
        regime = under

    if f0 == f1:
        return PointMassShift(offset=0.0)

    closed = _llr_closed_form(f0, f1, regime)
    if closed is not None:
        return closed

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        x = regime.sample(rng, n)
        with np.errstate(divide="ignore"):
            return np.log(f1.pdf(x)) - np.log(f0.pdf(x))

    base = sampler(np.random.default_rng(seed), sample_size)
    if not np.all(np.isfinite(base)):
        raise DomainMismatchError("log-likelihood ratio not finite on the sampled support")
    # The log-likelihood transform lightens tails for every supported pair.
    return EmpiricalLaw(sampler=sampler, sorted_sample=base, tail=TailClass.LIGHT)


def moment_matched_spec(
    family: Family | str,
    mean: float,
    variance: float,
    *,
    shape: float | None = None,
) -> DistributionSpec:
    """Spec from ``family`` with the requested first two moments.

    Families with two free location/scale parameters are matched directly;
    Exponential, Pareto and Lognormal keep their natural shape (``shape`` is
    the Pareto K or the lognormal log-std) and are scaled then shifted, which
    preserves the tail index.
    """
    family = Family(family)
    if variance <= 0:
        raise InfeasibleError("variance must be > 0")
    if family is Family.GAUSSIAN:
        spec = Gaussian(mean, variance)
    elif family is Family.LAPLACE:
        spec = Laplace(mean, math.sqrt(variance / 2.0))
    elif family is Family.EXPONENTIAL:
        rate = 1.0 / math.sqrt(variance)
        spec = PointMassShift(offset=mean - 1.0 / rate, base=Exponential(rate))
    elif family is Family.PARETO:
        k = 2.1 if shape is None else shape
        if k <= 2:
            raise InfeasibleError(f"pareto needs shape > 2 for finite variance, got {k}")
        xm = math.sqrt(variance * (k - 1.0) ** 2 * (k - 2.0) / k)
        base = Pareto(k, xm)
        spec = PointMassShift(offset=mean - base.mean(), base=base)
    elif family is Family.LOGNORMAL:
        s = 1.0 if shape is None else shape
        if s <= 0:
            raise InfeasibleError("lognormal log-std must be > 0")
        es2 = math.exp(s**2)
        mu = 0.5 * math.log(variance / ((es2 - 1.0) * es2))
        base = Lognormal(mu, s)
        spec = PointMassShift(offset=mean - base.mean(), base=base)
    else:
        raise ConfigError(f"cannot moment-match family {family}")
    assert math.isclose(spec.mean(), mean, rel_tol=0, abs_tol=1e-9 * max(1, abs(mean)))
    assert math.isclose(spec.variance(), variance, rel_tol=1e-9)
    return spec


@dataclass(frozen=True)
class IncrementSpec:
    """Recipe for a detector increment: a log-likelihood ratio of two
    observation laws, or the shifted observation itself (X - d)."""

    kind: str  # "llr" | "shifted"
    under: str = "pre"  # "pre" | "post"
    f0: Optional[DistributionSpec] = None
    f1: Optional[DistributionSpec] = None
    observation: Optional[DistributionSpec] = None
    shift: Optional[float] = None

    def __post_init__(self):
        if self.kind == "llr":
            if self.f0 is None or self.f1 is None:
                raise ConfigError("llr increment needs f0 and f1")
        elif self.kind == "shifted":
            if self.observation is None or self.shift is None:
                raise ConfigError("shifted increment needs an observation law and a shift")
            if not math.isfinite(self.shift):
                raise ConfigError("shift must be finite")
        else:
            raise ConfigError(f"unknown increment kind {self.kind!r}")
        if self.under not in ("pre", "post"):
            raise ConfigError(f"regime must be 'pre' or 'post', got {self.under!r}")

    def law(self) -> Law:
        if self.kind == "llr":
            return llr_increment_law(self.f0, self.f1, under=self.under)
        return PointMassShift(offset=-self.shift, base=self.observation)

    def mean(self) -> float:
        return self.law().mean()

    def variance(self) -> float:
        return self.law().variance()

    def check_drift_signs(self) -> None:
        """Enforce negative pre-change and positive post-change drift."""
        m = self.mean()
        if self.under == "pre" and not m < 0:
            raise ConfigError(f"pre-change increment mean must be < 0, got {m:.6g}")
        if self.under == "post" and not m > 0:
            raise ConfigError(f"post-change increment mean must be > 0, got {m:.6g}")
