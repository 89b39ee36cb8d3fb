"""Distribution of the sojourn above the sensor threshold (batch size).

While a sensor's statistic sits at or above its threshold the sensor
transmits; the run of such slots within one excursion is the batch of the
compound-Poisson exceedance process.  Light-tailed increments get a
closed-form model: the conditional probability that the walk falls back
below the threshold within j slots, given it entered with overshoot x, is
approximated by the first-passage law of a Brownian motion with the
increment drift and variance started at x, and the overshoot is mixed out
with its exponential fit.  Heavy-tailed increments get an empirical batch
law from simulated excursions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .distributions import Law
from .errors import InfeasibleError, ModelViolationError, PrecisionError
from .renewal import FptLaw, OvershootLaw

__all__ = [
    "BatchLaw",
    "ExceedanceModel",
    "batch_law_light",
    "batch_law_heavy",
    "exceedance_model",
    "bm_return_cdf",
]

_CCDF_FLOOR = 1e-4
# Siegmund's continuity correction: a slot-sampled walk crossing a barrier
# behaves like a Brownian motion crossing a barrier moved 0.5826 increment
# standard deviations away, because sub-slot dips below the level do not end
# the discrete sojourn.
_CONTINUITY = 0.5826


@dataclass(frozen=True, eq=False)
class BatchLaw:
    """Law of the batch size on {1, 2, ...} up to a horizon.

    ``ccdf[j]`` is P(batch > j) for j = 0..N, so ``ccdf[0]`` is 1 and the
    last entry is the unmodelled tail mass.
    """

    ccdf: np.ndarray
    construction: str  # "brownian_mixed" | "monte_carlo"
    ci_halfwidth: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.ccdf, dtype=float)
        if abs(c[0] - 1.0) > 1e-9 or np.any(np.diff(c) > 1e-12):
            raise InfeasibleError("batch CCDF must start at 1 and be nonincreasing")
        object.__setattr__(self, "ccdf", c)

    @property
    def horizon(self) -> int:
        return len(self.ccdf) - 1

    @property
    def tail_mass(self) -> float:
        return float(self.ccdf[-1])

    def pmf(self) -> np.ndarray:
        """P(batch = j) for j = 0..N; the tail remainder is not included."""
        out = np.zeros(len(self.ccdf))
        out[1:] = -np.diff(self.ccdf)
        return out

    def mean(self) -> float:
        """Mean batch size over the modelled horizon (a lower bound if
        tail mass remains)."""
        return float(self.ccdf[:-1].sum() + self.ccdf[-1])

    def sf(self, j) -> np.ndarray:
        j = np.minimum(np.asarray(j, dtype=int), self.horizon)
        return self.ccdf[j]


@dataclass(frozen=True)
class ExceedanceModel:
    """Compound-Poisson description of pooled sensor exceedances."""

    rate: float  # per-sensor batch arrival rate
    batch: BatchLaw
    sensors: int
    pooled_rate: float

    def __post_init__(self):
        if self.sensors < 1:
            raise InfeasibleError("need at least one sensor")
        if not math.isclose(self.pooled_rate, self.sensors * self.rate, rel_tol=1e-12):
            raise InfeasibleError("pooled rate must be sensors * per-sensor rate")


def bm_return_cdf(j, x, drift: float, variance: float):
    """P(first return to the threshold <= j) for a Brownian motion with the
    given (negative) drift and variance, started at overshoot x > 0.

    Standard first-passage law of BM to a lower level; the reflected term is
    evaluated in log space because exp(-2*drift*x/var) overflows on its own.
    """
    j = np.asarray(j, dtype=float)
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(variance * j)
    with np.errstate(divide="ignore", invalid="ignore"):
        main = stats.norm.cdf((-x - drift * j) / sd)
        reflected = np.exp(
            -2.0 * drift * x / variance + stats.norm.logcdf((-x + drift * j) / sd)
        )
    out = np.where(j > 0, main + reflected, 0.0)
    return np.clip(np.where(x <= 0, np.where(j > 0, 1.0, 0.0), out), 0.0, 1.0)


def batch_law_light(
    overshoot: OvershootLaw,
    drift: float,
    variance: float,
    horizon: Optional[int] = None,
    *,
    quad_order: int = 96,
) -> BatchLaw:
    """Batch law for light tails: Brownian return time mixed over the
    exponential overshoot fit.

    P(batch <= j) = integral of bm_return_cdf(j, x) against the exponential
    overshoot density, evaluated with Gauss-Laguerre quadrature; the start
    point carries the continuity correction for slot sampling.  Without an
    explicit horizon the table extends until the CCDF drops below 1e-4.
    """
    if not (drift < 0):
        raise ModelViolationError(f"batch model needs negative drift, got {drift}")
    if not (variance > 0):
        raise ModelViolationError("variance must be > 0")
    if overshoot.kind != "exponential":
        raise ModelViolationError("light-tail batch law mixes over an exponential overshoot fit")
    mean_over = overshoot.mean
    us, ws = np.polynomial.laguerre.laggauss(quad_order)
    xs = mean_over * us + _CONTINUITY * math.sqrt(variance)  # corrected start points

    def ccdf_at(js: np.ndarray) -> np.ndarray:
        g = bm_return_cdf(js[:, None], xs[None, :], drift, variance)
        return 1.0 - g @ ws

    if horizon is not None:
        js = np.arange(horizon + 1)
        ccdf = np.concatenate(([1.0], ccdf_at(js[1:].astype(float))))
    else:
        chunks = [np.array([1.0])]
        n, lo = 64, 1
        total = 0.0
        while True:
            js = np.arange(lo, lo + n, dtype=float)
            c = ccdf_at(js)
            chunks.append(c)
            if c[-1] < _CCDF_FLOOR or lo + n > 1_000_000:
                break
            lo += n
            n *= 2
        ccdf = np.concatenate(chunks)
    # quadrature jitter can leave tiny non-monotone wiggles near the floor
    ccdf = np.minimum.accumulate(np.clip(ccdf, 0.0, 1.0))
    return BatchLaw(ccdf=ccdf, construction="brownian_mixed")


class ExcursionKernel:
    """One-step kernel of the walk on [0, top] with absorbing zero, split at
    the sensor threshold.

    Cells of width h tile (0, top) with the threshold on a cell edge; state
    zero is exact.  Mass beyond the top lands in the last cell, so the top
    pad must be generous enough for the increment tail (fine for light
    tails).  Exposes the in/out blocks needed for sojourn and re-entry
    bookkeeping above the threshold.
    """

    def __init__(self, law: Law, gamma: float, nodes_below: int = 400, pad: Optional[float] = None):
        if law.mean() >= 0:
            raise ModelViolationError("excursion kernel requires negative drift")
        sd = math.sqrt(law.variance())
        if pad is None:
            pad = 10.0 * sd
        self.law = law
        self.gamma = float(gamma)
        self.h = gamma / nodes_below
        self.n_low = int(nodes_below)
        self.n_high = int(math.ceil(pad / self.h))
        n = self.n_low + self.n_high
        self.top = n * self.h
        self.mids = (np.arange(n) + 0.5) * self.h
        edges = np.arange(n + 1) * self.h
        cdf_at = np.asarray(law.cdf(edges[None, :] - self.mids[:, None]), dtype=float)
        self.to_zero = cdf_at[:, 0]
        self.cells = np.diff(cdf_at, axis=1)
        self.cells[:, -1] += np.asarray(law.sf(self.top - self.mids), dtype=float)
        self.low = slice(0, self.n_low)
        self.high = slice(self.n_low, n)
        self._edges = edges
        from scipy.linalg import lu_factor

        self._lu_low = lu_factor(np.eye(self.n_low) - self.cells[self.low, self.low])

    def solve_low(self, rhs: np.ndarray, transposed: bool = False) -> np.ndarray:
        """(I - K_low,low)^-1 applied to a column (or row, if transposed) vector."""
        from scipy.linalg import lu_solve

        return lu_solve(self._lu_low, rhs, trans=1 if transposed else 0)

    def entry_weights(self, overshoot: OvershootLaw) -> np.ndarray:
        """Exponential-overshoot mass per above-threshold cell (tail into the top)."""
        if overshoot.kind != "exponential":
            raise ModelViolationError("entry mixing needs an exponential overshoot fit")
        rel = (self._edges[self.n_low :] - self.gamma) / overshoot.mean
        w = np.exp(-rel[:-1]) - np.exp(-rel[1:])
        w[-1] += math.exp(-rel[-1])
        return w

    def burst_profile(self, overshoot: OvershootLaw, tol: float = 1e-7):
        """Expected number of contiguous above-threshold bursts of each
        length in one excursion, resolved by length.

        Entry states of the first burst mix the overshoot fit; every drop
        below the threshold either drains to zero or re-enters, with the
        re-entry flux given by the below-threshold Green function.  Returns
        (counts, total) where counts[j] is the expected number of bursts of
        length exactly j >= 1.
        """
        from scipy.linalg import lu_factor, lu_solve

        k_hh = self.cells[self.high, self.high]
        k_hl = self.cells[self.high, self.low]
        k_lh = self.cells[self.low, self.high]
        lu_high = lu_factor(np.eye(self.n_high) - k_hh)

        m = self.entry_weights(overshoot)
        entries = m.copy()
        for _ in range(10_000):
            # exit flux to below-threshold cells over the whole burst, then
            # the next burst's entry distribution
            exit_low = lu_solve(lu_high, m, trans=1) @ k_hl
            m = self.solve_low(exit_low, transposed=True) @ k_lh
            entries += m
            if m.sum() < tol:
                break
        survive = [entries.sum()]
        u = np.ones(self.n_high)
        while True:
            u = k_hh @ u
            c = float(entries @ u)
            survive.append(c)
            if c < tol * survive[0] or len(survive) > 200_000:
                break
        survive = np.asarray(survive)
        counts = survive[:-1] - survive[1:]  # bursts of length exactly 1, 2, ...
        return counts, float(survive[0])


def cluster_law_light(
    law: Law,
    gamma: float,
    overshoot: OvershootLaw,
    *,
    nodes_below: int = 400,
    pad: Optional[float] = None,
    ccdf_floor: float = _CCDF_FLOOR,
    max_count: int = 100_000,
) -> BatchLaw:
    """Law of all transmitting slots in one excursion, re-entries included.

    Exact count distribution for the discretized walk: zero is absorbing and
    P(remaining above-threshold slots = j | state) satisfies a recursion
    solved with one factorization of the below-threshold block.  The start
    state mixes the exponential overshoot fit over the above-threshold
    cells; the crossing slot itself counts, so the cluster is 1 + count.
    """
    kern = ExcursionKernel(
        law, gamma, nodes_below=nodes_below, pad=pad if pad is not None else None
    )
    cells, to_zero = kern.cells, kern.to_zero
    low, high = kern.low, kern.high
    w = kern.entry_weights(overshoot)

    v_low = kern.solve_low(to_zero[low])
    v_high = to_zero[high] + cells[high, low] @ v_low
    ccdf = [1.0]
    remaining = 1.0 - float(w @ v_high)
    for _ in range(max_count):
        ccdf.append(remaining)
        if remaining < ccdf_floor:
            break
        rhs = cells[:, high] @ v_high
        v_low = kern.solve_low(rhs[low])
        v_high = rhs[high] + cells[high, low] @ v_low
        remaining -= float(w @ v_high)
    c = np.minimum.accumulate(np.clip(np.asarray(ccdf), 0.0, 1.0))
    return BatchLaw(ccdf=c, construction="kernel_exact")


def batch_law_heavy(
    law: Law,
    gamma: float,
    excursions: int = 20_000,
    horizon: Optional[int] = None,
    *,
    seed: int = 0,
) -> BatchLaw:
    """Empirical batch law from simulated excursions of the pre-change walk.

    Counts every transmitting slot of the excursion (re-entries included).
    Reports a 95% binomial half-width per CCDF point.  Fewer than 1000
    excursions cannot pin the tail down and raise a precision error.
    """
    if excursions < 1000:
        raise PrecisionError(f"{excursions} excursions is too few for a batch law")
    from .sim import measure_excursions

    exc = measure_excursions(law, gamma, excursions, seed=seed)
    eta = exc.cluster_size.astype(int)
    top = int(eta.max()) if horizon is None else horizon
    js = np.arange(top + 1)
    counts = np.bincount(np.minimum(eta, top + 1), minlength=top + 2)
    above = excursions - np.cumsum(counts)[: top + 1]  # P(eta > j) numerators
    ccdf = above / excursions
    ccdf[0] = 1.0  # batch >= 1 by construction
    hw = 1.96 * np.sqrt(ccdf * (1.0 - ccdf) / excursions)
    return BatchLaw(ccdf=ccdf, construction="monte_carlo", ci_halfwidth=hw)


def exceedance_model(sensors: int, fpt: FptLaw, batch: BatchLaw) -> ExceedanceModel:
    """Pooled compound-Poisson model: independent per-sensor exceedance
    processes superpose to rate sensors * lambda."""
    return ExceedanceModel(
        rate=fpt.lambda_gamma,
        batch=batch,
        sensors=sensors,
        pooled_rate=sensors * fpt.lambda_gamma,
    )
