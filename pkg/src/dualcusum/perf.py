"""Analytical false-alarm probability and mean detection delay.

False alarm: sensor exceedances form a compound-Poisson stream (rate
lambda per sensor, batch = sojourn above the sensor threshold).  An alarm
before the change either happens inside a batch (probability ptilde per
batch) or is driven by channel noise alone (rate lambda0).  For a
geometric change time with parameter rho these combine into a closed form.

Delay: after the change every sensor statistic climbs at its post-change
drift; sensors join the transmitting set one by one at transition epochs,
each join raising the fusion drift.  The expected epochs come from a
Gaussian first-passage approximation for the minimum of the remaining
climb times, and the delay is the epoch at which the fusion statistic's
remaining climb fits inside the current phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .batch import (
    BatchLaw,
    ExceedanceModel,
    ExcursionKernel,
    batch_law_heavy,
    batch_law_light,
    cluster_law_light,
    exceedance_model,
)
from .cusum import fusion_increment
from .distributions import Family, Gaussian, Law, PointMassShift, TailClass, classify_tail
from .errors import InfeasibleError, ModelViolationError, PrecisionError
from .renewal import OvershootLaw, solve_fpt_survival, solve_mean_fpt, solve_mean_overshoot
from .report import PerfReport
from .sim import NetworkConfig

__all__ = [
    "FalseAlarmInputs",
    "DelayInputs",
    "PerfReport",
    "pfa_geometric",
    "ptilde_light",
    "ptilde_heavy",
    "lambda0",
    "mean_min_fpt",
    "edd_approx",
    "fusion_drift",
    "evaluate",
]


@dataclass(frozen=True)
class FalseAlarmInputs:
    """Rates feeding the geometric-change false-alarm formula."""

    lambda_gamma: float  # per-sensor batch rate
    lambda0: float  # outside-batch false-alarm rate
    ptilde: float  # within-batch false-alarm probability
    sensors: int
    rho: float

    def __post_init__(self):
        if self.lambda_gamma < 0 or self.lambda0 < 0:
            raise InfeasibleError("rates must be >= 0")
        if not (0.0 <= self.ptilde <= 1.0):
            raise InfeasibleError("ptilde must be a probability")
        if self.sensors < 1:
            raise InfeasibleError("need at least one sensor")
        if not (0.0 < self.rho < 1.0):
            raise InfeasibleError("rho must lie in (0, 1)")


def pfa_geometric(inputs: FalseAlarmInputs) -> float:
    """P(alarm before a Geom(rho) change time).

    With alarm opportunities arriving at combined exponential rate
    c = lambda0 + lambda * L * ptilde, conditioning on the change time gives
    P_FA = 1 - exp(-c) rho / (1 - exp(-c)(1 - rho)).
    """
    c = inputs.lambda0 + inputs.lambda_gamma * inputs.sensors * inputs.ptilde
    e = math.exp(-c)
    return 1.0 - e * inputs.rho / (1.0 - e * (1.0 - inputs.rho))


def lambda0(idle_law: Law, beta: float, h: Optional[float] = None) -> float:
    """Rate of noise-only false alarms: 1 / mean FPT of the idle fusion chain."""
    _, fpt = solve_mean_fpt(idle_law, beta, h)
    return fpt.lambda_gamma


def ptilde_light(
    batch: BatchLaw, one_sender_law: Law, beta: float, h: Optional[float] = None
) -> float:
    """Within-batch false-alarm probability for light tails.

    One sensor transmits for the batch duration; the fusion chain then sees
    amplitude-plus-noise increments, and an alarm within a batch of size i
    is a first passage over beta within i slots:
    ptilde = sum_i P(batch = i) P(tau_beta <= i).
    """
    if batch.tail_mass > 1e-3:
        raise PrecisionError(
            f"batch law leaves {batch.tail_mass:.2e} unmodelled tail mass; extend the horizon"
        )
    survive = solve_fpt_survival(one_sender_law, beta, h=h, n_steps=batch.horizon)
    pmf = batch.pmf()
    return float(pmf[1:] @ (1.0 - survive[1:]))


def ptilde_light_bursts(
    law: Law,
    gamma: float,
    overshoot: OvershootLaw,
    one_sender_law: Law,
    beta: float,
    h: Optional[float] = None,
) -> float:
    """Burst-resolved within-excursion alarm probability for light tails.

    One excursion transmits in one or more contiguous bursts separated by
    short dips below the threshold; the fusion chain loses its headway in a
    dip (its no-sender drift is strongly negative), so each burst gets an
    independent alarm chance and the expected alarm count per excursion sums
    burst-length-resolved first-passage probabilities.
    """
    kern = ExcursionKernel(law, gamma)
    counts, _ = kern.burst_profile(overshoot)
    survive = solve_fpt_survival(one_sender_law, beta, h=h, n_steps=len(counts))
    return float(min(counts @ (1.0 - survive[1 : len(counts) + 1]), 1.0))


def ptilde_heavy(
    batch: BatchLaw,
    fusion_drifts: Sequence[float],
    m_star: int,
    beta: float,
    model: ExceedanceModel,
) -> float:
    """Within-batch false-alarm probability for heavy tails.

    Heavy-tail batches are long, so batches from different sensors overlap.
    An alarm needs at least m_star sensors above threshold at once (the
    fewest that make the fusion drift positive) sustained for the climb time
    q = beta / drift[m_star].  For a pair of sensors, batches qualify when
    their joint residual life from the join epoch covers q; integrating the
    relative start offset gives a qualifying-pair rate of
    lambda^2 * 2 * P(D >= q) * E[(D - q)+] per pair, which is folded back
    into the per-batch probability the false-alarm formula expects.  The
    tagged sensor counts toward m_star.
    """
    if m_star > model.sensors:
        raise InfeasibleError("m_star cannot exceed the number of sensors")
    mu_m = fusion_drifts[m_star]
    if mu_m <= 0:
        raise InfeasibleError("fusion drift at m_star sensors must be positive")
    q = beta / mu_m
    j0 = max(int(math.ceil(q)), 1)
    p_long = float(batch.sf(j0 - 1))  # P(duration >= q)
    if m_star == 1:
        return p_long
    js = np.arange(j0, batch.horizon + 1)
    excess = float(batch.ccdf[js].sum()) if len(js) else 0.0  # E[(duration - q)+]
    nu = (model.sensors - 1) * model.rate * p_long * excess
    return float(stats.poisson.sf(m_star - 2, nu))


def mean_min_fpt(k: int, x: float, drift: float, variance: float, tol: float = 1e-12) -> float:
    """Expected minimum of k independent climb times to level x.

    Each climb time is approximated as Gaussian with mean x/drift and
    variance x*variance/drift^3, and E[min] is the series
    sum over i >= 0 of P(climb > i)^k, truncated when terms drop below tol.
    Nonpositive x means the level is already reached.
    """
    if k < 1:
        raise InfeasibleError("need k >= 1")
    if x <= 0.0:
        return 0.0
    if drift <= 0:
        raise ModelViolationError("post-change drift must be positive")
    mean = x / drift
    sd = math.sqrt(variance * x / drift**3)
    total = 0.0
    start, block = 0, 256
    while True:
        i = np.arange(start, start + block, dtype=float)
        terms = stats.norm.sf((i - mean) / sd) ** k
        total += float(terms.sum())
        if (terms[-1] < tol and start > mean) or start > mean + 60.0 * sd + 1e6:
            break
        start += block
    return total


@dataclass(frozen=True)
class DelayInputs:
    """Everything the delay recursion needs."""

    drift: float  # post-change sensor increment mean, > 0
    variance: float  # post-change sensor increment variance
    gamma: float
    beta: float
    sensors: int
    fusion_drifts: tuple  # drift of the fusion chain with l = 0..sensors senders

    def __post_init__(self):
        if not (self.drift > 0):
            raise InfeasibleError("post-change sensor drift must be > 0")
        if len(self.fusion_drifts) != self.sensors + 1:
            raise InfeasibleError("need fusion drifts for 0..sensors senders")
        if np.any(np.diff(self.fusion_drifts) <= 0):
            raise InfeasibleError("fusion drift must increase with each sender")

    @property
    def m_star(self) -> int:
        """Fewest transmitting sensors giving the fusion chain positive drift."""
        for l, mu in enumerate(self.fusion_drifts):
            if mu > 0:
                return l
        raise InfeasibleError("fusion drift never becomes positive")


def edd_approx(inputs: DelayInputs, *, rule: str = "phase") -> float:
    """Mean detection delay from the transition-epoch recursion.

    Thresholds shrink as the remaining sensors' statistics climb during
    earlier phases: gamma_l = gamma_{l+1} - drift * m(l+1, gamma_{l+1}).
    Once some m(k, gamma_k) <= 1 the remaining epochs (down to the second
    sensor) are immediate and their terms are zeroed.  The alarm falls in
    the first phase whose duration exceeds the fusion chain's remaining
    climb time; ``rule="phase"`` compares against the phase duration
    E[t_{i+1}] - E[t_i], ``rule="absolute"`` against E[t_{i+1}] alone.
    """
    if rule not in ("phase", "absolute"):
        raise InfeasibleError(f"unknown rule {rule!r}")
    L = inputs.sensors
    mu, s2 = inputs.drift, inputs.variance
    ms = np.zeros(L + 1)  # ms[l] = m(l, gamma_l)
    g = inputs.gamma
    clamped = False
    for l in range(L, 0, -1):
        if clamped and l >= 2:
            m_l = 0.0
        else:
            m_l = mean_min_fpt(l, g, mu, s2)
            if m_l <= 1.0 and l >= 2:
                clamped = True
                m_l = 0.0
        ms[l] = m_l
        g -= mu * m_l
    durations = ms[L:0:-1]  # phase i lasts durations[i] = E[t_{i+1}] - E[t_i]
    epochs = np.concatenate(([0.0], np.cumsum(durations)))  # epochs[i] = E[t_i]

    fbar = 0.0  # mean fusion statistic just before the next epoch
    for i in range(1, L + 1):
        mu_i = inputs.fusion_drifts[i]
        if mu_i > 0:
            climb = (inputs.beta - fbar) / mu_i
            limit = durations[i] if i < L else math.inf
            if rule == "absolute" and i < L:
                limit = epochs[i + 1]
            if climb < limit:
                return float(epochs[i] + climb)
            fbar += mu_i * durations[i] if i < L else 0.0
    raise InfeasibleError("fusion threshold unreachable under the recursion")


def fusion_drift(cfg: NetworkConfig, senders: int) -> float:
    """Mean fusion increment with ``senders`` sensors transmitting.

    Closed form for Gaussian channel noise; numerical quadrature against
    the noise density otherwise.
    """
    model = cfg.fusion_model()
    if model.kind == "nonparametric":
        return senders * cfg.amplitude + cfg.mac_noise.mean() - model.shift
    if isinstance(cfg.mac_noise, Gaussian):
        bi = model.bias
        return bi * (senders * cfg.amplitude - bi / 2.0) / cfg.mac_noise.variance_value
    lo, hi = cfg.mac_noise.support()
    val, _ = integrate.quad(
        lambda v: fusion_increment(senders * cfg.amplitude + v, model) * cfg.mac_noise.pdf(v),
        lo,
        hi,
    )
    return val


def _heavy_model(law: Law) -> bool:
    """Heavy-tail false-alarm machinery applies to Pareto-type increments;
    lognormal behaves better under the light-tail batch model."""
    if classify_tail(law) is not TailClass.HEAVY_SUBEXPONENTIAL:
        return False
    base = law
    while isinstance(base, PointMassShift) and base.base is not None:
        base = base.base
    return getattr(base, "family", None) is Family.PARETO


def evaluate(
    cfg: NetworkConfig,
    *,
    pfa_model: str = "auto",
    edd_rule: str = "phase",
    excursions: int = 20_000,
    h: Optional[float] = None,
) -> PerfReport:
    """Analytical performance report for a network configuration."""
    pre = cfg.sensor_increment_law("pre")
    post = cfg.sensor_increment_law("post")
    if pre.mean() >= 0:
        raise ModelViolationError("pre-change sensor increment drift must be negative")

    _, fpt = solve_mean_fpt(pre, cfg.gamma, h)
    if pfa_model == "auto":
        pfa_model = "heavy" if _heavy_model(pre) else "light"
    if pfa_model == "light":
        _, mean_over = solve_mean_overshoot(pre, cfg.gamma, h)
        over = OvershootLaw(mean=mean_over, kind="exponential")
        # energy needs every transmitting slot; the alarm probability is
        # resolved per contiguous burst (the fusion chain resets in the dips)
        batch = cluster_law_light(pre, cfg.gamma, over)
        ptilde = ptilde_light_bursts(pre, cfg.gamma, over, cfg.fusion_increment_law(1), cfg.beta, h)
    elif pfa_model == "heavy":
        batch = batch_law_heavy(pre, cfg.gamma, excursions=excursions, seed=cfg.seed)
        drifts = tuple(fusion_drift(cfg, l) for l in range(cfg.sensors + 1))
        model = exceedance_model(cfg.sensors, fpt, batch)
        m_star = next(l for l, mu in enumerate(drifts) if mu > 0)
        ptilde = ptilde_heavy(batch, drifts, m_star, cfg.beta, model)
    else:
        raise InfeasibleError(f"unknown pfa model {pfa_model!r}")

    lam0 = lambda0(cfg.fusion_increment_law(0), cfg.beta, h)
    pfa = pfa_geometric(
        FalseAlarmInputs(
            lambda_gamma=fpt.lambda_gamma,
            lambda0=lam0,
            ptilde=ptilde,
            sensors=cfg.sensors,
            rho=cfg.rho,
        )
    )

    fusion_drifts = tuple(fusion_drift(cfg, l) for l in range(cfg.sensors + 1))
    edd = edd_approx(
        DelayInputs(
            drift=post.mean(),
            variance=post.variance(),
            gamma=cfg.gamma,
            beta=cfg.beta,
            sensors=cfg.sensors,
            fusion_drifts=fusion_drifts,
        ),
        rule=edd_rule,
    )
    # energy: rare pre-change batches over the mean change horizon, then
    # steady transmission over the detection-delay window
    pre_slots = fpt.lambda_gamma * batch.mean() / cfg.rho
    energy = cfg.amplitude**2 * (pre_slots + edd)
    return PerfReport(
        pfa=pfa,
        edd=edd,
        avg_energy=energy,
        method="analytical",
        config_hash=cfg.config_hash(),
        notes=f"pfa_model={pfa_model}",
    )
