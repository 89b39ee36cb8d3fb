"""Distributed two-layer CUSUM change detection.

Library, Monte Carlo simulator and CLI for a sensor network in which every
sensor runs a CUSUM on its observations, transmits a fixed amplitude over an
additive multiple-access channel while its statistic is above a threshold,
and a fusion center runs a second CUSUM on the channel output.  Includes the
analytical performance model (false-alarm probability via renewal integral
equations and a compound-Poisson exceedance model; mean detection delay via
a transition-epoch recursion) and constrained parameter optimization.
"""

from .distributions import (
    EmpiricalLaw,
    Exponential,
    Family,
    Gaussian,
    IncrementSpec,
    Laplace,
    Lognormal,
    Pareto,
    PointMassShift,
    TailClass,
    classify_tail,
    llr_increment_law,
    moment_matched_spec,
)
from .cusum import CusumDetector, FusionModel, fusion_increment, sensor_increment, step, transmit_decision
from .renewal import (
    FptLaw,
    GridFunction,
    OvershootLaw,
    overshoot_law,
    solve_fpt_survival,
    solve_mean_fpt,
    solve_mean_overshoot,
)
from .report import PerfReport
from .sim import ExcursionSamples, NetworkConfig, RunOutcome, estimate, measure_excursions, run_once

__version__ = "0.1.0"
