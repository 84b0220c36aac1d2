"""Verification statistics between simulated and observed discharge.

All metrics use pairwise deletion: only steps where both series hold a
real value enter the sums, and the jointly-valid pair count is reported
next to every score.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError


@dataclass
class PairedSeries:
    """Aligned observed/simulated discharge; NaN marks missing observations."""

    timestamps: list
    q_obs: np.ndarray
    q_sim: np.ndarray

    def __post_init__(self):
        self.q_obs = np.asarray(self.q_obs, dtype=np.float64)
        self.q_sim = np.asarray(self.q_sim, dtype=np.float64)
        if self.q_obs.shape != self.q_sim.shape:
            raise UndefinedMetricError(
                f"series lengths differ: {self.q_obs.shape} vs {self.q_sim.shape}")

    def valid_pairs(self):
        """(obs, sim) restricted to jointly valid steps."""
        ok = np.isfinite(self.q_obs) & np.isfinite(self.q_sim)
        return self.q_obs[ok], self.q_sim[ok]


@dataclass
class MetricBundle:
    """Scores plus the pair count they were computed on; None = undefined."""

    nse: float | None
    kge: float | None
    cc: float | None
    rmse: float | None
    bias_mean: float | None
    bias_percent: float | None
    n_pairs: int

    def as_dict(self):
        return {
            "nse": self.nse, "kge": self.kge, "cc": self.cc, "rmse": self.rmse,
            "bias_mean": self.bias_mean, "bias_percent": self.bias_percent,
            "n_pairs": self.n_pairs,
        }


def _pairs(p, minimum):
    obs, sim = p.valid_pairs()
    if obs.size < minimum:
        raise UndefinedMetricError(
            f"need at least {minimum} valid pairs, have {obs.size}")
    return obs, sim


def nse(p):
    """Nash-Sutcliffe efficiency: 1 - SSE / variance around the observed mean."""
    obs, sim = _pairs(p, 2)
    denom = float(np.sum((obs - obs.mean()) ** 2))
    if denom == 0.0:
        raise UndefinedMetricError("observations are constant; NSE undefined")
    return 1.0 - float(np.sum((obs - sim) ** 2)) / denom


def bias(p):
    """(mean error, percent volume error).

    bias_mean = mean(sim - obs); bias_percent = 100 * sum(sim - obs) / sum(obs).
    """
    obs, sim = _pairs(p, 1)
    bias_mean = float(np.mean(sim - obs))
    total_obs = float(np.sum(obs))
    if total_obs == 0.0:
        raise UndefinedMetricError("observed volume is zero; percent bias undefined")
    bias_percent = 100.0 * float(np.sum(sim - obs)) / total_obs
    return bias_mean, bias_percent


def rmse(p):
    """Root mean square error."""
    obs, sim = _pairs(p, 1)
    return math.sqrt(float(np.mean((sim - obs) ** 2)))


def cc(p):
    """Pearson correlation coefficient."""
    obs, sim = _pairs(p, 2)
    do = obs - obs.mean()
    ds = sim - sim.mean()
    denom = math.sqrt(float(np.sum(ds ** 2))) * math.sqrt(float(np.sum(do ** 2)))
    if denom == 0.0:
        raise UndefinedMetricError("zero variance; correlation undefined")
    return float(np.sum(ds * do)) / denom


def kge(p):
    """Kling-Gupta efficiency: 1 - sqrt((CC-1)^2 + (a-1)^2 + (b-1)^2)
    with a = std(sim)/std(obs) and b = mean(sim)/mean(obs)."""
    obs, sim = _pairs(p, 2)
    if obs.std() == 0.0:
        raise UndefinedMetricError("observations are constant; KGE undefined")
    if obs.mean() == 0.0:
        raise UndefinedMetricError("observed mean is zero; KGE undefined")
    r = cc(p)
    alpha = float(sim.std() / obs.std())
    beta = float(sim.mean() / obs.mean())
    return 1.0 - math.sqrt((r - 1.0) ** 2 + (alpha - 1.0) ** 2 + (beta - 1.0) ** 2)


def compute_all(p):
    """Every metric, with per-metric undefined results mapped to None."""
    obs, _ = p.valid_pairs()
    out = {}
    for name, fn in (("nse", nse), ("kge", kge), ("cc", cc), ("rmse", rmse)):
        try:
            out[name] = fn(p)
        except UndefinedMetricError:
            out[name] = None
    try:
        out["bias_mean"], out["bias_percent"] = bias(p)
    except UndefinedMetricError:
        out["bias_mean"], out["bias_percent"] = None, None
    return MetricBundle(n_pairs=int(obs.size), **out)
