"""Ensemble estimators: speed, hitting-time variance scaling, front fluctuation exponents.

Replicates are folded into running sums one at a time, so per-replicate
outputs never need to be held together in memory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .metrics import HittingRecord, StageSplit

# Relative tolerance on E[X^2] - E[X]^2 < 0 before it counts as an error.
_VAR_TOL = 1e-9


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line ``y = slope * x + intercept`` (in log-log space for power laws)."""

    slope: float
    intercept: float
    r2: float
    window: tuple[float, float]
    n_points: int
    stderr: float = math.nan

    def __post_init__(self):
        if self.n_points < 3:
            raise ValueError(f"a fit needs at least 3 points, got {self.n_points}")


def linear_fit(x, y, window=None) -> ScalingFit:
    """OLS of ``y`` on ``x`` restricted to ``window = (lo, hi)`` (inclusive)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        keep = (x >= window[0]) & (x <= window[1])
        x, y = x[keep], y[keep]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in fit input")
    if x.size < 3:
        raise ValueError(f"a fit needs at least 3 points, got {x.size}")
    r = sps.linregress(x, y)
    return ScalingFit(float(r.slope), float(r.intercept), float(r.rvalue**2),
                      (float(x[0]), float(x[-1])), int(x.size), float(r.stderr))


def power_law_fit(x, y, window=None) -> ScalingFit:
    """Slope of ``log y`` against ``log x``; ``window`` is given in ``x`` units."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        keep = (x >= window[0]) & (x <= window[1])
        x, y = x[keep], y[keep]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    f = linear_fit(np.log(x), np.log(y))
    return ScalingFit(f.slope, f.intercept, f.r2, (float(x[0]), float(x[-1])),
                      f.n_points, f.stderr)


def upper_log_half(x) -> tuple[float, float]:
    """Upper half of the log range of the positive values in ``x``."""
    x = np.asarray(x, dtype=float)
    x = x[x > 0]
    lo, hi = float(x.min()), float(x.max())
    return math.sqrt(lo * hi), hi


def report_grid(delta: float, offset: float = 0.3, stride: float = 0.5) -> tuple[int, int]:
    """Column offset and stride of the reporting positions ``offset + stride k``.

    The defaults are 60 and 100 lattice steps at ``delta = 1/200``; other
    lattice spacings keep the same positions in length units.
    """
    off = int(round(offset / delta))
    step = max(1, int(round(stride / delta)))
    return off, step


class ReplicateEnsemble:
    """Running sums of axis hitting times and front widths over replicates.

    Parameters
    ----------
    positions : array
        Reporting positions ``x``; each added record must contain them.
    """

    def __init__(self, positions):
        self.x_all = np.asarray(positions, dtype=float)
        k = self.x_all.size
        self.n = 0
        self._cnt = {w: np.zeros(k, dtype=np.int64) for w in ("tau", "sigma", "both")}
        self._s_tau = np.zeros(k)
        self._s_tau2 = np.zeros(k)
        self._s_sig = np.zeros(k)
        self._s_sig2 = np.zeros(k)
        self._s_d = np.zeros(k)
        self._s_dd = np.zeros((k, k))
        # front widths, indexed by sample number
        self.n_front = 0
        self.sample_times = np.zeros(0)
        self._f_cnt = np.zeros(0, dtype=np.int64)
        self._f_sum = np.zeros(0)
        self.detach_times: list[float | None] = []

    @classmethod
    def for_record(cls, record: HittingRecord, delta: float, offset=0.3, stride=0.5):
        off, step = report_grid(delta, offset, stride)
        return cls(record.x[off::step])

    # -- hitting times ------------------------------------------------------
    def add_hitting(self, record: HittingRecord) -> None:
        idx = np.searchsorted(record.x, self.x_all)
        idx = np.minimum(idx, record.x.size - 1)
        if not np.allclose(record.x[idx], self.x_all, atol=1e-9):
            raise ValueError("record does not contain the reporting positions")
        tau, sig = record.tau[idx], record.sigma[idx]
        ok_t, ok_s = np.isfinite(tau), np.isfinite(sig)
        ok = ok_t & ok_s
        tau = np.where(ok_t, tau, 0.0)
        sig = np.where(ok_s, sig, 0.0)
        d = np.where(ok, sig - tau, 0.0)
        self.n += 1
        self._cnt["tau"] += ok_t
        self._cnt["sigma"] += ok_s
        self._cnt["both"] += ok
        self._s_tau += tau
        self._s_tau2 += tau * tau
        self._s_sig += sig
        self._s_sig2 += sig * sig
        self._s_d += d
        self._s_dd += np.outer(d, d)

    def valid_for(self, which: str = "both") -> np.ndarray:
        """Reporting positions where ``which`` ('tau', 'sigma' or 'both') was reached in every replicate."""
        if which not in self._cnt:
            raise ValueError(f"which must be 'tau', 'sigma' or 'both', got {which!r}")
        return (self._cnt[which] == self.n) & (self.n > 0)

    def positions(self, which: str = "both") -> np.ndarray:
        return self.x_all[self.valid_for(which)]

    @property
    def valid(self) -> np.ndarray:
        """Reporting positions where both hitting times were reached in every replicate."""
        return self.valid_for("both")

    @property
    def x(self) -> np.ndarray:
        return self.positions("both")

    def _need(self, k=2):
        if self.n < k:
            raise ValueError(f"need at least {k} replicates, have {self.n}")

    def mean(self, which: str) -> np.ndarray:
        self._need(1)
        s = {"tau": self._s_tau, "sigma": self._s_sig}[which]
        return s[self.valid_for(which)] / self.n

    def second_moment(self, which: str) -> np.ndarray:
        self._need(1)
        s = {"tau": self._s_tau2, "sigma": self._s_sig2}[which]
        return s[self.valid_for(which)] / self.n

    def variance(self, which: str) -> np.ndarray:
        """Population variance ``E[X^2] - E[X]^2``."""
        self._need(2)
        m2 = self.second_moment(which)
        var = m2 - self.mean(which) ** 2
        bad = var < -_VAR_TOL * np.maximum(m2, 1.0)
        if np.any(bad):
            raise ArithmeticError("second moment below squared mean")
        return np.maximum(var, 0.0)

    # -- front widths -------------------------------------------------------
    def add_front(self, times, sd, detach_time: float | None) -> None:
        times = np.asarray(times, dtype=float)
        sd = np.asarray(sd, dtype=float)
        if times.shape != sd.shape:
            raise ValueError("times and sd differ in length")
        if times.size > self.sample_times.size:
            if not np.allclose(times[: self.sample_times.size], self.sample_times, rtol=1e-12):
                raise ValueError("front sample times differ between replicates")
            grow = times.size - self.sample_times.size
            self.sample_times = times.copy()
            self._f_cnt = np.concatenate([self._f_cnt, np.zeros(grow, dtype=np.int64)])
            self._f_sum = np.concatenate([self._f_sum, np.zeros(grow)])
        elif not np.allclose(times, self.sample_times[: times.size], rtol=1e-12):
            raise ValueError("front sample times differ between replicates")
        self._f_cnt[: sd.size] += 1
        self._f_sum[: sd.size] += sd
        self.n_front += 1
        self.detach_times.append(detach_time)

    def mean_front_sd(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample times covered by every replicate and the mean front SD there."""
        if self.n_front == 0:
            raise ValueError("no front data")
        keep = self._f_cnt == self.n_front
        return self.sample_times[keep], self._f_sum[keep] / self.n_front

    def median_detach(self) -> StageSplit:
        reached = [t for t in self.detach_times if t is not None]
        if len(reached) * 2 <= len(self.detach_times):
            return StageSplit(None)
        # unreached replicates count as later than any reached one
        vals = sorted(reached) + [math.inf] * (len(self.detach_times) - len(reached))
        return StageSplit(float(np.median(vals)))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedFit:
    nu: float
    speed: float
    fit: ScalingFit


def fit_speed(ensemble: ReplicateEnsemble) -> SpeedFit:
    """Slope ``nu`` of ``E[tau_x]`` against ``x`` over the latter half of the positions."""
    x = ensemble.positions("tau")
    y = ensemble.mean("tau")
    if x.size < 10:
        raise ValueError(f"speed fit needs at least 10 positions, got {x.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite mean hitting times")
    half = x.size // 2
    f = linear_fit(x[half:], y[half:])
    return SpeedFit(f.slope, 1.0 / f.slope, f)


@dataclass(frozen=True)
class PlateauSeries:
    x: np.ndarray
    diff: np.ndarray
    window: tuple[float, float]
    plateau_mean: float
    drift_slope: float
    drift_stderr: float
    n_points: int = field(default=0)

    @property
    def drift_t(self) -> float:
        if self.drift_stderr == 0:
            return 0.0 if self.drift_slope == 0 else math.copysign(math.inf, self.drift_slope)
        return self.drift_slope / self.drift_stderr


def sigma_minus_tau_series(ensemble: ReplicateEnsemble) -> PlateauSeries:
    """``E[sigma_x - tau_x]`` and its drift over the last quarter of positions.

    The drift is the mean over replicates of each replicate's least-squares
    slope; its standard error comes from the across-replicate covariance of
    ``sigma_x - tau_x``, which the running sums keep exactly.
    """
    ensemble._need(2)
    v = ensemble.valid
    x = ensemble.x
    n = ensemble.n
    mean_d = ensemble._s_d[v] / n
    k = max(3, int(math.ceil(x.size / 4)))
    if x.size < k:
        raise ValueError(f"need at least 3 positions, got {x.size}")
    sel = np.arange(x.size - k, x.size)
    xs = x[sel]
    c = (xs - xs.mean()) / np.sum((xs - xs.mean()) ** 2)
    slope = float(c @ mean_d[sel])
    dd = ensemble._s_dd[np.ix_(v, v)][np.ix_(sel, sel)] / n
    cov = (dd - np.outer(mean_d[sel], mean_d[sel])) * n / (n - 1)
    var_slope = max(float(c @ cov @ c), 0.0)
    se = math.sqrt(var_slope / n)
    return PlateauSeries(x, mean_d, (float(xs[0]), float(xs[-1])),
                         float(mean_d[sel].mean()), slope, se, int(k))


def fit_variance_exponent(ensemble: ReplicateEnsemble, which: str = "tau",
                          window=None) -> ScalingFit:
    """Exponent of ``Var(tau_x)`` (or ``sigma``) against ``x`` on a log-log scale.

    ``window`` defaults to the upper half of the log-x range.
    """
    if which not in ("tau", "sigma"):
        raise ValueError(f"which must be 'tau' or 'sigma', got {which!r}")
    x = ensemble.positions(which)
    var = ensemble.variance(which)
    keep = (var > 0) & (x > 0)
    if keep.sum() < 10:
        raise ValueError(f"need at least 10 positions with positive variance, got {keep.sum()}")
    return fit_variance_power(x[keep], var[keep], window)


def fit_variance_power(x, var, window=None) -> ScalingFit:
    x = np.asarray(x, dtype=float)
    var = np.asarray(var, dtype=float)
    keep = (var > 0) & (x > 0)
    x, var = x[keep], var[keep]
    if x.size < 3:
        raise ValueError(f"fewer than 3 positive-variance points ({x.size})")
    return power_law_fit(x, var, window or upper_log_half(x))


def fit_fluctuation_exponents(times, mean_sd, split: StageSplit,
                              t_end: float | None = None) -> tuple[ScalingFit, ScalingFit]:
    """Log-log growth exponents of the front SD on ``(0, detach]`` and ``(detach, t_end]``."""
    times = np.asarray(times, dtype=float)
    mean_sd = np.asarray(mean_sd, dtype=float)
    if not split.reached:
        raise ValueError("front never detached; no stage split")
    t_split = split.detach_time
    t_end = times.max() if t_end is None else t_end
    pos = (times > 0) & (mean_sd > 0)
    fits = []
    for name, lo, hi in (("stage 1", 0.0, t_split), ("stage 2", t_split, t_end)):
        sel = pos & (times > lo) & (times <= hi)
        if sel.sum() < 3:
            raise ValueError(f"{name} window ({lo:g}, {hi:g}] has {sel.sum()} points; need 3")
        f = power_law_fit(times[sel], mean_sd[sel])
        fits.append(ScalingFit(f.slope, f.intercept, f.r2, (lo, hi), f.n_points, f.stderr))
    return fits[0], fits[1]
