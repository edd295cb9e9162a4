"""Recorders for axis hitting times and overhang-corrected front profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .events import DomainGeometry

# Distance (in length units) kept free of the lateral margins when monitoring the
# front: 260 rows at delta = 1/200.
BORDER_MARGIN = 1.3

# Reporting grid along the axis at delta = 1/200, in lattice steps: 60 + 100 k.
REPORT_OFFSET = 60
REPORT_STRIDE = 100


@dataclass
class HittingRecord:
    """Axis hitting times on the columns ``x >= 0``; ``nan`` marks unreached sites."""

    x: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray

    @classmethod
    def from_grid(cls, grid) -> "HittingRecord":
        return cls.from_arrays(grid.geom, grid.tau, grid.sigma)

    @classmethod
    def from_arrays(cls, geom: DomainGeometry, tau, sigma) -> "HittingRecord":
        mc = geom.m_cells
        tau = np.where(np.isinf(tau[mc:]), np.nan, tau[mc:])
        sigma = np.where(np.isinf(sigma[mc:]), np.nan, sigma[mc:])
        x = np.arange(tau.size) * geom.delta
        return cls(x, tau.astype(float), sigma.astype(float))

    @property
    def i_max_tau(self) -> float:
        ok = np.flatnonzero(np.isfinite(self.tau))
        return float(self.x[ok[-1]])

    @property
    def i_max_sigma(self) -> float:
        ok = np.flatnonzero(np.isfinite(self.sigma))
        return float(self.x[ok[-1]])

    def report_index(self, offset: int = REPORT_OFFSET, stride: int = REPORT_STRIDE) -> np.ndarray:
        """Indices of the subsampled positions ``(offset + stride k) delta``."""
        return np.arange(offset, self.x.size, stride)


class HittingRecorder:
    """Reference recorder of ``tau``/``sigma`` fed event by event.

    Keeps its own record of which axis sites are occupied and a pointer to the
    leftmost axis gap, so it does not rely on the grid's internal bookkeeping.
    """

    def __init__(self, geom: DomainGeometry):
        self.geom = geom
        mc = geom.m_cells
        self.axis_row = geom.axis_row
        self.occupied = np.zeros(geom.nx, dtype=bool)
        self.occupied[: mc + 1] = True
        self.tau = np.full(geom.nx, np.inf)
        self.sigma = np.full(geom.nx, np.inf)
        self.tau[: mc + 1] = 0.0
        self.sigma[: mc + 1] = 0.0
        self.gap = mc + 1

    def on_event_applied(self, grid, box, t):
        i0, i1, j0, j1 = box
        if not j0 <= self.axis_row <= j1:
            return
        new = ~self.occupied[i0 : i1 + 1]
        self.tau[i0 : i1 + 1][new] = t
        self.occupied[i0 : i1 + 1] = True
        while self.gap < self.occupied.size and self.occupied[self.gap]:
            self.sigma[self.gap] = t
            self.gap += 1

    def record(self) -> HittingRecord:
        return HittingRecord.from_arrays(self.geom, self.tau, self.sigma)


def default_row_window(geom: DomainGeometry) -> tuple[int, int]:
    """Inclusive row range kept away from the top and bottom margins."""
    cut = geom.m_cells + int(round(BORDER_MARGIN / geom.delta)) + 1
    lo, hi = cut, geom.ny - 1 - cut
    if lo > hi:
        raise ValueError("domain too narrow for the default row window")
    return lo, hi


def front_profile(grid, row_window: tuple[int, int]) -> np.ndarray:
    """Rightmost occupied position of every row in the inclusive ``row_window``."""
    lo, hi = row_window
    if lo < 0 or hi >= grid.ny or lo > hi:
        raise ValueError(f"row window {row_window} outside 0..{grid.ny - 1}")
    return (grid.front[lo : hi + 1] - grid.geom.m_cells) * grid.geom.delta


def front_sd(profile) -> float:
    profile = np.asarray(profile, dtype=float)
    if profile.size == 0:
        raise ValueError("empty profile")
    return float(np.std(profile))


def linear_sample_times(t_end: float, dt: float) -> np.ndarray:
    return np.arange(1, int(math.floor(t_end / dt)) + 1) * dt


def geometric_sample_times(t_first: float, t_end: float, per_decade: int = 20) -> np.ndarray:
    n = int(math.ceil(per_decade * math.log10(t_end / t_first))) + 1
    return np.geomspace(t_first, t_end, n)


@dataclass
class FrontProfileSeries:
    sample_times: list = field(default_factory=list)
    sd: list = field(default_factory=list)
    min_front: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    row_window: tuple = (0, 0)
    delta: float = 1.0

    @property
    def detached(self) -> np.ndarray:
        return np.asarray(self.min_front) >= self.delta * (1 - 1e-9)


@dataclass(frozen=True)
class StageSplit:
    """``detach_time`` is ``None`` when the front never left the initial border."""

    detach_time: float | None

    @property
    def reached(self) -> bool:
        return self.detach_time is not None


def detect_detach_time(series: FrontProfileSeries) -> StageSplit:
    """First sample at which every monitored row has advanced to ``x >= delta``."""
    if not series.sample_times:
        raise ValueError("empty front series")
    hits = np.flatnonzero(series.detached)
    return StageSplit(float(series.sample_times[hits[0]]) if hits.size else None)


class FrontRecorder:
    """Samples the overhang-corrected front at the given ``times``, or at every
    multiple of ``dt`` until the run ends."""

    def __init__(self, geom: DomainGeometry, times=None, row_window=None, keep_profiles=False,
                 dt: float | None = None):
        if (times is None) == (dt is None):
            raise ValueError("give exactly one of times and dt")
        if dt is not None and not dt > 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self.times = np.asarray([] if times is None else times, dtype=float)
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        self.row_window = tuple(row_window) if row_window is not None else default_row_window(geom)
        self.keep_profiles = keep_profiles
        self.series = FrontProfileSeries(row_window=self.row_window, delta=geom.delta)
        self._k = 0

    def next_sample_time(self) -> float:
        if self.dt is not None:
            return (self._k + 1) * self.dt
        return float(self.times[self._k]) if self._k < self.times.size else math.inf

    def sample(self, grid, t):
        prof = front_profile(grid, self.row_window)
        s = self.series
        s.sample_times.append(float(t))
        s.sd.append(front_sd(prof))
        s.min_front.append(float(prof.min()))
        if self.keep_profiles:
            s.profiles.append(prof.copy())
        self._k += 1


class SnapshotRecorder:
    """Writes occupancy snapshots at fixed times via ``writer(grid, path)``."""

    def __init__(self, times, directory, writer, suffix=".pgm"):
        self.times = sorted(float(t) for t in times)
        self.directory = directory
        self.writer = writer
        self.suffix = suffix
        self._k = 0

    def next_sample_time(self):
        return self.times[self._k] if self._k < len(self.times) else math.inf

    def sample(self, grid, t):
        self.writer(grid, self.directory / f"snapshot_t{t:.9g}{self.suffix}")
        self._k += 1
