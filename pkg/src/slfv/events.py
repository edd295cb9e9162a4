"""Shape distributions, domain geometry and the Poisson stream of reproduction events.

Events are rectangles ``[cx - w/2, cx + w/2] x [cy - h/2, cy + h/2]`` whose
centres sit on the simulation lattice and whose shapes are drawn from a finite
mixture of atoms.  The stream is pull-based: events are generated in fixed-size
chunks so that the event sequence only depends on the seed, never on how the
consumer reads it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

# Default event side length used by all three settings.
DEFAULT_A = 0.2

# Weights of mu^(1..7) in the five mixtures of setting 3.
MIXTURE_WEIGHTS: dict[int, tuple[int, ...]] = {
    1: (1, 2, 3, 4, 5, 6, 7),
    2: (1, 2, 2, 2, 2, 1, 1),
    3: (1, 2, 0, 0, 2, 1, 1),
    4: (1, 0, 0, 0, 0, 0, 1),
    5: (1, 2, 1, 1, 1, 1, 1),
}

_INT_TOL = 1e-6


class ShapeAtom(NamedTuple):
    w: float
    h: float
    p: float


@dataclass(frozen=True)
class ShapeDistribution:
    """Finite mixture of rectangle shapes ``(w, h)`` with probabilities ``p``.

    Atoms with identical ``(w, h)`` are merged and zero-probability atoms are
    dropped at construction.
    """

    atoms: tuple[ShapeAtom, ...]

    def __post_init__(self):
        merged: dict[tuple[float, float], float] = {}
        for w, h, p in self.atoms:
            w, h, p = float(w), float(h), float(p)
            if not (w > 0 and h > 0):
                raise ValueError(f"shape parameters must be positive, got ({w}, {h})")
            if p < 0:
                raise ValueError(f"negative probability {p}")
            if p == 0:
                continue
            merged[(w, h)] = merged.get((w, h), 0.0) + p
        if not merged:
            raise ValueError("shape distribution has no atom with positive mass")
        total = math.fsum(merged.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {total!r}, not 1")
        atoms = tuple(ShapeAtom(w, h, p) for (w, h), p in merged.items())
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def point_mass(cls, w: float, h: float) -> "ShapeDistribution":
        return cls((ShapeAtom(w, h, 1.0),))

    @property
    def w_max(self) -> float:
        return max(a.w for a in self.atoms)

    @property
    def h_max(self) -> float:
        return max(a.h for a in self.atoms)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([a.p for a in self.atoms])

    def moment(self, pw: int, ph: int) -> float:
        """Exact finite sum ``E[w**pw * h**ph]`` over the atoms."""
        return math.fsum(a.p * a.w**pw * a.h**ph for a in self.atoms)

    def check_bounds(self, w_max: float, h_max: float) -> None:
        if self.w_max > w_max or self.h_max > h_max:
            raise ValueError(
                f"shape support ({self.w_max}, {self.h_max}) exceeds ({w_max}, {h_max})"
            )


def setting1_distribution(a: float = DEFAULT_A) -> ShapeDistribution:
    """Square events of side ``a``."""
    return ShapeDistribution.point_mass(a, a)


def setting2_weight(n: int) -> Fraction:
    """Probability ``(2n - 2) / (2n - 1)`` of the small ``(a/2, a)`` atom."""
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return Fraction(2 * n - 2, 2 * n - 1)


def setting2_distribution(n: int, a: float = DEFAULT_A) -> ShapeDistribution:
    """Mostly ``(a/2, a)`` rectangles plus rare elongated ``(n a, a)`` events.

    The mixing weight keeps ``E[w] E[wh] = a**3`` for every ``n``; ``n = 1``
    degenerates to the square atom ``(a, a)``.
    """
    p = setting2_weight(n)
    return ShapeDistribution(
        (ShapeAtom(a / 2, a, float(p)), ShapeAtom(n * a, a, float(1 - p)))
    )


def mixture_probabilities(weights: Sequence[float]) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (7,):
        raise ValueError(f"expected 7 mixture weights, got {weights.shape[0] if weights.ndim else 0}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("mixture weights must be finite and nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("mixture weights are all zero")
    return weights / total


def setting3_distribution(weights: Sequence[float], a: float = DEFAULT_A) -> ShapeDistribution:
    """Mixture ``sum_i p_i mu^(i)`` of the setting-2 laws for ``i = 1..7``."""
    probs = mixture_probabilities(weights)
    atoms = []
    for i, pi in enumerate(probs, start=1):
        if pi == 0:
            continue
        for w, h, p in setting2_distribution(i, a).atoms:
            atoms.append(ShapeAtom(w, h, pi * p))
    # renormalise away the rounding of the products
    total = math.fsum(x.p for x in atoms)
    return ShapeDistribution(tuple(ShapeAtom(w, h, p / total) for w, h, p in atoms))


def _as_int(value: float, name: str) -> int:
    k = round(value)
    if abs(value - k) > _INT_TOL * max(1.0, abs(value)):
        raise ValueError(f"{name} = {value!r} is not an integer")
    return int(k)


@dataclass(frozen=True)
class DomainGeometry:
    """Simulation box ``[-m, W + m] x [-m - H/2, H/2 + m]`` on the lattice ``delta Z^2``.

    ``C`` is the space-time density of events; the total event rate on the padded
    box is ``theta = C (W + 2m) (H + 2m)``.
    """

    W: float
    H: float
    delta: float
    m: float
    C: float
    m_cells: int = field(init=False, repr=False)
    w_cells: int = field(init=False, repr=False)
    half_h_cells: int = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("W", "H", "delta", "C"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        object.__setattr__(self, "m_cells", _as_int(self.m / self.delta, "m/delta"))
        object.__setattr__(self, "w_cells", _as_int(self.W / self.delta, "W/delta"))
        object.__setattr__(self, "half_h_cells", _as_int(self.H / (2 * self.delta), "H/(2 delta)"))

    @classmethod
    def from_theta(cls, W, H, delta, m, theta) -> "DomainGeometry":
        return cls(W, H, delta, m, theta / ((W + 2 * m) * (H + 2 * m)))

    @property
    def theta(self) -> float:
        return event_rate(self)

    @property
    def nx(self) -> int:
        """Number of lattice columns, ``(W + 2m)/delta + 1``."""
        return self.w_cells + 2 * self.m_cells + 1

    @property
    def ny(self) -> int:
        return 2 * self.half_h_cells + 2 * self.m_cells + 1

    @property
    def axis_row(self) -> int:
        """Row index of the central axis ``y = 0``."""
        return self.half_h_cells + self.m_cells

    def x_of(self, i):
        return -self.m + np.asarray(i) * self.delta

    def y_of(self, j):
        return -self.m - self.H / 2 + np.asarray(j) * self.delta

    def half_extent_cells(self, length: float) -> int:
        """Number of lattice steps within ``length / 2`` of a lattice centre."""
        return int(math.floor((length / 2 + self.delta * 1e-9) / self.delta))

    def check_distribution(self, mu: ShapeDistribution) -> None:
        if self.m < max(mu.w_max, mu.h_max) / 2 - 1e-12:
            raise ValueError(
                f"margin m = {self.m} is smaller than half the largest event side "
                f"({max(mu.w_max, mu.h_max) / 2})"
            )


def event_rate(geom: DomainGeometry) -> float:
    """Rate ``theta = C (W + 2m) (H + 2m)`` of events centred in the padded box."""
    return geom.C * (geom.W + 2 * geom.m) * (geom.H + 2 * geom.m)


TABLE1_GEOMETRY = DomainGeometry.from_theta(60.0, 60.0, 1 / 200, 3.2, 3600.0)
DESK_GEOMETRY = DomainGeometry(20.0, 20.0, 1 / 50, 3.2, TABLE1_GEOMETRY.C)


class ReproductionEvent(NamedTuple):
    t: float
    cx: float
    cy: float
    w: float
    h: float


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for replicate ``index`` of a run seeded with ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


class EventBatch(NamedTuple):
    t: np.ndarray
    ci: np.ndarray
    cj: np.ndarray
    atom: np.ndarray


class EventStream:
    """Lazy Poisson stream of reproduction events on the lattice of ``geom``.

    Inter-arrival times are exponential with rate ``theta``, centres are uniform
    lattice sites and shapes are independent draws from ``mu``.  Chunks of
    ``chunk_size`` events are drawn at a time; ``pending()`` exposes the unread
    part of the current chunk and ``advance(k)`` marks ``k`` of them consumed.
    """

    def __init__(self, geom: DomainGeometry, mu: ShapeDistribution,
                 rng: np.random.Generator | int, chunk_size: int = 1 << 16):
        geom.check_distribution(mu)
        self.geom = geom
        self.mu = mu
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.chunk_size = int(chunk_size)
        self.theta = event_rate(geom)
        self.cum_p = np.cumsum(mu.probabilities)
        self.cum_p[-1] = 1.0
        self.half_w = np.array([geom.half_extent_cells(a.w) for a in mu.atoms], dtype=np.int64)
        self.half_h = np.array([geom.half_extent_cells(a.h) for a in mu.atoms], dtype=np.int64)
        self._t_last = 0.0
        self._batch: EventBatch | None = None
        self._pos = 0
        self.drawn = 0

    def _refill(self):
        n = self.chunk_size
        rng = self.rng
        g = self.geom
        dt = rng.exponential(1.0 / self.theta, size=n)
        t = self._t_last + np.cumsum(dt)
        self._t_last = float(t[-1])
        site = rng.integers(0, g.nx * g.ny, size=n, dtype=np.int64)
        atom = np.searchsorted(self.cum_p, rng.random(n), side="right").astype(np.int64)
        np.minimum(atom, len(self.cum_p) - 1, out=atom)
        self._batch = EventBatch(t, site % g.nx, site // g.nx, atom)
        self._pos = 0

    def pending(self) -> tuple[EventBatch, int]:
        """Current chunk and the index of its first unread event."""
        if self._batch is None or self._pos >= self.chunk_size:
            self._refill()
        return self._batch, self._pos

    def advance(self, k: int) -> None:
        self._pos += k
        self.drawn += k

    def next_raw(self) -> tuple[float, int, int, int]:
        batch, pos = self.pending()
        self.advance(1)
        return float(batch.t[pos]), int(batch.ci[pos]), int(batch.cj[pos]), int(batch.atom[pos])

    def next_event(self) -> ReproductionEvent:
        t, ci, cj, atom = self.next_raw()
        a = self.mu.atoms[atom]
        return ReproductionEvent(t, float(self.geom.x_of(ci)), float(self.geom.y_of(cj)), a.w, a.h)

    def __iter__(self):
        while True:
            yield self.next_event()
