"""Discretised occupancy state and the fill-if-intersecting dynamics.

The lattice has ``nx = (W + 2m)/delta + 1`` columns and ``ny = (H + 2m)/delta + 1``
rows; column ``i`` sits at ``x = -m + i delta`` and row ``j`` at
``y = -m - H/2 + j delta``.  Initially every site with ``x <= 0`` is occupied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .events import DomainGeometry, EventStream, ReproductionEvent


class EventCapExceeded(RuntimeError):
    """Raised when a run draws more events than its configured cap."""


class OccupancyGrid:
    """Boolean lattice state stored as packed bit rows.

    Attributes
    ----------
    occ : ndarray of uint64, shape (ny, nwords)
        Packed occupancy, one row per lattice row ``j``.
    front, sat : ndarray of int64, shape (ny,)
        Rightmost occupied column and first empty column of each row.
    tau, sigma : ndarray of float64, shape (nx,)
        Hitting times along the central axis, ``inf`` while unset.
    """

    def __init__(self, geom: DomainGeometry):
        self.geom = geom
        nx, ny, mc = geom.nx, geom.ny, geom.m_cells
        self.nx, self.ny = nx, ny
        self.axis_row = geom.axis_row
        nwords = (nx + 63) // 64
        self.occ = np.zeros((ny, nwords), dtype=np.uint64)
        for j in range(ny):
            K.fill(self.occ[j], 0, mc)
        self.front = np.full(ny, mc, dtype=np.int64)
        self.sat = np.full(ny, mc + 1, dtype=np.int64)
        self.tau = np.full(nx, np.inf)
        self.sigma = np.full(nx, np.inf)
        self.tau[: mc + 1] = 0.0
        self.sigma[: mc + 1] = 0.0
        self.t_now = 0.0
        self.events_applied = 0
        self.events_ignored = 0

    def to_array(self) -> np.ndarray:
        """Unpacked occupancy as a bool array indexed ``[i, j]``."""
        bits = np.unpackbits(self.occ.view(np.uint8), axis=1, bitorder="little")
        return bits[:, : self.nx].astype(bool).T

    def occupied(self, i: int, j: int) -> bool:
        return bool((int(self.occ[j, i >> 6]) >> (i & 63)) & 1)

    @property
    def occupied_count(self) -> int:
        return int(np.unpackbits(self.occ.view(np.uint8)).sum())

    @property
    def barrier_reached(self) -> bool:
        return bool(self.front.max() == self.nx - 1)

    def copy(self) -> "OccupancyGrid":
        other = object.__new__(OccupancyGrid)
        other.__dict__.update(self.__dict__)
        for name in ("occ", "front", "sat", "tau", "sigma"):
            setattr(other, name, getattr(self, name).copy())
        return other

    def rectangle_indices(self, cx: float, cy: float, w: float, h: float):
        """Clipped index box ``(i0, i1, j0, j1)`` of the lattice sites in the closed
        rectangle, or ``None`` when no site of the lattice lies inside it."""
        g = self.geom
        eps = 1e-9
        i0 = math.ceil((cx - w / 2 + g.m) / g.delta - eps)
        i1 = math.floor((cx + w / 2 + g.m) / g.delta + eps)
        j0 = math.ceil((cy - h / 2 + g.m + g.H / 2) / g.delta - eps)
        j1 = math.floor((cy + h / 2 + g.m + g.H / 2) / g.delta + eps)
        i0, i1 = max(i0, 0), min(i1, self.nx - 1)
        j0, j1 = max(j0, 0), min(j1, self.ny - 1)
        if i0 > i1 or j0 > j1:
            return None
        return i0, i1, j0, j1

    def _apply_box(self, box, t: float) -> bool:
        i0, i1, j0, j1 = box
        return bool(K.apply_rect(self.occ, self.front, self.sat, self.tau, self.sigma,
                                 self.axis_row, self.nx, i0, i1, j0, j1, t))


def new_grid(geom: DomainGeometry) -> OccupancyGrid:
    return OccupancyGrid(geom)


def apply_event(grid: OccupancyGrid, ev: ReproductionEvent) -> bool:
    """Fill the event rectangle if it intersects the occupied set.

    Returns ``True`` when reproduction happened (even if no new site was
    filled) and ``False`` when the rectangle met no occupied site or missed the
    lattice altogether.
    """
    if ev.t < grid.t_now:
        raise ValueError(f"event at t={ev.t} precedes grid time {grid.t_now}")
    grid.t_now = ev.t
    box = grid.rectangle_indices(ev.cx, ev.cy, ev.w, ev.h)
    if box is not None and grid._apply_box(box, ev.t):
        grid.events_applied += 1
        return True
    grid.events_ignored += 1
    return False


@dataclass
class SimulationResult:
    barrier_time: float
    events_applied: int
    events_ignored: int
    recorders: tuple = ()
    event_log: np.ndarray | None = field(default=None, repr=False)

    @property
    def events_drawn(self) -> int:
        return self.events_applied + self.events_ignored


def _stream_box(stream: EventStream, ci: int, cj: int, atom: int, grid: OccupancyGrid):
    hw, hh = stream.half_w[atom], stream.half_h[atom]
    return (max(ci - hw, 0), min(ci + hw, grid.nx - 1),
            max(cj - hh, 0), min(cj + hh, grid.ny - 1))


def run_until_barrier(grid: OccupancyGrid, stream: EventStream, recorders=(),
                      max_events: int | None = None, keep_log: bool = False) -> SimulationResult:
    """Consume events until a site of the last column ``x = W + m`` is occupied.

    Recorders may define

    ``next_sample_time()``
        Time of their next snapshot; the run pauses before the first later
        event and calls ``sample(grid, t)``.
    ``on_event_applied(grid, box, t)``
        Per-event hook, called after every event that reproduced.  Its
        presence switches the run to the (slow) event-by-event path.
    ``finish(grid, result)``
        Called once when the barrier is reached.

    Raises
    ------
    EventCapExceeded
        If more than ``max_events`` events are drawn before the barrier.
    """
    if grid.t_now != 0.0 or grid.events_applied or grid.events_ignored:
        raise ValueError("run_until_barrier needs a fresh grid")
    cap = np.iinfo(np.int64).max if max_events is None else int(max_events)
    samplers = [r for r in recorders if hasattr(r, "next_sample_time")]
    hooks = [r.on_event_applied for r in recorders if getattr(r, "on_event_applied", None)]
    log = [] if keep_log else None

    def pause_time():
        return min((r.next_sample_time() for r in samplers), default=math.inf)

    def flush_samples(t_next):
        # sample every snapshot time that precedes the next event
        while True:
            tp = pause_time()
            if tp >= t_next:
                return
            for r in samplers:
                if r.next_sample_time() == tp:
                    r.sample(grid, tp)

    if hooks or keep_log:
        while True:
            if grid.events_applied + grid.events_ignored >= cap:
                raise EventCapExceeded(f"event cap {cap} reached before the barrier")
            t, ci, cj, atom = stream.next_raw()
            flush_samples(t)
            if log is not None:
                log.append((t, ci, cj, atom))
            grid.t_now = t
            box = _stream_box(stream, ci, cj, atom, grid)
            if grid._apply_box(box, t):
                grid.events_applied += 1
                for hook in hooks:
                    hook(grid, box, t)
                if box[1] == grid.nx - 1:
                    break
            else:
                grid.events_ignored += 1
    else:
        counters = np.zeros(3, dtype=np.int64)
        while True:
            batch, pos = stream.pending()
            stop = pause_time()
            k, status, t_last = K.run_batch(
                grid.occ, grid.front, grid.sat, grid.tau, grid.sigma, grid.axis_row,
                grid.nx, grid.ny, batch.t, batch.ci, batch.cj, batch.atom,
                stream.half_w, stream.half_h, pos, stop, cap, counters)
            stream.advance(k - pos)
            grid.events_applied = int(counters[0])
            grid.events_ignored = int(counters[1])
            if t_last >= 0:
                grid.t_now = float(t_last)
            if counters[2]:
                raise EventCapExceeded(f"event cap {cap} reached before the barrier")
            if status == K.STATUS_BARRIER:
                break
            if status == K.STATUS_PAUSED:
                flush_samples(float(batch.t[k]))
    result = SimulationResult(grid.t_now, grid.events_applied, grid.events_ignored,
                              tuple(recorders))
    if log is not None:
        result.event_log = np.array(log, dtype=[("t", "f8"), ("ci", "i8"), ("cj", "i8"), ("atom", "i8")])
    for r in recorders:
        if hasattr(r, "finish"):
            r.finish(grid, result)
    return result


def write_pgm(grid: OccupancyGrid, path: str | Path) -> None:
    """Binary grey-scale snapshot; occupied sites are black, rows top to bottom = y descending."""
    img = np.where(grid.to_array().T[::-1], 0, 255).astype(np.uint8)
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{grid.nx} {grid.ny}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_rle_csv(grid: OccupancyGrid, path: str | Path) -> None:
    """Run-length encoding of occupied runs: one ``j,i_start,i_end`` line per run."""
    arr = grid.to_array().T
    with Path(path).open("w") as fh:
        fh.write("j,i_start,i_end\n")
        for j, row in enumerate(arr):
            d = np.diff(np.concatenate(([0], row.astype(np.int8), [0])))
            starts = np.flatnonzero(d == 1)
            ends = np.flatnonzero(d == -1) - 1
            for s, e in zip(starts, ends):
                fh.write(f"{j},{s},{e}\n")
