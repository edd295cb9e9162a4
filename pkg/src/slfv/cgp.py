"""The two-columns growth process (2-CGP).

Two piles of unit cubes sit side by side.  Every exposed unit of height grows
sideways at rate 1 and each pile top grows at rate 1, so from the state
``(i, j)`` (lowest height ``i``, highest ``j``)

* ``i == j``: ``(i, i + 1)`` at rate 2,
* ``i < j``:  ``(i, j + 1)`` at rate 1, ``(i + 1, j)`` at rate 2 and
  ``(i + k, j)`` at rate 1 for ``k = 2..j - i``.

The process only depends on the difference ``d = j - i`` and the top height, so
simulations track those two integers.  The discretised chain lives on the
difference capped at ``N`` and moves with timestep ``eps``; its expected return
time to 0 has a closed form built from an integer backward recursion, which
gives the limiting growth speed ``1 + 1 / (2 E[T])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit


class CgpState(NamedTuple):
    m: int
    M: int


class ExcursionSample(NamedTuple):
    T_sq: float
    M_at_T: int


def cgp_step_rates(state) -> list[tuple[CgpState, float]]:
    """Outgoing transitions of ``state = (lowest, highest)`` with their rates."""
    i, j = int(state[0]), int(state[1])
    if i < 0 or j < i:
        raise ValueError(f"invalid 2-CGP state {state!r}")
    if i == j:
        return [(CgpState(i, i + 1), 2.0)]
    out = [(CgpState(i, j + 1), 1.0), (CgpState(i + 1, j), 2.0)]
    out += [(CgpState(i + k, j), 1.0) for k in range(2, j - i + 1)]
    return out


# ---------------------------------------------------------------------------
# continuous-time simulation

@njit(cache=True)
def _jump_from(rng, d):
    # one jump out of difference d >= 1; returns (new d, top grew)
    rate = d + 2.0
    u = rng.random() * rate
    if u < 1.0:
        return d + 1, True
    if u < 3.0:
        return d - 1, False
    k = 2 + int(u - 3.0)
    if k > d:
        k = d
    return d - k, False


@njit(cache=True)
def _excursions(rng, n, T, M):
    for r in range(n):
        t = rng.exponential(0.5)
        d = 1
        h = 1
        while d > 0:
            t += rng.exponential(1.0 / (d + 2.0))
            d, up = _jump_from(rng, d)
            if up:
                h += 1
        T[r] = t
        M[r] = h


@njit(cache=True)
def _heights_at(rng, t_max, reps, out):
    for r in range(reps):
        t = 0.0
        d = 0
        h = 0
        while True:
            if d == 0:
                t += rng.exponential(0.5)
                if t > t_max:
                    break
                d = 1
                h += 1
            else:
                t += rng.exponential(1.0 / (d + 2.0))
                if t > t_max:
                    break
                d, up = _jump_from(rng, d)
                if up:
                    h += 1
        out[r] = h


def sample_excursions(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent excursions from ``(0, 0)``: arrays of ``T_sq`` and ``M_at_T``."""
    T = np.empty(int(n))
    M = np.empty(int(n), dtype=np.int64)
    _excursions(rng, int(n), T, M)
    return T, M


def simulate_excursion(rng: np.random.Generator) -> ExcursionSample:
    """Time to leave equal heights and come back, and the top height at return."""
    T, M = sample_excursions(1, rng)
    return ExcursionSample(float(T[0]), int(M[0]))


@dataclass(frozen=True)
class SpeedEstimate:
    speed: float
    stderr: float
    ci_low: float
    ci_high: float
    reps: int


def _normal_ci(values, z=1.959963984540054) -> SpeedEstimate:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    return SpeedEstimate(mean, se, mean - z * se, mean + z * se, values.size)


def estimate_speed_mc(t_max: float, reps: int, rng: np.random.Generator) -> SpeedEstimate:
    """Mean of ``M_t / t`` at ``t = t_max`` over ``reps`` runs, with a 95% normal CI."""
    if t_max < 100:
        raise ValueError("t_max must be at least 100")
    if reps < 2:
        raise ValueError("need at least 2 repetitions")
    out = np.empty(int(reps), dtype=np.int64)
    _heights_at(rng, float(t_max), int(reps), out)
    return _normal_ci(out / t_max)


def renewal_speed(T: np.ndarray, M: np.ndarray) -> float:
    """Speed ``E[M_T] / E[T]`` estimated from excursion samples."""
    return float(np.mean(M) / np.mean(T))


# ---------------------------------------------------------------------------
# discretised chain

@dataclass(frozen=True)
class DiscretizedChain:
    N: int
    eps: float
    P: np.ndarray


def _check_chain_args(N, eps):
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def _leave_prob(k, eps):
    return -math.expm1(-k * eps)


def discretized_matrix(N: int, eps: float) -> DiscretizedChain:
    """Transition matrix of the height difference capped at ``N``."""
    _check_chain_args(N, eps)
    N = int(N)
    P = np.zeros((N + 1, N + 1))
    P[0, 0] = math.exp(-2 * eps)
    P[0, 1] = _leave_prob(2, eps)
    for i in range(1, N + 1):
        q = _leave_prob(i + 2, eps)
        P[i, : max(i - 1, 0)] = q / (i + 2)
        P[i, i - 1] = 2 * q / (i + 2)
        if i < N:
            P[i, i] = math.exp(-(i + 2) * eps)
            P[i, i + 1] = q / (i + 2)
        else:
            P[i, i] = 1 - (N + 1) * q / (N + 2)
    return DiscretizedChain(N, float(eps), P)


def accelerated_matrix(N: int, eps: float) -> DiscretizedChain:
    """Same chain but leaving 0 immediately."""
    chain = discretized_matrix(N, eps)
    P = chain.P.copy()
    P[0, 0], P[0, 1] = 0.0, 1.0
    return DiscretizedChain(chain.N, chain.eps, P)


@dataclass(frozen=True)
class ASequence:
    """``values[0]`` is ``A_0`` as a ``Decimal``; ``values[1:]`` are exact integers."""

    N: int
    eps: float
    values: tuple

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return len(self.values)

    @property
    def total(self) -> int:
        """``2 A_1 + sum_{j >= 2} A_j``."""
        return 2 * self.values[1] + sum(self.values[2:])


def _a_integers(N: int) -> list[int]:
    # A_N .. A_1 are integers and do not depend on eps
    A = [0] * (N + 1)
    A[N] = 1
    A[N - 1] = N + 1
    suffix = 0  # sum_{j >= i + 2} A_j
    for i in range(N - 1, 1, -1):
        suffix += A[i + 2] if i + 2 <= N else 0
        A[i - 1] = (i + 2) * A[i] - 2 * A[i + 1] - suffix
    return A


def compute_A_sequence(N: int, eps: float) -> ASequence:
    """Backward recursion ``A_N = 1``, ``A_{N-1} = N + 1``,
    ``A_{i-1} = (i + 2) A_i - 2 A_{i+1} - sum_{j >= i+2} A_j`` and
    ``A_0 = (2 A_1 + sum_{j >= 2} A_j)(1 - e^{-2 eps}) / 2``.

    The integers grow combinatorially (hundreds of digits at ``N = 400``), so
    they are kept exact; ``A_0`` is returned as a ``Decimal``, whose exponent
    range does not overflow.
    """
    _check_chain_args(N, eps)
    A = _a_integers(int(N))
    with localcontext() as ctx:
        ctx.prec = 40
        S = 2 * A[1] + sum(A[2:])
        A[0] = Decimal(S) * Decimal(_leave_prob(2, eps)) / 2
    return ASequence(int(N), float(eps), tuple(A))


def _scaled_weights(N, eps):
    # (i + 2) (A_i / S) / (1 - e^{-(i+2) eps}) for i = 1..N, S = 2 A_1 + sum A_j
    A = _a_integers(N)
    S = 2 * A[1] + sum(A[2:])
    return [(i + 2) * (A[i] / S) / _leave_prob(i + 2, eps) for i in range(1, N + 1)]


def expected_return_time(N: int, eps: float) -> float:
    """Expected number of steps for the discretised chain started at 0 to leave
    0 and come back."""
    _check_chain_args(N, eps)
    return 1.0 / _leave_prob(2, eps) + math.fsum(_scaled_weights(int(N), eps))


def accelerated_return_time(N: int, eps: float) -> float:
    """Expected return time to 0 of the accelerated chain, ``1 / p~_0``."""
    _check_chain_args(N, eps)
    return 1.0 + math.fsum(_scaled_weights(int(N), eps))


def invariant_distribution(N: int, eps: float) -> np.ndarray:
    """Stationary law of the accelerated chain, proportional to
    ``A_i (i + 2) / (1 - e^{-(i+2) eps})`` (with ``A_0`` folded into the first
    entry)."""
    _check_chain_args(N, eps)
    w = np.array([1.0] + _scaled_weights(int(N), eps))
    return w / math.fsum(w)


@njit(cache=True)
def _discrete_excursions(rng, N, eps, n, out):
    leave = np.empty(N + 1)
    for i in range(N + 1):
        leave[i] = -np.expm1(-(i + 2) * eps)
    leave[N] *= (N + 1.0) / (N + 2.0)
    for r in range(n):
        steps = rng.geometric(leave[0])
        i = 1
        while i != 0:
            steps += rng.geometric(leave[i])
            if i < N:
                u = rng.random() * (i + 2.0)
                if u < 1.0:
                    i += 1
                    continue
                if u < 3.0:
                    i -= 1
                    continue
                k = 2 + int(u - 3.0)
            else:
                u = rng.random() * (N + 1.0)
                if u < 2.0:
                    i -= 1
                    continue
                k = 2 + int(u - 2.0)
            i -= k if k < i else i
        out[r] = steps


def sample_discretized_returns(N: int, eps: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo return times (in steps) of the discretised chain from 0."""
    _check_chain_args(N, eps)
    out = np.empty(int(n), dtype=np.int64)
    _discrete_excursions(rng, int(N), float(eps), int(n), out)
    return out


# ---------------------------------------------------------------------------
# limit along a schedule

def default_schedule(levels: int = 4) -> list[tuple[int, float]]:
    return [(50 * 2**k, float(50 * 2**k) ** -3) for k in range(levels)]


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    eps: float
    eps_E: float
    speed: float


@dataclass(frozen=True)
class TSquareEstimate:
    rows: tuple
    last: float
    extrapolated: float
    speed: float

    @property
    def E_T(self) -> float:
        return self.extrapolated


def speed_from_T(E_T: float) -> float:
    return 1.0 + 1.0 / (2.0 * E_T)


def validate_schedule(schedule: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    sched = [(int(N), float(eps)) for N, eps in schedule]
    if not sched:
        raise ValueError("empty schedule")
    for N, eps in sched:
        _check_chain_args(N, eps)
    for (N0, e0), (N1, e1) in zip(sched, sched[1:]):
        if N1 <= N0:
            raise ValueError(f"schedule N must increase ({N0} -> {N1})")
        if N1 * N1 * e1 >= N0 * N0 * e0:
            raise ValueError(f"schedule N^2 eps must decrease at N = {N1}")
    return sched


def approximate_T_square(schedule=None) -> TSquareEstimate:
    """``eps E[T^(N, eps)]`` along the schedule and its extrapolated limit.

    The limit is estimated from the last three values assuming geometric
    convergence of the successive differences; with fewer than three values
    the last value is used.
    """
    sched = validate_schedule(default_schedule() if schedule is None else schedule)
    rows = []
    for N, eps in sched:
        v = eps * expected_return_time(N, eps)
        rows.append(ConvergenceRow(N, eps, v, speed_from_T(v)))
    vals = [r.eps_E for r in rows]
    est = vals[-1]
    if len(vals) >= 3:
        d1, d2 = vals[-2] - vals[-3], vals[-1] - vals[-2]
        if d2 != 0 and d1 != d2 and abs(d2) < abs(d1):
            est = vals[-1] + d2 / (d1 / d2 - 1)
    return TSquareEstimate(tuple(rows), vals[-1], est, speed_from_T(est))
