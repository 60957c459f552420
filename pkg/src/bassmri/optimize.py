"""Sampling-pattern optimizers: BASS, forward greedy and a POSS-style baseline.

All three report a trace with one row per cost evaluation (BASS, POSS) or
per added point (greedy) and count reconstruction calls as the cost unit.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Dataset, SamplingPattern
from .objective import Criterion, Evaluation, epsilon_map, r_map
from .recon.encoding import CoilSensitivities
from .recon.reconstructors import Reconstructor
from .sampling import ConstraintMask, PositionalConstraint

log = logging.getLogger(__name__)

TRACE_FIELDS = ("iter", "size", "K", "F", "accepted", "recon_calls_cum", "wall_ms")


def add_count(size: int, M: int, K: int) -> int:
    """Number of points select-add must return."""
    return min(max(M + K - size, 0), K)


def remove_count(size: int, M: int, K: int) -> int:
    """Number of points select-remove must return."""
    return min(max(size + K - M, 0), K)


def shrink_K(K: int, alpha: float) -> int:
    return int(math.floor((K - 1) * alpha)) + 1


def default_rho_add(K: int, M: int, N: int) -> float:
    return K / M


def default_rho_remove(K: int, M: int) -> float:
    return K / M


def adjust_rho(rho: float, lower: float) -> float:
    """Force ``lower < rho <= 1``; an inadmissible value becomes ``min(1, 2 * lower)``."""
    if rho > 1.0:
        return 1.0
    if rho <= lower:
        return min(1.0, 2.0 * lower)
    return rho


@dataclass(frozen=True)
class BassConfig:
    M: int
    L: int = 100
    K_init: int = 10
    alpha: float = 0.5
    rho_add: Callable[[int, int, int], float] = default_rho_add
    rho_remove: Callable[[int, int], float] = default_rho_remove
    constraint: PositionalConstraint = PositionalConstraint()
    delta: float = 1e-12
    seed: int = 0
    criterion: str = "kspace"

    def validate(self, N: int):
        if not 0 < self.M < N:
            raise ValueError(f"M={self.M} must satisfy 0 < M < N={N}")
        if not 1 <= self.K_init < min(self.M, N - self.M):
            raise ValueError(f"K_init={self.K_init} must satisfy 1 <= K_init < min(M, N-M)={min(self.M, N - self.M)}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")


@dataclass
class TraceRow:
    iter: int
    size: int
    K: int
    F: float
    accepted: bool
    recon_calls_cum: int
    wall_ms: float

    def as_tuple(self):
        return tuple(getattr(self, f) for f in TRACE_FIELDS)


@dataclass
class OptimizerState:
    pattern: SamplingPattern
    K: int
    iteration: int
    cost: float
    eps: np.ndarray
    rmap: np.ndarray
    recon_calls: int
    rng: np.random.Generator
    trace: list = field(default_factory=list)
    best_pattern: SamplingPattern | None = None
    best_cost: float = math.inf
    last_added: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    last_removed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    warnings: list = field(default_factory=list)
    t0: float = field(default_factory=time.perf_counter)


@dataclass
class OptimizerResult:
    pattern: SamplingPattern
    trace: list
    cost: float
    recon_calls: int
    state: OptimizerState | None = None


def _select(pool: np.ndarray, count: int, rho: float, importance: np.ndarray,
            pc: PositionalConstraint | None, rng: np.random.Generator, grid) -> tuple[np.ndarray, bool]:
    """Bernoulli pre-selection, then highest-importance picks under the constraint.

    Doubles ``rho`` and redraws until ``count`` picks survive; at ``rho == 1``
    the constraint is dropped for the remaining picks. Returns
    ``(picks, relaxed)``.
    """
    if count == 0:
        return np.zeros(0, dtype=np.int64), False
    if pool.size < count:
        raise ValueError(f"cannot select {count} points from a pool of {pool.size}")
    while True:
        pre = pool[rng.random(pool.size) < rho]
        # descending importance, ties by ascending index
        order = pre[np.lexsort((pre, -importance[pre]))]
        chosen = []
        if pc is None:
            chosen = order[:count].tolist()
        else:
            cm = ConstraintMask(grid, pc)
            for k in order.tolist():
                if not cm.violates(k):
                    chosen.append(k)
                    cm.accept(k)
                    if len(chosen) == count:
                        break
        if len(chosen) == count:
            return np.asarray(chosen, dtype=np.int64), False
        if rho >= 1.0:
            break
        rho = min(1.0, 2.0 * rho)
    taken = set(chosen)
    rest = [k for k in order.tolist() if k not in taken][: count - len(chosen)]
    return np.asarray(chosen + rest, dtype=np.int64), True


def select_add(pattern: SamplingPattern, K: int, rho: float, eps: np.ndarray,
               pc: PositionalConstraint | None, rng: np.random.Generator, M: int):
    """Points to add, drawn from outside the pattern and ranked by the eps-map."""
    n = add_count(pattern.size, M, K)
    return _select(pattern.complement(), n, rho, eps, pc, rng, pattern.grid)


def select_remove(pattern: SamplingPattern, K: int, rho: float, rmap: np.ndarray,
                  pc: PositionalConstraint | None, rng: np.random.Generator, M: int):
    """Unlocked members to drop, ranked by the r-map."""
    n = remove_count(pattern.size, M, K)
    pool = pattern.unlocked
    if pool.size < n:
        raise ValueError(f"locked region leaves {pool.size} removable points, {n} required")
    return _select(pool, n, rho, rmap, pc, rng, pattern.grid)


def _maps(ev: Evaluation, dataset: Dataset, delta: float):
    return epsilon_map(ev.residuals, dataset), r_map(ev.residuals, dataset, delta)


def _row(state: OptimizerState, F: float, size: int, accepted: bool) -> TraceRow:
    return TraceRow(state.iteration, size, state.K, float(F), bool(accepted), state.recon_calls,
                    round(1e3 * (time.perf_counter() - state.t0), 3))


def bass_init(pattern: SamplingPattern, config: BassConfig, criterion: Criterion) -> OptimizerState:
    """Evaluate the initial pattern (trace row 0) and build its importance maps."""
    F, ev = criterion(pattern)
    eps, rm = _maps(ev, criterion.dataset, config.delta)
    state = OptimizerState(pattern=pattern, K=config.K_init, iteration=0, cost=F, eps=eps, rmap=rm,
                           recon_calls=ev.recon_calls, rng=np.random.default_rng(config.seed))
    if pattern.size == config.M:
        state.best_pattern, state.best_cost = pattern, F
    state.trace.append(_row(state, F, pattern.size, True))
    return state


def bass_step(state: OptimizerState, config: BassConfig, criterion: Criterion) -> OptimizerState:
    """One BASS iteration: remove, add, evaluate once, accept or shrink K."""
    omega, K, M = state.pattern, state.K, config.M
    grid = omega.grid
    N = grid.N
    rho_r = adjust_rho(config.rho_remove(K, M), K / M)
    rho_a = adjust_rho(config.rho_add(K, M, N), K / (N - M))
    removed, relaxed_r = select_remove(omega, K, rho_r, state.rmap, config.constraint, state.rng, M)
    added, relaxed_a = select_add(omega, K, rho_a, state.eps, config.constraint, state.rng, M)
    if relaxed_r or relaxed_a:
        state.warnings.append((state.iteration + 1, "positional constraint relaxed"))
    candidate = omega.replace(add=added, remove=removed)
    F, ev = criterion(candidate)
    state.iteration += 1
    state.recon_calls += ev.recon_calls
    state.last_added, state.last_removed = added, removed
    # off-size patterns always move toward M; at size M only non-increasing cost is kept
    accepted = omega.size != M or F <= state.cost
    if accepted:
        state.pattern, state.cost = candidate, F
        state.eps, state.rmap = _maps(ev, criterion.dataset, config.delta)
        if candidate.size == M and F < state.best_cost:
            state.best_pattern, state.best_cost = candidate, F
    else:
        state.K = shrink_K(K, config.alpha)
    state.trace.append(_row(state, F, candidate.size, accepted))
    return state


def min_iterations(init_size: int, M: int, K_init: int) -> int:
    return math.ceil(abs(init_size - M) / K_init) + 1


def bass_run(init: SamplingPattern, config: BassConfig, dataset: Dataset, reconstructor: Reconstructor,
             sens: CoilSensitivities | None = None, threads: int = 1, max_recon_calls: int | None = None,
             callback: Callable[[OptimizerState], None] | None = None) -> OptimizerResult:
    """Run ``L - 1`` BASS steps after evaluating ``init``; the trace has ``L`` rows.

    Returns the lowest-cost size-M pattern seen.
    """
    N = init.grid.N
    config.validate(N)
    need = min_iterations(init.size, config.M, config.K_init)
    if config.L < need and max_recon_calls is None:
        raise ValueError(f"L={config.L} is too small to reach size M={config.M} from {init.size} "
                         f"points with K_init={config.K_init}; need L >= {need}")
    if init.locked.size > config.M:
        raise ValueError("locked region is larger than M")
    criterion = Criterion(dataset, reconstructor, config.criterion, sens, threads)
    state = bass_init(init, config, criterion)
    for _ in range(config.L - 1):
        if max_recon_calls is not None and state.recon_calls + len(dataset) > max_recon_calls:
            break
        bass_step(state, config, criterion)
        if callback is not None:
            callback(state)
    best = state.best_pattern if state.best_pattern is not None else state.pattern
    cost = state.best_cost if state.best_pattern is not None else state.cost
    for it, msg in state.warnings:
        log.debug("iteration %d: %s", it, msg)
    return OptimizerResult(pattern=best, trace=state.trace, cost=cost, recon_calls=state.recon_calls,
                           state=state)


def greedy_forward(init: SamplingPattern, M: int, dataset: Dataset, reconstructor: Reconstructor,
                   lazy: bool = True, criterion: str = "kspace", sens: CoilSensitivities | None = None,
                   threads: int = 1, max_recon_calls: int | None = None) -> OptimizerResult:
    """Add the single best point at a time until the pattern holds ``M`` points.

    With ``lazy=True`` candidates are ranked by their last known marginal
    gain and only the head of the queue is re-evaluated, stopping once a
    freshly evaluated gain tops every stale bound. An empty starting
    pattern is assigned cost 1 (no samples, zero estimate).
    """
    if M <= init.size:
        if M == init.size:
            return OptimizerResult(pattern=init, trace=[], cost=math.nan, recon_calls=0)
        raise ValueError(f"M={M} must exceed the initial size {init.size}")
    crit = Criterion(dataset, reconstructor, criterion, sens, threads)
    t0 = time.perf_counter()
    calls = 0
    trace: list[TraceRow] = []
    omega = init

    def evaluate(k) -> float:
        nonlocal calls
        F, ev = crit(omega.replace(add=[k]))
        calls += ev.recon_calls
        return F

    def out_of_budget():
        return max_recon_calls is not None and calls + len(dataset) > max_recon_calls

    def record(F):
        trace.append(TraceRow(len(trace) + 1, omega.size, 1, float(F), True, calls,
                              round(1e3 * (time.perf_counter() - t0), 3)))

    current = math.nan
    if not lazy:
        while omega.size < M and not out_of_budget():
            best_k, best_F = -1, math.inf
            for k in omega.complement().tolist():
                if out_of_budget():
                    break
                F = evaluate(k)
                if F < best_F:
                    best_k, best_F = k, F
            if best_k < 0:
                break
            omega, current = omega.replace(add=[best_k]), best_F
            record(current)
        return OptimizerResult(pattern=omega, trace=trace, cost=current, recon_calls=calls)

    if init.size:
        base, ev = crit(init)
        calls += ev.recon_calls
    else:
        base = 1.0
    heap = []
    rnd = 0
    for k in omega.complement().tolist():
        if out_of_budget():
            break
        heapq.heappush(heap, (-(base - evaluate(k)), k, rnd))
    current = base
    while omega.size < M and heap:
        neg_gain, k, stamp = heapq.heappop(heap)
        if stamp == rnd:
            omega, current = omega.replace(add=[k]), current + neg_gain
            rnd += 1
            record(current)
            continue
        if out_of_budget():
            break
        heapq.heappush(heap, (-(current - evaluate(k)), k, rnd))
    return OptimizerResult(pattern=omega, trace=trace, cost=current, recon_calls=calls)


def poss_run(init: SamplingPattern, M: int, L: int, dataset: Dataset, reconstructor: Reconstructor,
             seed: int = 0, criterion: str = "kspace", sens: CoilSensitivities | None = None,
             threads: int = 1, max_recon_calls: int | None = None) -> OptimizerResult:
    """Single-objective bit-flip search: mutate, repair to size M, keep if not worse."""
    crit = Criterion(dataset, reconstructor, criterion, sens, threads)
    rng = np.random.default_rng(seed)
    grid = init.grid
    N = grid.N
    locked = init.locked_mask
    t0 = time.perf_counter()
    omega = init
    F, ev = crit(omega)
    calls = ev.recon_calls
    trace = [TraceRow(0, omega.size, 1, F, True, calls, 0.0)]
    best, best_F = (omega, F) if omega.size == M else (None, math.inf)
    for it in range(1, L):
        if max_recon_calls is not None and calls + len(dataset) > max_recon_calls:
            break
        flips = (rng.random(N) < 1.0 / N) & ~locked
        mask = omega.mask ^ flips
        size = int(mask.sum())
        if size > M:
            members = np.flatnonzero(mask & ~locked)
            mask[rng.choice(members, size - M, replace=False)] = False
        elif size < M:
            outside = np.flatnonzero(~mask)
            mask[rng.choice(outside, M - size, replace=False)] = True
        cand = SamplingPattern(grid, np.flatnonzero(mask), init.locked)
        Fc, ev = crit(cand)
        calls += ev.recon_calls
        accepted = omega.size != M or Fc <= F
        if accepted:
            omega, F = cand, Fc
            if Fc < best_F:
                best, best_F = cand, Fc
        trace.append(TraceRow(it, cand.size, 1, Fc, accepted, calls,
                              round(1e3 * (time.perf_counter() - t0), 3)))
    if best is None:
        best, best_F = omega, F
    return OptimizerResult(pattern=best, trace=trace, cost=best_F, recon_calls=calls)
