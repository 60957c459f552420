"""Sampling-pattern generators, positional constraints and conjugate symmetry.

k-space is stored centred: the DC bin of each frame sits at
``(nx // 2, ny // 2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import KSpaceGrid, SamplingPattern

log = logging.getLogger(__name__)

GENERATOR_KINDS = ("variable-density", "poisson-disk", "center-only", "uniform-random")


@dataclass(frozen=True)
class PositionalConstraint:
    """Points picked in one selection call must not be neighbours or conjugates.

    ``radius`` is a Chebyshev distance in the (kx, ky) plane of one frame,
    so ``radius=1`` forbids the 8-neighbourhood. ``radius=0`` disables the
    adjacency rule.
    """

    radius: int = 1
    exclude_conjugate: bool = True

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("adjacency radius must be >= 0")


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "variable-density"
    M: int = 0
    # variable-density law: p(d) ∝ (1 + d / sigma) ** (-power), d in grid steps
    sigma: float = 4.0
    power: float = 2.0
    # Poisson-disk minimum distance (grid steps, Euclidean, same frame)
    radius: float = 1.5
    # calibration block is 2*hx by 2*hy points around DC
    calib: tuple[int, int] = (0, 0)
    calib_frames: str = "all"  # "all" | "first"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.sigma <= 0 or self.power < 0:
            raise ValueError("variable-density sigma must be > 0 and power >= 0")
        if self.radius < 0:
            raise ValueError("Poisson-disk radius must be >= 0")
        if self.calib_frames not in ("all", "first"):
            raise ValueError("calib_frames must be 'all' or 'first'")
        object.__setattr__(self, "calib", tuple(int(c) for c in self.calib))


def calibration_region(grid: KSpaceGrid, half_widths=(0, 0), frames: str = "all") -> np.ndarray:
    """Sorted indices of the central ``2*hx x 2*hy`` block."""
    hx, hy = half_widths
    if hx < 0 or hy < 0 or 2 * hx > grid.nx or 2 * hy > grid.ny:
        raise ValueError(f"calibration half-widths {half_widths} do not fit grid {grid.nx}x{grid.ny}")
    if hx == 0 or hy == 0:
        return np.zeros(0, dtype=np.int64)
    cx, cy = grid.center
    kx = np.arange(cx - hx, cx + hx)
    ky = np.arange(cy - hy, cy + hy)
    ts = range(grid.nt) if frames == "all" else [0]
    out = [grid.index_of(*np.meshgrid(kx, ky, indexing="xy"), t).ravel() for t in ts]
    return np.sort(np.concatenate(out)).astype(np.int64)


def center_distance(grid: KSpaceGrid) -> np.ndarray:
    """Euclidean (kx, ky) distance of every point to the DC bin, shape ``(N,)``."""
    kx, ky, _ = grid.coords_of(np.arange(grid.N))
    cx, cy = grid.center
    return np.hypot(kx - cx, ky - cy)


def density_weights(grid: KSpaceGrid, sigma: float, power: float) -> np.ndarray:
    return (1.0 + center_distance(grid) / sigma) ** (-power)


def _priority_order(candidates, weights, rng):
    # Bernoulli(s * w) draws with a common scale s keep exactly the points
    # whose key u / w falls below s; sorting by key therefore lets any target
    # count be hit exactly (oversample, then trim the lowest-priority points).
    u = rng.random(candidates.size)
    with np.errstate(divide="ignore"):
        key = np.where(weights > 0, u / np.maximum(weights, 1e-300), np.inf)
    return candidates[np.lexsort((candidates, key))]


def _poisson_select(grid, order, count, radius):
    chosen = []
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    kx, ky, t = grid.coords_of(order)
    r2 = radius * radius
    rr = int(np.ceil(radius))
    occupied = {}  # (t, cell_x, cell_y) -> list of (kx, ky)
    for k, x, y, f in zip(order.tolist(), kx.tolist(), ky.tolist(), t.tolist()):
        ok = True
        for dx in range(-rr, rr + 1):
            for dy in range(-rr, rr + 1):
                for px, py in occupied.get((f, x + dx, y + dy), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < r2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            occupied.setdefault((f, x, y), []).append((x, y))
            chosen.append(k)
            if len(chosen) == count:
                break
    return np.asarray(chosen, dtype=np.int64)


def generate(config: GeneratorConfig, grid: KSpaceGrid) -> SamplingPattern:
    """Build a pattern of exactly ``config.M`` points, calibration block locked."""
    locked = calibration_region(grid, config.calib, config.calib_frames)
    M = int(config.M)
    if M > grid.N:
        raise ValueError(f"target M={M} exceeds grid size N={grid.N}")
    if M < locked.size:
        raise ValueError(f"target M={M} is smaller than the calibration region ({locked.size} points)")
    rng = np.random.default_rng(config.seed)
    need = M - locked.size
    free = np.setdiff1d(np.arange(grid.N), locked, assume_unique=True)

    if config.kind == "center-only":
        d = center_distance(grid)[free]
        extra = free[np.lexsort((free, d))][:need]
    elif config.kind == "uniform-random":
        extra = free[rng.permutation(free.size)[:need]]
    elif config.kind == "variable-density":
        w = density_weights(grid, config.sigma, config.power)[free]
        extra = _priority_order(free, w, rng)[:need]
    else:  # poisson-disk
        w = density_weights(grid, config.sigma, config.power)[free]
        order = _priority_order(free, w, rng)
        extra = _poisson_select(grid, order, need, config.radius)
        if extra.size < need:
            log.warning("Poisson disk radius %.3g admits only %d of %d points; padding by density",
                        config.radius, extra.size, need)
            rest = order[~np.isin(order, extra)]
            extra = np.concatenate([extra, rest[: need - extra.size]])
    return SamplingPattern(grid, np.concatenate([locked, extra]), locked)


def conjugate_index(k, grid: KSpaceGrid):
    """Index of the point mirrored through DC in the same frame."""
    kx, ky, t = grid.coords_of(k)
    cx, cy = grid.center
    return grid.index_of((2 * cx - np.asarray(kx)) % grid.nx, (2 * cy - np.asarray(ky)) % grid.ny, t)


def violates_constraint(candidate: int, chosen, pc: PositionalConstraint, grid: KSpaceGrid) -> bool:
    """True iff ``candidate`` neighbours (same frame) or mirrors a chosen point."""
    chosen = np.asarray(list(chosen), dtype=np.int64)
    if chosen.size == 0:
        return False
    x, y, t = grid.coords_of(candidate)
    cx, cy, ct = grid.coords_of(chosen)
    if pc.radius > 0:
        near = (ct == t) & (np.abs(cx - x) <= pc.radius) & (np.abs(cy - y) <= pc.radius)
        if near.any():
            return True
    if pc.exclude_conjugate:
        if np.any(conjugate_index(chosen, grid) == candidate):
            return True
    return False


class ConstraintMask:
    """Incremental blocked-point bitmap equivalent to :func:`violates_constraint`.

    Accepting a point blocks its neighbourhood and its conjugate, so each
    subsequent test is a single lookup.
    """

    def __init__(self, grid: KSpaceGrid, pc: PositionalConstraint):
        self.grid = grid
        self.pc = pc
        self.blocked = np.zeros(grid.shape, dtype=bool)

    def violates(self, k: int) -> bool:
        x, y, t = self.grid.coords_of(k)
        return bool(self.blocked[t, y, x])

    def accept(self, k: int):
        g, r = self.grid, self.pc.radius
        x, y, t = g.coords_of(k)
        if r > 0:
            self.blocked[t, max(0, y - r):y + r + 1, max(0, x - r):x + r + 1] = True
        if self.pc.exclude_conjugate:
            cx, cy = g.center
            self.blocked[t, (2 * cy - y) % g.ny, (2 * cx - x) % g.nx] = True
