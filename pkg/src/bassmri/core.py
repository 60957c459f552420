"""Domain types shared by every module: grids, k-space volumes, patterns, datasets.

Point indices run row-major over ``(t, ky, kx)``::

    k = (t * ny + ky) * nx + kx

so a k-space volume stored as ``(nc, nt, ny, nx)`` flattens to ``(nc, N)``
with column ``k`` holding the per-coil values of point ``k``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np


class BassError(Exception):
    """Base class for errors raised by this package."""


class GridMismatchError(BassError, ValueError):
    pass


class DataFormatError(BassError, ValueError):
    """Malformed files or data containers."""


class NumericalError(BassError, ArithmeticError):
    """A numerical routine failed (divergence, zero norms, ...)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KSpaceGrid:
    nx: int
    ny: int
    nt: int = 1
    nc: int = 1

    def __post_init__(self):
        for name in ("nx", "ny", "nt", "nc"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def N(self) -> int:
        """Number of spatial-temporal sample points (coils excluded)."""
        return self.nx * self.ny * self.nt

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nt, self.ny, self.nx)

    @property
    def center(self) -> tuple[int, int]:
        """(kx, ky) of the DC bin in the centred layout."""
        return (self.nx // 2, self.ny // 2)

    def index_of(self, kx, ky, t=0):
        k = (np.asarray(t) * self.ny + np.asarray(ky)) * self.nx + np.asarray(kx)
        return int(k) if k.ndim == 0 else k

    def coords_of(self, k):
        """Return ``(kx, ky, t)`` for point index (or array of indices) ``k``."""
        t, rem = np.divmod(k, self.nx * self.ny)
        ky, kx = np.divmod(rem, self.nx)
        if np.ndim(k) == 0:
            return int(kx), int(ky), int(t)
        return kx, ky, t

    def same_space(self, other: "KSpaceGrid") -> bool:
        return (self.nx, self.ny, self.nt) == (other.nx, other.ny, other.nt)


class MultiCoilKSpace:
    """Immutable complex k-space volume on a full grid.

    ``values`` has shape ``(nc, nt, ny, nx)``; ``rows`` is the ``(N, nc)``
    view indexed by point.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: KSpaceGrid, values):
        values = np.asarray(values)
        if values.shape != (grid.nc, grid.nt, grid.ny, grid.nx):
            raise GridMismatchError(
                f"values shape {values.shape} does not match grid "
                f"{(grid.nc, grid.nt, grid.ny, grid.nx)}"
            )
        if not np.iscomplexobj(values):
            values = values.astype(np.complex128)
        elif values.dtype != np.complex128:
            values = values.astype(np.complex128)
        if not np.all(np.isfinite(values)):
            raise NumericalError("k-space values must be finite")
        if values.flags.writeable:
            values = _frozen(values.copy())
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("MultiCoilKSpace is immutable")

    @classmethod
    def from_rows(cls, grid: KSpaceGrid, rows) -> "MultiCoilKSpace":
        rows = np.asarray(rows, dtype=np.complex128)
        if rows.ndim == 1 and grid.nc == 1:
            rows = rows[:, None]
        if rows.shape != (grid.N, grid.nc):
            raise GridMismatchError(f"rows shape {rows.shape} != {(grid.N, grid.nc)}")
        return cls(grid, np.ascontiguousarray(rows.T).reshape(grid.nc, *grid.shape))

    @property
    def rows(self) -> np.ndarray:
        return self.values.reshape(self.grid.nc, self.grid.N).T

    @property
    def flat(self) -> np.ndarray:
        """``(nc, N)`` view."""
        return self.values.reshape(self.grid.nc, self.grid.N)

    def norm_sq(self) -> float:
        return float(np.vdot(self.values, self.values).real)

    def __eq__(self, other):
        if not isinstance(other, MultiCoilKSpace):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None

    def __repr__(self):
        return f"MultiCoilKSpace({self.grid})"


@dataclass(frozen=True, eq=False)
class ImageVolume:
    """Complex image ``data`` of shape ``(nt, ny, nx)``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.complex128)
        if d.ndim == 2:
            d = d[None]
        if d.ndim != 3:
            raise ValueError(f"image must be (nt, ny, nx), got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise NumericalError("image values must be finite")
        object.__setattr__(self, "data", _frozen(d.copy()))

    @property
    def nt(self):
        return self.data.shape[0]

    @property
    def ny(self):
        return self.data.shape[1]

    @property
    def nx(self):
        return self.data.shape[2]


class SamplingPattern:
    """A subset of grid points, with a locked calibration subset.

    Holds both a membership bitmap (O(1) tests) and the sorted index list.
    """

    __slots__ = ("grid", "indices", "mask", "locked")

    def __init__(self, grid: KSpaceGrid, members: Iterable[int] = (), locked: Iterable[int] = ()):
        idx = np.unique(np.asarray(list(members) if not isinstance(members, np.ndarray) else members,
                                   dtype=np.int64))
        lk = np.unique(np.asarray(list(locked) if not isinstance(locked, np.ndarray) else locked,
                                  dtype=np.int64))
        N = grid.N
        if idx.size and (idx[0] < 0 or idx[-1] >= N):
            raise IndexError(f"pattern index out of range [0, {N})")
        mask = np.zeros(N, dtype=bool)
        mask[idx] = True
        if lk.size and not mask[lk].all():
            raise ValueError("locked points must be members of the pattern")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "indices", _frozen(idx))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "locked", _frozen(lk))

    def __setattr__(self, name, value):
        raise AttributeError("SamplingPattern is immutable")

    @classmethod
    def full(cls, grid: KSpaceGrid, locked: Iterable[int] = ()) -> "SamplingPattern":
        return cls(grid, np.arange(grid.N), locked)

    @classmethod
    def from_mask(cls, grid: KSpaceGrid, mask, locked=()) -> "SamplingPattern":
        return cls(grid, np.flatnonzero(np.asarray(mask).ravel()), locked)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.size

    def __contains__(self, k) -> bool:
        return 0 <= k < self.grid.N and bool(self.mask[k])

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices.tolist())

    @property
    def locked_mask(self) -> np.ndarray:
        m = np.zeros(self.grid.N, dtype=bool)
        m[self.locked] = True
        return m

    @property
    def unlocked(self) -> np.ndarray:
        return np.setdiff1d(self.indices, self.locked, assume_unique=True)

    def complement(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    def replace(self, add=(), remove=()) -> "SamplingPattern":
        """New pattern ``add ∪ (self \\ remove)``; locked points survive."""
        mask = self.mask.copy()
        mask[np.asarray(remove, dtype=np.int64)] = False
        mask[np.asarray(add, dtype=np.int64)] = True
        if self.locked.size and not mask[self.locked].all():
            raise ValueError("cannot remove locked points")
        return SamplingPattern(self.grid, np.flatnonzero(mask), self.locked)

    def volume_mask(self) -> np.ndarray:
        """Boolean ``(nt, ny, nx)`` view of the membership bitmap."""
        return self.mask.reshape(self.grid.shape)

    def __eq__(self, other):
        if not isinstance(other, SamplingPattern):
            return NotImplemented
        return (self.grid.same_space(other.grid)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.locked, other.locked))

    def __hash__(self):
        return hash((self.grid.nx, self.grid.ny, self.grid.nt,
                     self.indices.tobytes(), self.locked.tobytes()))

    def __repr__(self):
        return f"SamplingPattern(M={self.size}, locked={self.locked.size}, N={self.grid.N})"


class Dataset(Sequence):
    """Items sharing one grid (training or validation split)."""

    def __init__(self, items: Sequence[MultiCoilKSpace]):
        items = list(items)
        if not items:
            raise ValueError("dataset needs at least one item")
        grid = items[0].grid
        for i, it in enumerate(items):
            if it.grid != grid:
                raise GridMismatchError(f"item {i} grid {it.grid} != {grid}")
        self.items = items
        self.grid = grid

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.items[i])
        return self.items[i]

    def split(self, n_train: int, n_validation: int | None = None) -> tuple["Dataset", "Dataset | None"]:
        """Disjoint split by item index: first ``n_train`` items, then the rest."""
        if not 1 <= n_train <= len(self):
            raise ValueError(f"n_train must be in [1, {len(self)}]")
        rest = self.items[n_train:] if n_validation is None else self.items[n_train:n_train + n_validation]
        if n_validation is not None and len(rest) != n_validation:
            raise ValueError(f"only {len(rest)} items left for validation, {n_validation} requested")
        return Dataset(self.items[:n_train]), (Dataset(rest) if rest else None)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        g = self.grid
        h.update(np.array([g.nx, g.ny, g.nt, g.nc, len(self)], dtype=np.int64).tobytes())
        for it in self.items:
            h.update(np.ascontiguousarray(it.values).tobytes())
        return h.hexdigest()


def acceleration_factor(pattern: SamplingPattern) -> Fraction:
    """N / M as an exact fraction."""
    if pattern.size == 0:
        raise ValueError("empty pattern")
    return Fraction(pattern.grid.N, pattern.size)


def _check_grid(pattern: SamplingPattern, grid: KSpaceGrid):
    if not pattern.grid.same_space(grid):
        raise GridMismatchError(f"pattern grid {pattern.grid} does not match data grid {grid}")


def apply_sampling(pattern: SamplingPattern, data: MultiCoilKSpace) -> np.ndarray:
    """Rows of ``data`` at the pattern's points, ascending index order, shape ``(M, nc)``."""
    _check_grid(pattern, data.grid)
    return data.rows[pattern.indices]


def embed_sampled(pattern: SamplingPattern, sampled, nc: int | None = None) -> MultiCoilKSpace:
    """Zero-filled full-grid volume holding ``sampled`` at the pattern's points."""
    sampled = np.asarray(sampled, dtype=np.complex128)
    if sampled.ndim == 1:
        sampled = sampled[:, None]
    if sampled.shape[0] != pattern.size:
        raise ValueError(f"sampled length {sampled.shape[0]} != pattern size {pattern.size}")
    nc = sampled.shape[1] if nc is None else nc
    g = pattern.grid
    grid = KSpaceGrid(g.nx, g.ny, g.nt, nc)
    flat = np.zeros((nc, grid.N), dtype=np.complex128)
    flat[:, pattern.indices] = sampled.T
    return MultiCoilKSpace(grid, flat.reshape(nc, *grid.shape))


def normalize(data: MultiCoilKSpace) -> MultiCoilKSpace:
    """Divide by the largest modulus so the result peaks at exactly 1."""
    peak = float(np.max(np.abs(data.values)))
    if peak == 0.0:
        raise NumericalError("cannot normalize an all-zero volume")
    out = data.values / peak
    # guard the invariant against the last-ulp rounding of |z| / peak
    m = np.max(np.abs(out))
    if m != 1.0:
        out = out / m
    return MultiCoilKSpace(data.grid, out)
