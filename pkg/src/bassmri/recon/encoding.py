"""Encoding operator E = F C and coil combination.

FFTs are unitary (``norm="ortho"``) and centred, so the adjoint of ``F`` is
its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import GridMismatchError, ImageVolume, KSpaceGrid, MultiCoilKSpace


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centred unitary 2D FFT over the last two axes."""
    ax = (-2, -1)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x, axes=ax), norm="ortho"), axes=ax)


def ifft2c(k: np.ndarray) -> np.ndarray:
    ax = (-2, -1)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=ax), norm="ortho"), axes=ax)


@dataclass(frozen=True, eq=False)
class CoilSensitivities:
    """Complex coil maps, shape ``(nc, ny, nx)``, shared by all frames."""

    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.complex128)
        if m.ndim == 2:
            m = m[None]
        if m.ndim != 3:
            raise ValueError(f"sensitivities must be (nc, ny, nx), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("sensitivities must be finite")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "maps", m)

    @property
    def nc(self) -> int:
        return self.maps.shape[0]

    @property
    def sos(self) -> np.ndarray:
        """Per-pixel sum over coils of |C|^2, shape ``(ny, nx)``."""
        return np.sum(np.abs(self.maps) ** 2, axis=0)

    @classmethod
    def ones(cls, ny: int, nx: int) -> "CoilSensitivities":
        return cls(np.ones((1, ny, nx), dtype=np.complex128))


def _image_array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, ImageVolume) else x, dtype=np.complex128)


def encode(x: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """``(nt, ny, nx)`` image -> ``(nc, nt, ny, nx)`` k-space."""
    return fft2c(maps[:, None] * x[None])


def encode_adjoint(k: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """E^H: ``(nc, nt, ny, nx)`` -> ``(nt, ny, nx)``."""
    return np.sum(np.conj(maps)[:, None] * ifft2c(k), axis=0)


def combine_weights(maps: np.ndarray) -> np.ndarray:
    sos = np.sum(np.abs(maps) ** 2, axis=0)
    inv = np.divide(1.0, sos, out=np.zeros_like(sos), where=sos > 0)
    return np.conj(maps) * inv


def _check(x: np.ndarray, sens: CoilSensitivities):
    if x.ndim != 3 or x.shape[1:] != sens.maps.shape[1:]:
        raise GridMismatchError(f"image shape {x.shape} incompatible with sensitivities {sens.maps.shape}")


def forward_E(x, sens: CoilSensitivities) -> MultiCoilKSpace:
    """Per frame and coil, the unitary 2D FFT of ``C_c * x_t``."""
    x = _image_array(x)
    if x.ndim == 2:
        x = x[None]
    _check(x, sens)
    nt, ny, nx = x.shape
    return MultiCoilKSpace(KSpaceGrid(nx, ny, nt, sens.nc), encode(x, sens.maps))


def adjoint_E(m: MultiCoilKSpace, sens: CoilSensitivities) -> ImageVolume:
    if m.grid.nc != sens.nc or (m.grid.ny, m.grid.nx) != sens.maps.shape[1:]:
        raise GridMismatchError(f"k-space {m.grid} incompatible with sensitivities {sens.maps.shape}")
    return ImageVolume(encode_adjoint(m.values, sens.maps))


def coil_combine(m: MultiCoilKSpace, sens: CoilSensitivities) -> ImageVolume:
    """Least-squares per-pixel unmixing with weights conj(C) / sum|C|^2."""
    if m.grid.nc != sens.nc or (m.grid.ny, m.grid.nx) != sens.maps.shape[1:]:
        raise GridMismatchError(f"k-space {m.grid} incompatible with sensitivities {sens.maps.shape}")
    w = combine_weights(sens.maps)
    return ImageVolume(np.sum(w[:, None] * ifft2c(m.values), axis=0))
