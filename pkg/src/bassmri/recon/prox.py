"""Proximal maps for the CS priors."""

from __future__ import annotations

import numpy as np

from ..core import ImageVolume


def soft_threshold(z: np.ndarray, theta: float) -> np.ndarray:
    """Complex soft threshold: shrink moduli by ``theta``, keep phases."""
    mag = np.abs(z)
    scale = np.maximum(mag - theta, 0.0)
    return np.where(mag > 0, z * (scale / np.where(mag > 0, mag, 1.0)), 0.0)


def finite_differences(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y within each frame (no wrap-around)."""
    return x[..., :, 1:] - x[..., :, :-1], x[..., 1:, :] - x[..., :-1, :]


def finite_differences_adjoint(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    shape = px.shape[:-1] + (px.shape[-1] + 1,)
    out = np.zeros(shape, dtype=np.result_type(px, py))
    out[..., :, :-1] -= px
    out[..., :, 1:] += px
    out[..., :-1, :] -= py
    out[..., 1:, :] += py
    return out


def sfd_norm(x: np.ndarray) -> float:
    """Anisotropic total variation, sum of |differences| over frames."""
    dx, dy = finite_differences(x)
    return float(np.abs(dx).sum() + np.abs(dy).sum())


def _project_unit(p: np.ndarray) -> np.ndarray:
    a = np.abs(p)
    np.maximum(a, 1.0, out=a)
    p /= a
    return p


def _div_into(out: np.ndarray, px: np.ndarray, py: np.ndarray):
    """``out = finite_differences_adjoint(px, py)`` without temporaries."""
    out[..., :, -1] = 0
    out[..., :, :-1] = px
    np.negative(out[..., :, :-1], out=out[..., :, :-1])
    out[..., :, 1:] += px
    out[..., :-1, :] -= py
    out[..., 1:, :] += py


def tv_prox(v: np.ndarray, theta: float, n_iter: int = 10, dual=None):
    """Fast gradient projection on the TV dual.

    Returns ``(x, dual)``; feed ``dual`` back in to warm-start the next call.
    """
    v = np.asarray(v)
    if theta <= 0 or v.shape[-1] * v.shape[-2] == 1:
        return v.copy(), dual
    dt = np.result_type(v, np.complex128)
    if dual is None:
        px = np.zeros(v.shape[:-1] + (v.shape[-1] - 1,), dtype=dt)
        py = np.zeros(v.shape[:-2] + (v.shape[-2] - 1, v.shape[-1]), dtype=dt)
    else:
        px, py = dual
    rx, ry = px.copy(), py.copy()
    t = 1.0
    step = 1.0 / (8.0 * theta)
    w = np.empty(v.shape, dtype=dt)
    for _ in range(n_iter):
        _div_into(w, rx, ry)
        w *= -theta
        w += v
        w *= step
        nx_ = rx
        nx_ += w[..., :, 1:]
        nx_ -= w[..., :, :-1]
        ny_ = ry
        ny_ += w[..., 1:, :]
        ny_ -= w[..., :-1, :]
        _project_unit(nx_)
        _project_unit(ny_)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        c = (t - 1.0) / t_new
        # r = p_new + c (p_new - p_old); p_old <- p_new
        rx, px = nx_ + c * (nx_ - px), nx_
        ry, py = ny_ + c * (ny_ - py), ny_
        t = t_new
    _div_into(w, px, py)
    w *= -theta
    w += v
    return w, (px, py)


def prox_sfd(v, theta: float, n_iter: int = 10) -> ImageVolume:
    """Approximate prox of ``theta * ||T x||_1`` (anisotropic, per frame)."""
    data = v.data if isinstance(v, ImageVolume) else np.asarray(v, dtype=np.complex128)
    x, _ = tv_prox(data, theta, n_iter)
    return ImageVolume(x)


def svt(x: np.ndarray, theta: float) -> np.ndarray:
    """Singular-value soft threshold of the ``(pixels, frames)`` Casorati matrix."""
    nt = x.shape[0]
    cas = x.reshape(nt, -1).T
    u, s, vh = np.linalg.svd(cas, full_matrices=False)
    s = np.maximum(s - theta, 0.0)
    return ((u * s) @ vh).T.reshape(x.shape)


def nuclear_norm(x: np.ndarray) -> float:
    return float(np.linalg.svd(x.reshape(x.shape[0], -1).T, compute_uv=False).sum())


def prox_nuclear(x, theta: float) -> ImageVolume:
    data = x.data if isinstance(x, ImageVolume) else np.asarray(x, dtype=np.complex128)
    if theta <= 0:
        return ImageVolume(data)
    return ImageVolume(svt(data, theta))
