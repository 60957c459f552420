"""Reconstruction oracles ``R(pattern, sampled) -> full k-space estimate``."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import KSpaceGrid, MultiCoilKSpace, SamplingPattern, embed_sampled
from .encoding import CoilSensitivities, combine_weights, encode, encode_adjoint, ifft2c
from .fista import FistaResult, fista_ls
from .prox import nuclear_norm, sfd_norm, soft_threshold, svt, tv_prox

METHODS = ("zero-fill", "cs-sfd", "cs-lr", "cs-dic")


@dataclass(frozen=True)
class ReconConfig:
    method: str = "zero-fill"
    lam: float = 1e-3
    max_iter: int = 30
    tol: float = 0.0
    inner_iter: int = 10
    # cs-dic atoms exp(-t / T_j); empty means defaults derived from nt
    decay_constants: tuple = ()
    frame_times: tuple = ()
    # initial Lipschitz guess as a fraction of the analytic bound
    step_scale: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown reconstruction method {self.method!r}; expected one of {METHODS}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iter < 1 or self.inner_iter < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.step_scale <= 0:
            raise ValueError("step_scale must be > 0")
        object.__setattr__(self, "decay_constants", tuple(float(v) for v in self.decay_constants))
        object.__setattr__(self, "frame_times", tuple(float(v) for v in self.frame_times))

    def with_lam(self, lam: float) -> "ReconConfig":
        d = dict(self.__dict__)
        d["lam"] = float(lam)
        return ReconConfig(**d)


@dataclass
class ReconResult:
    image: np.ndarray  # (nt, ny, nx)
    kspace: MultiCoilKSpace
    costs: list = field(default_factory=list)
    iterations: int = 0
    coefficients: np.ndarray | None = None  # cs-dic only


def exponential_dictionary(frame_times: Sequence[float], decay_constants: Sequence[float]) -> np.ndarray:
    """Unit-norm atoms ``exp(-t / T_j)`` as columns, shape ``(nt, J)``."""
    t = np.asarray(frame_times, dtype=float)[:, None]
    T = np.asarray(decay_constants, dtype=float)[None, :]
    if np.any(T <= 0):
        raise ValueError("decay constants must be > 0")
    D = np.exp(-t / T)
    return D / np.linalg.norm(D, axis=0, keepdims=True)


class Reconstructor:
    """Base oracle; counts every invocation in :attr:`calls`."""

    method = "abstract"

    def __init__(self, sens: CoilSensitivities, config: ReconConfig | None = None):
        self.sens = sens
        self.config = config or ReconConfig(method=self.method)
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def reset_calls(self):
        with self._lock:
            self._calls = 0

    def solve(self, pattern: SamplingPattern, sampled: np.ndarray) -> ReconResult:
        with self._lock:
            self._calls += 1
        sampled = np.asarray(sampled, dtype=np.complex128)
        if sampled.ndim == 1:
            sampled = sampled[:, None]
        return self._solve(pattern, sampled)

    def __call__(self, pattern: SamplingPattern, sampled) -> MultiCoilKSpace:
        return self.solve(pattern, sampled).kspace

    def _solve(self, pattern, sampled) -> ReconResult:
        raise NotImplementedError

    def _grid(self, pattern: SamplingPattern) -> KSpaceGrid:
        g = pattern.grid
        return KSpaceGrid(g.nx, g.ny, g.nt, self.sens.nc)

    def _zero_filled(self, pattern, sampled) -> np.ndarray:
        return embed_sampled(pattern, sampled, self.sens.nc).values


class ZeroFillReconstructor(Reconstructor):
    """Coil-combine the zero-filled data, re-encode, restore measured rows."""

    method = "zero-fill"

    def _solve(self, pattern, sampled):
        grid = self._grid(pattern)
        z = self._zero_filled(pattern, sampled)
        w = combine_weights(self.sens.maps)
        x = np.sum(w[:, None] * ifft2c(z), axis=0)
        k = encode(x, self.sens.maps).reshape(grid.nc, grid.N)
        k[:, pattern.indices] = sampled.T
        return ReconResult(image=x, kspace=MultiCoilKSpace(grid, k.reshape(grid.nc, *grid.shape)))


class _FistaReconstructor(Reconstructor):
    def _bound(self) -> float:
        return 2.0 * float(np.max(self.sens.sos))

    def _finish(self, grid, x, res: FistaResult) -> ReconResult:
        k = MultiCoilKSpace(grid, encode(x, self.sens.maps))
        return ReconResult(image=x, kspace=k, costs=res.costs, iterations=res.iterations)

    def _image_problem(self, pattern, sampled, prox, penalty):
        grid = self._grid(pattern)
        maps = self.sens.maps
        mask = pattern.volume_mask()[None]
        b = self._zero_filled(pattern, sampled)
        x0 = np.sum(combine_weights(maps)[:, None] * ifft2c(b), axis=0)
        res = fista_ls(
            A=lambda x: mask * encode(x, maps),
            AH=lambda r: encode_adjoint(r, maps),
            b=b, x0=x0, prox=prox, penalty=penalty, lam=self.config.lam,
            lipschitz=self.config.step_scale * self._bound(),
            max_iter=self.config.max_iter, tol=self.config.tol,
        )
        return self._finish(grid, res.x, res)


class SFDReconstructor(_FistaReconstructor):
    """CS with an anisotropic spatial-finite-difference l1 prior."""

    method = "cs-sfd"

    def _solve(self, pattern, sampled):
        state = {"dual": None}
        n_inner = self.config.inner_iter

        def prox(v, theta):
            x, state["dual"] = tv_prox(v, theta, n_inner, state["dual"])
            return x

        return self._image_problem(pattern, sampled, prox, sfd_norm)


class LowRankReconstructor(_FistaReconstructor):
    """CS with a nuclear-norm prior on the Casorati matrix."""

    method = "cs-lr"

    def _solve(self, pattern, sampled):
        return self._image_problem(pattern, sampled, lambda v, th: svt(v, th) if th > 0 else v, nuclear_norm)


class DictionaryReconstructor(_FistaReconstructor):
    """Synthesis CS with a multi-exponential dictionary, ``x = D u``."""

    method = "cs-dic"

    def dictionary(self, nt: int) -> np.ndarray:
        cfg = self.config
        times = cfg.frame_times or tuple(float(t) for t in range(nt))
        if len(times) != nt:
            raise ValueError(f"{len(times)} frame times given for {nt} frames")
        decays = cfg.decay_constants or tuple(np.geomspace(0.25, 4.0 * max(times[-1], 1.0), 24))
        return exponential_dictionary(times, decays)

    def _solve(self, pattern, sampled):
        grid = self._grid(pattern)
        if grid.nt < 2:
            raise ValueError("dictionary reconstruction needs at least 2 frames")
        D = self.dictionary(grid.nt)
        DH = D.conj().T
        maps = self.sens.maps
        mask = pattern.volume_mask()[None]
        b = self._zero_filled(pattern, sampled)
        synth = lambda u: np.tensordot(D, u, axes=(1, 0))
        u0 = np.zeros((D.shape[1], grid.ny, grid.nx), dtype=np.complex128)
        bound = self._bound() * float(np.linalg.norm(D, 2)) ** 2
        res = fista_ls(
            A=lambda u: mask * encode(synth(u), maps),
            AH=lambda r: np.tensordot(DH, encode_adjoint(r, maps), axes=(1, 0)),
            b=b, x0=u0, prox=soft_threshold,
            penalty=lambda u: float(np.abs(u).sum()), lam=self.config.lam,
            lipschitz=self.config.step_scale * bound,
            max_iter=self.config.max_iter, tol=self.config.tol,
        )
        out = self._finish(grid, synth(res.x), res)
        out.coefficients = res.x
        return out


_REGISTRY = {
    "zero-fill": ZeroFillReconstructor,
    "cs-sfd": SFDReconstructor,
    "cs-lr": LowRankReconstructor,
    "cs-dic": DictionaryReconstructor,
}


def make_reconstructor(config: ReconConfig, sens: CoilSensitivities) -> Reconstructor:
    return _REGISTRY[config.method](sens, config)


def recon_zero_fill(pattern, sampled, sens: CoilSensitivities) -> MultiCoilKSpace:
    return ZeroFillReconstructor(sens)(pattern, sampled)


def recon_cs(pattern, sampled, config: ReconConfig, sens: CoilSensitivities) -> ReconResult:
    if config.method not in ("cs-sfd", "cs-lr"):
        raise ValueError("recon_cs expects method 'cs-sfd' or 'cs-lr'")
    return make_reconstructor(config, sens).solve(pattern, sampled)


def recon_dic(pattern, sampled, config: ReconConfig, sens: CoilSensitivities) -> ReconResult:
    return DictionaryReconstructor(sens, config).solve(pattern, sampled)
