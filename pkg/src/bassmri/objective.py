"""Efficacy criteria, importance maps and image-quality metrics."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (
    BassError,
    Dataset,
    GridMismatchError,
    MultiCoilKSpace,
    NumericalError,
    SamplingPattern,
    apply_sampling,
)
from .recon.encoding import CoilSensitivities, coil_combine
from .recon.reconstructors import ReconResult, Reconstructor

CRITERIA = ("kspace", "ssim")


def _arr(v) -> np.ndarray:
    return v.values if isinstance(v, MultiCoilKSpace) else np.asarray(v)


def distance_f(m, n) -> float:
    """||m - n||^2 / ||m||^2 over all points and coils."""
    m, n = _arr(m), _arr(n)
    if m.shape != n.shape:
        raise GridMismatchError(f"shape mismatch {m.shape} vs {n.shape}")
    den = float(np.vdot(m, m).real)
    if den == 0.0:
        raise NumericalError("reference has zero norm")
    r = m - n
    return float(np.vdot(r, r).real) / den


class ItemReconError(BassError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"reconstruction of item {index} failed: {cause}")
        self.index = index
        self.__cause__ = cause


@dataclass
class Evaluation:
    """One pass of the oracle over a dataset for a pattern."""

    F: float
    per_item: list
    residuals: list  # (nc, N) arrays, m_i - R(pattern, S m_i)
    results: list  # ReconResult per item
    recon_calls: int

    @property
    def estimates(self) -> list:
        return [r.kspace for r in self.results]


def reconstruct_all(pattern: SamplingPattern, dataset: Dataset, reconstructor: Reconstructor,
                    threads: int = 1) -> list[ReconResult]:
    """One oracle call per item, results in item order."""

    def one(i):
        try:
            return reconstructor.solve(pattern, apply_sampling(pattern, dataset[i]))
        except BassError as e:
            if isinstance(e, ItemReconError):
                raise
            raise ItemReconError(i, e) from e

    if threads > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(dataset))))
    return [one(i) for i in range(len(dataset))]


def efficacy(pattern: SamplingPattern, dataset: Dataset, reconstructor: Reconstructor,
             threads: int = 1) -> Evaluation:
    """Mean normalized k-space error F and the residual volumes it came from."""
    if pattern.size == 0:
        raise ValueError("efficacy needs a non-empty pattern")
    results = reconstruct_all(pattern, dataset, reconstructor, threads)
    per_item, residuals = [], []
    for item, res in zip(dataset, results):
        per_item.append(distance_f(item, res.kspace))
        residuals.append((item.values - res.kspace.values).reshape(item.grid.nc, item.grid.N))
    F = float(np.mean(per_item))
    return Evaluation(F=F, per_item=per_item, residuals=residuals, results=results,
                      recon_calls=len(dataset))


def epsilon_map(residuals, dataset: Dataset) -> np.ndarray:
    """Per-point residual energy normalized by each item's total energy."""
    nc = dataset.grid.nc
    acc = np.zeros(dataset.grid.N)
    for e, item in zip(residuals, dataset):
        e = _flat(e, item)
        acc += np.sum(np.abs(e) ** 2, axis=0) / item.norm_sq()
    return acc / (len(dataset) * nc)


def r_map(residuals, dataset: Dataset, delta: float = 1e-12) -> np.ndarray:
    """Per-point residual-to-signal ratio, stabilized by ``delta``."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    nc = dataset.grid.nc
    acc = np.zeros(dataset.grid.N)
    for e, item in zip(residuals, dataset):
        e = _flat(e, item)
        num = np.sum(np.abs(e) ** 2, axis=0) + delta
        den = np.sum(np.abs(item.flat) ** 2, axis=0) + delta
        acc += num / den
    return acc / (len(dataset) * nc)


def _flat(e, item: MultiCoilKSpace) -> np.ndarray:
    return _arr(e).reshape(item.grid.nc, item.grid.N)


def nrmse(references, estimates) -> float:
    """sqrt of the sum over items of ||m_i - m^_i||^2 / ||m_i||^2."""
    references, estimates = list(references), list(estimates)
    if len(references) != len(estimates):
        raise GridMismatchError(f"{len(references)} references vs {len(estimates)} estimates")
    return float(np.sqrt(sum(distance_f(m, n) for m, n in zip(references, estimates))))


def nrmse_mean(references, estimates) -> float:
    """Per-item-mean variant: sqrt of the mean normalized squared error."""
    references = list(references)
    return nrmse(references, estimates) / np.sqrt(len(references))


# ----------------------------------------------------------------------------
# SSIM

def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = (size - 1) / 2.0
    g = np.exp(-0.5 * ((np.arange(size) - r) / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    s = w.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(img, (s, s))
    return np.einsum("ijkl,kl->ij", win, w)


def ssim2d(x: np.ndarray, y: np.ndarray, data_range: float, win_size: int = 11, sigma: float = 1.5,
           K1: float = 0.01, K2: float = 0.03) -> float:
    """Gaussian-weighted SSIM of two real 2D images, mean over valid windows.

    The window shrinks to the largest odd size that fits images smaller
    than ``win_size``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = min(win_size, min(x.shape))
    if s % 2 == 0:
        s -= 1
    w = _gaussian_window(s, sigma)
    mx, my = _filter_valid(x, w), _filter_valid(y, w)
    vx = _filter_valid(x * x, w) - mx * mx
    vy = _filter_valid(y * y, w) - my * my
    cxy = _filter_valid(x * y, w) - mx * my
    C1 = (K1 * data_range) ** 2
    C2 = (K2 * data_range) ** 2
    num = (2 * mx * my + C1) * (2 * cxy + C2)
    den = (mx * mx + my * my + C1) * (vx + vy + C2)
    return float(np.mean(num / den))


def ssim(x, y, data_range: float | None = None) -> float:
    """SSIM per frame of magnitude volumes ``(nt, ny, nx)``, averaged over frames.

    ``data_range`` defaults to the maximum of the reference ``x``.
    """
    x = np.abs(getattr(x, "data", x))
    y = np.abs(getattr(y, "data", y))
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.shape != y.shape:
        raise GridMismatchError(f"image shapes differ: {x.shape} vs {y.shape}")
    if data_range is None:
        data_range = float(x.max())
    if data_range <= 0:
        data_range = 1.0
    return float(np.mean([ssim2d(a, b, data_range) for a, b in zip(x, y)]))


def reference_images(dataset: Dataset, sens: CoilSensitivities) -> list[np.ndarray]:
    return [coil_combine(m, sens).data for m in dataset]


def image_criterion(pattern: SamplingPattern, dataset: Dataset, reconstructor: Reconstructor,
                    sens: CoilSensitivities, references=None, evaluation: Evaluation | None = None,
                    threads: int = 1) -> float:
    """Mean over items of -SSIM(|x_i|, |x^_i|) against fully sampled coil-combined references."""
    if references is None:
        references = reference_images(dataset, sens)
    if evaluation is None:
        results = reconstruct_all(pattern, dataset, reconstructor, threads)
    else:
        results = evaluation.results
    return float(np.mean([-ssim(ref, res.image) for ref, res in zip(references, results)]))


# ----------------------------------------------------------------------------
# Criterion front-end used by the optimizers

class Criterion:
    """Evaluates a pattern on a training set; yields the cost and k-space residuals.

    ``kind="kspace"`` uses F; ``kind="ssim"`` compares with the image-domain
    criterion while the residuals (for the importance maps) remain k-space.
    """

    def __init__(self, dataset: Dataset, reconstructor: Reconstructor, kind: str = "kspace",
                 sens: CoilSensitivities | None = None, threads: int = 1):
        if kind not in CRITERIA:
            raise ValueError(f"unknown criterion {kind!r}; expected one of {CRITERIA}")
        if kind == "ssim" and sens is None:
            raise ValueError("the ssim criterion needs coil sensitivities")
        self.dataset = dataset
        self.reconstructor = reconstructor
        self.kind = kind
        self.sens = sens
        self.threads = threads
        self._refs = reference_images(dataset, sens) if kind == "ssim" else None

    def __call__(self, pattern: SamplingPattern) -> tuple[float, Evaluation]:
        ev = efficacy(pattern, self.dataset, self.reconstructor, self.threads)
        if self.kind == "kspace":
            return ev.F, ev
        value = image_criterion(pattern, self.dataset, self.reconstructor, self.sens,
                                references=self._refs, evaluation=ev)
        return value, ev


@dataclass
class EvalReport:
    cost: float
    per_item: list
    nrmse: float
    nrmse_mean: float
    image_nrmse: float
    ssim: float
    recon_calls: int
    wall_ms: float
    split: str = ""
    extra: dict = field(default_factory=dict)

    CSV_FIELDS = ("split", "cost", "nrmse", "nrmse_mean", "image_nrmse", "ssim", "recon_calls", "wall_ms")

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def evaluate(pattern: SamplingPattern, dataset: Dataset, reconstructor: Reconstructor,
             sens: CoilSensitivities, split: str = "", threads: int = 1) -> EvalReport:
    """Full report: k-space F and NRMSE, image NRMSE, mean SSIM."""
    t0 = time.perf_counter()
    before = reconstructor.calls
    ev = efficacy(pattern, dataset, reconstructor, threads)
    refs = reference_images(dataset, sens)
    ims = [r.image for r in ev.results]
    img_err = float(np.sqrt(sum(distance_f(x, xh) for x, xh in zip(refs, ims))))
    s = float(np.mean([ssim(x, xh) for x, xh in zip(refs, ims)]))
    k = nrmse(list(dataset), ev.estimates)
    return EvalReport(
        cost=ev.F, per_item=list(ev.per_item), nrmse=k, nrmse_mean=k / np.sqrt(len(dataset)),
        image_nrmse=img_err, ssim=s, recon_calls=reconstructor.calls - before,
        wall_ms=1e3 * (time.perf_counter() - t0), split=split,
    )
