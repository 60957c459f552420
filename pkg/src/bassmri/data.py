"""Synthetic phantoms, coil simulation and file formats.

``.kspd`` dataset container
    One line of UTF-8 JSON (no embedded newlines) terminated by ``\\n``,
    then the payload: little-endian float32 ``(re, im)`` pairs ordered
    item -> coil -> frame -> ky -> kx. The header carries
    ``magic="KSPD1"``, ``dims={nx, ny, nt, nc, n_items}``,
    ``endianness="little"``, ``dtype="float32"``, ``normalized`` and an echo
    of the generator config.

``.mask`` pattern file
    One line of JSON ``{nx, ny, nt, M, locked_count}``, then one ascending
    point index per line; locked points carry a trailing `` L``.

``.pgm`` mask image
    Binary P5, one file per frame, ``nx`` wide and ``ny`` tall; 0 =
    unsampled, 128 = sampled, 255 = locked.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import DataFormatError, Dataset, KSpaceGrid, MultiCoilKSpace, SamplingPattern
from .recon.encoding import CoilSensitivities, encode

MAGIC = "KSPD1"
MAX_ELEMENTS = 1 << 34


# ----------------------------------------------------------------------------
# coils

def simulate_sensitivities(nx: int, ny: int, nc: int, smoothness: float = 0.5,
                           rng: np.random.Generator | int | None = 0) -> CoilSensitivities:
    """Gaussian lobes centred on equispaced points of the field-of-view border.

    ``smoothness`` is the lobe width relative to the field of view. Each
    coil gets a random linear phase ramp; the result is normalized to unit
    sum-of-squares at every pixel.
    """
    if nc < 1:
        raise ValueError("nc must be >= 1")
    if nc == 1:
        return CoilSensitivities.ones(ny, nx)
    rng = np.random.default_rng(rng)
    y, x = np.mgrid[0:ny, 0:nx]
    u = (x - (nx - 1) / 2) / nx
    v = (y - (ny - 1) / 2) / ny
    maps = np.empty((nc, ny, nx), dtype=np.complex128)
    offset = rng.uniform(0, 2 * np.pi)
    for c in range(nc):
        ang = offset + 2 * np.pi * c / nc
        cu, cv = 0.5 * np.cos(ang), 0.5 * np.sin(ang)
        mag = np.exp(-((u - cu) ** 2 + (v - cv) ** 2) / (2 * smoothness ** 2))
        a, b, p0 = rng.normal(0, 1.0, 2).tolist() + [rng.uniform(-np.pi, np.pi)]
        maps[c] = mag * np.exp(1j * (a * u * np.pi + b * v * np.pi + p0))
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0, keepdims=True))
    return CoilSensitivities(maps)


# ----------------------------------------------------------------------------
# phantoms

@dataclass(frozen=True)
class PhantomConfig:
    nx: int = 32
    ny: int = 32
    nt: int = 1
    nc: int = 4
    n_items: int = 8
    # ellipse 0 is the body outline; the rest are inclusions inside it
    n_ellipses: tuple = (4, 8)
    intensity: tuple = (0.2, 1.0)
    jitter: float = 0.05
    smoothness: float = 0.5
    frame_times: tuple = ()
    decay: tuple = (20.0, 80.0)
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.nx, self.ny) < 4 or self.nt < 1 or self.nc < 1 or self.n_items < 1:
            raise ValueError("phantom dims must be >= 4 (nx, ny), >= 1 (nt, nc, n_items)")
        if self.noise < 0:
            raise ValueError("noise sigma must be >= 0")
        lo, hi = self.n_ellipses
        if not 1 <= lo <= hi:
            raise ValueError("n_ellipses must be a range (lo, hi) with 1 <= lo <= hi")
        if min(self.decay) <= 0:
            raise ValueError("decay constants must be > 0")
        if self.frame_times and len(self.frame_times) != self.nt:
            raise ValueError(f"{len(self.frame_times)} frame times for nt={self.nt}")
        for name in ("n_ellipses", "intensity", "decay", "frame_times"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def grid(self) -> KSpaceGrid:
        return KSpaceGrid(self.nx, self.ny, self.nt, self.nc)

    @property
    def times(self) -> np.ndarray:
        if self.frame_times:
            return np.asarray(self.frame_times, dtype=float)
        return 10.0 * np.arange(self.nt)


def ellipse_image(nx: int, ny: int, ellipses) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize ``(cx, cy, a, b, theta, intensity)`` ellipses (unit-square coords).

    Returns per-ellipse indicator stack ``(n, ny, nx)`` and intensities.
    """
    y, x = np.mgrid[0:ny, 0:nx]
    u = (x + 0.5) / nx - 0.5
    v = (y + 0.5) / ny - 0.5
    masks, vals = [], []
    for cx, cy, a, b, th, val in ellipses:
        c, s = np.cos(th), np.sin(th)
        du, dv = u - cx, v - cy
        r = ((c * du + s * dv) / a) ** 2 + ((-s * du + c * dv) / b) ** 2
        masks.append(r <= 1.0)
        vals.append(val)
    return np.asarray(masks, dtype=float), np.asarray(vals, dtype=float)


def phantom_template(cfg: PhantomConfig) -> list:
    """Shared anatomy: a body outline plus ``n_ellipses[1] - 1`` inclusions.

    Each entry is ``(cx, cy, a, b, theta, intensity, T)``. The template is a
    function of ``cfg.seed`` only; items are jittered copies of it.
    """
    rng = np.random.default_rng([cfg.seed, 0x7E4D])
    lo, hi = cfg.intensity
    out = [(0.0, 0.0, 0.42, 0.36, 0.0, rng.uniform(lo, hi), rng.uniform(*cfg.decay))]
    for _ in range(cfg.n_ellipses[1] - 1):
        r = 0.28 * np.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * np.pi)
        out.append((r * np.cos(phi), 0.85 * r * np.sin(phi), rng.uniform(0.03, 0.15), rng.uniform(0.03, 0.15),
                    rng.uniform(0, np.pi), rng.uniform(lo, hi), rng.uniform(*cfg.decay)))
    return out


def _jittered(cfg: PhantomConfig, template: list, rng: np.random.Generator) -> list:
    n = int(rng.integers(cfg.n_ellipses[0], cfg.n_ellipses[1] + 1))
    j = cfg.jitter
    out = []
    for cx, cy, a, b, th, val, T in template[:n]:
        d = rng.normal(0, 1, 7)
        out.append((cx + j * d[0], cy + j * d[1], a * max(0.5, 1 + j * d[2]), b * max(0.5, 1 + j * d[3]),
                    th + 4 * j * d[4], val * max(0.1, 1 + j * d[5]), T * max(0.1, 1 + j * d[6])))
    return out


def phantom_image(cfg: PhantomConfig, rng: np.random.Generator, template: list | None = None) -> np.ndarray:
    """Real ``(nt, ny, nx)`` image; each ellipse decays as exp(-t / T)."""
    ellipses = _jittered(cfg, phantom_template(cfg) if template is None else template, rng)
    masks, vals = ellipse_image(cfg.nx, cfg.ny, [e[:6] for e in ellipses])
    T = np.array([e[6] for e in ellipses])
    t = cfg.times
    weights = vals[None, :] * np.exp(-t[:, None] / T[None, :])  # (nt, n)
    return np.tensordot(weights, masks, axes=(1, 0))


@dataclass
class PhantomSet:
    dataset: Dataset
    sensitivities: CoilSensitivities
    images: list  # ground-truth (nt, ny, nx), scaled like the k-space
    config: PhantomConfig


def generate_phantom_dataset(cfg: PhantomConfig) -> PhantomSet:
    """Random multi-coil phantoms, unit max modulus, float32-representable.

    All items jitter one template (:func:`phantom_template`). Item ``i``
    draws from its own stream seeded by ``(seed, i)``; coil maps and the
    template come from separate streams derived from ``seed``.
    """
    sens = simulate_sensitivities(cfg.nx, cfg.ny, cfg.nc, cfg.smoothness,
                                  np.random.default_rng([cfg.seed, 0xC011]))
    grid = cfg.grid
    template = phantom_template(cfg)
    items, images = [], []
    for i in range(cfg.n_items):
        rng = np.random.default_rng([cfg.seed, i])
        img = phantom_image(cfg, rng, template)
        k = encode(img.astype(np.complex128), sens.maps)
        scale = 1.0 / np.max(np.abs(k))
        k = k * scale
        if cfg.noise > 0:
            k = k + cfg.noise * (rng.standard_normal(k.shape) + 1j * rng.standard_normal(k.shape)) / np.sqrt(2)
            s2 = 1.0 / np.max(np.abs(k))
            k, scale = k * s2, scale * s2
        k = k.astype(np.complex64).astype(np.complex128)
        items.append(MultiCoilKSpace(grid, k))
        images.append(img * scale)
    return PhantomSet(Dataset(items), sens, images, cfg)


# ----------------------------------------------------------------------------
# .kspd container

def _header_bytes(header: dict) -> bytes:
    return (json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def write_dataset(path, dataset: Dataset, normalized: bool = True, generator: dict | None = None) -> Path:
    path = Path(path)
    g = dataset.grid
    header = {
        "magic": MAGIC,
        "dims": {"nx": g.nx, "ny": g.ny, "nt": g.nt, "nc": g.nc, "n_items": len(dataset)},
        "endianness": "little",
        "dtype": "float32",
        "normalized": bool(normalized),
        "generator": generator or {},
    }
    payload = np.stack([it.values for it in dataset]).astype("<c8")
    with open(path, "wb") as fh:
        fh.write(_header_bytes(header))
        fh.write(payload.tobytes())
    return path


def read_dataset_header(path) -> tuple[dict, int]:
    with open(path, "rb") as fh:
        line = fh.readline(1 << 20)
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise DataFormatError(f"{path}: unrecognized format (no KSPD1 header)") from None
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise DataFormatError(f"{path}: unrecognized format (magic {header.get('magic') if isinstance(header, dict) else None!r})")
    return header, len(line)


def read_dataset(path) -> tuple[Dataset, dict]:
    """Read a ``.kspd`` file; returns the dataset and its header."""
    header, offset = read_dataset_header(path)
    try:
        d = header["dims"]
        nx, ny, nt, nc, n = (int(d[k]) for k in ("nx", "ny", "nt", "nc", "n_items"))
    except (KeyError, TypeError, ValueError):
        raise DataFormatError(f"{path}: header dims missing or malformed") from None
    if min(nx, ny, nt, nc, n) < 1:
        raise DataFormatError(f"{path}: non-positive dims {d}")
    count = nx * ny * nt * nc * n
    if count > MAX_ELEMENTS:
        raise DataFormatError(f"{path}: dims overflow ({count} complex samples)")
    if header.get("endianness", "little") != "little" or header.get("dtype", "float32") != "float32":
        raise DataFormatError(f"{path}: unsupported payload encoding")
    expected = count * 8
    actual = os.path.getsize(path) - offset
    if actual != expected:
        raise DataFormatError(f"{path}: truncated payload: expected {expected} bytes, found {actual}")
    raw = np.fromfile(path, dtype="<c8", offset=offset).reshape(n, nc, nt, ny, nx)
    grid = KSpaceGrid(nx, ny, nt, nc)
    return Dataset([MultiCoilKSpace(grid, raw[i].astype(np.complex128)) for i in range(n)]), header


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_npz(path, **arrays) -> Path:
    """Like ``np.savez`` but with fixed zip timestamps, so equal arrays give equal bytes."""
    path = Path(path)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())
    return path


def write_sidecar(path, phantoms: PhantomSet) -> Path:
    """Ground-truth images and coil maps next to a ``.kspd`` file."""
    return save_npz(path, sensitivities=phantoms.sensitivities.maps, images=np.stack(phantoms.images),
                    frame_times=phantoms.config.times)


def sidecar_path(kspd_path) -> Path:
    p = Path(kspd_path)
    return p.with_name(p.stem + ".truth.npz")


def read_sidecar(path) -> dict:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


# ----------------------------------------------------------------------------
# masks

def write_mask(path, pattern: SamplingPattern) -> Path:
    path = Path(path)
    g = pattern.grid
    header = {"nx": g.nx, "ny": g.ny, "nt": g.nt, "M": pattern.size, "locked_count": int(pattern.locked.size)}
    locked = pattern.locked_mask
    lines = [json.dumps(header, sort_keys=True)]
    lines += [f"{k} L" if locked[k] else str(k) for k in pattern.indices.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mask(path) -> SamplingPattern:
    text = Path(path).read_text().splitlines()
    if not text:
        raise DataFormatError(f"{path}: empty mask file")
    try:
        h = json.loads(text[0])
        grid = KSpaceGrid(int(h["nx"]), int(h["ny"]), int(h["nt"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        raise DataFormatError(f"{path}: bad mask header") from None
    members, locked = [], []
    for ln, line in enumerate(text[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        try:
            k = int(parts[0])
        except ValueError:
            raise DataFormatError(f"{path}:{ln}: not an index: {line!r}") from None
        if not 0 <= k < grid.N:
            raise DataFormatError(f"{path}:{ln}: index {k} out of range [0, {grid.N})")
        if members and k <= members[-1]:
            kind = "duplicate" if k == members[-1] else "non-ascending"
            raise DataFormatError(f"{path}:{ln}: {kind} index {k}")
        members.append(k)
        if len(parts) > 1:
            if parts[1] != "L":
                raise DataFormatError(f"{path}:{ln}: unknown flag {parts[1]!r}")
            locked.append(k)
    if len(members) != int(h.get("M", len(members))) or len(locked) != int(h.get("locked_count", len(locked))):
        raise DataFormatError(f"{path}: header counts do not match body")
    return SamplingPattern(grid, members, locked)


def mask_frames(pattern: SamplingPattern) -> np.ndarray:
    """uint8 ``(nt, ny, nx)``: 0 unsampled, 128 sampled, 255 locked."""
    img = np.where(pattern.mask, 128, 0).astype(np.uint8)
    img[pattern.locked] = 255
    return img.reshape(pattern.grid.shape)


def write_pgm(path, image: np.ndarray) -> Path:
    image = np.asarray(image, dtype=np.uint8)
    ny, nx = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(image.tobytes())
    return Path(path)


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise DataFormatError(f"{path}: 16-bit PGM not supported")
    body = data[pos + 1:]
    if len(body) != nx * ny:
        raise DataFormatError(f"{path}: expected {nx * ny} pixels, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(ny, nx)


def write_mask_pgm(stem, pattern: SamplingPattern) -> list[Path]:
    stem = Path(stem)
    return [write_pgm(stem.with_name(f"{stem.name}_t{t}.pgm"), f)
            for t, f in enumerate(mask_frames(pattern))]


def read_mask_pgm(paths) -> SamplingPattern:
    frames = np.stack([read_pgm(p) for p in paths])
    nt, ny, nx = frames.shape
    flat = frames.ravel()
    if not np.isin(flat, (0, 128, 255)).all():
        raise DataFormatError("mask PGM pixels must be 0, 128 or 255")
    return SamplingPattern(KSpaceGrid(nx, ny, nt), np.flatnonzero(flat > 0), np.flatnonzero(flat == 255))
