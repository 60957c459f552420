"""Command-line driver.

Subcommands ``phantom``, ``learn``, ``evaluate``, ``compare`` and
``export-maps`` all read one JSON experiment spec, write every output under
``--out`` together with the resolved spec and a ``manifest.json`` of file
hashes, and exit with 0 (ok), 2 (spec error), 3 (data error) or
4 (numerical failure).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .core import DataFormatError, Dataset, GridMismatchError, KSpaceGrid, NumericalError, SamplingPattern
from .data import (
    PhantomConfig,
    file_sha256,
    generate_phantom_dataset,
    read_dataset,
    read_mask,
    read_sidecar,
    save_npz,
    sidecar_path,
    write_dataset,
    write_mask,
    write_mask_pgm,
    write_pgm,
    write_sidecar,
)
from .objective import ItemReconError, efficacy, epsilon_map, evaluate, r_map
from .optimize import TRACE_FIELDS, BassConfig, OptimizerResult, bass_run, greedy_forward, poss_run
from .recon import CoilSensitivities, ReconConfig, make_reconstructor
from .sampling import GENERATOR_KINDS, GeneratorConfig, PositionalConstraint, generate

log = logging.getLogger("bassmri")

EXIT_OK, EXIT_SPEC, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "BASSMRI_THREADS"
DEFAULT_LAM_GRID = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
OPTIMIZERS = ("bass", "greedy", "greedy-full", "poss")


class SpecError(ValueError):
    pass


# ----------------------------------------------------------------------------
# experiment spec

_num = {"type": "number"}
_int = {"type": "integer"}
_pos = {"type": "integer", "minimum": 1}

OPTIMIZER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": list(OPTIMIZERS)},
        "label": {"type": "string"},
        "M": _pos,
        "af": {"type": "number", "exclusiveMinimum": 1},
        "L": _pos,
        "K_init": _pos,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "radius": {"type": "integer", "minimum": 0},
        "exclude_conjugate": {"type": "boolean"},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
}

SPEC_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "threads": _pos,
        "timing": {"type": "boolean"},
        "criterion": {"enum": ["kspace", "ssim"]},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "phantom": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "nx": {"type": "integer", "minimum": 4},
                        "ny": {"type": "integer", "minimum": 4},
                        "nt": _pos,
                        "nc": _pos,
                        "n_items": _pos,
                        "n_ellipses": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                        "intensity": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "jitter": {"type": "number", "minimum": 0},
                        "smoothness": {"type": "number", "exclusiveMinimum": 0},
                        "frame_times": {"type": "array", "items": _num},
                        "decay": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                                  "minItems": 2, "maxItems": 2},
                        "noise": {"type": "number", "minimum": 0},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"train": _pos, "validation": {"type": "integer", "minimum": 0}},
        },
        "recon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["zero-fill", "cs-sfd", "cs-lr", "cs-dic"]},
                "lam": {"type": "number", "minimum": 0},
                "lam_grid": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "max_iter": _pos,
                "tol": {"type": "number", "minimum": 0},
                "inner_iter": _pos,
                "decay_constants": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "frame_times": {"type": "array", "items": _num},
                "step_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(GENERATOR_KINDS)},
                "M": _pos,
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "power": {"type": "number", "minimum": 0},
                "radius": {"type": "number", "minimum": 0},
                "calib": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                "calib_frames": {"enum": ["all", "first"]},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "optimizer": OPTIMIZER_SCHEMA,
        "optimizers": {"type": "array", "items": OPTIMIZER_SCHEMA, "minItems": 1},
        "budget": {"type": "integer", "minimum": 0},
        "mask": {"type": "string"},
        "evaluate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"split": {"enum": ["train", "validation", "all"]}},
        },
    },
}

OPTIMIZER_DEFAULTS = {"L": 100, "K_init": 10, "alpha": 0.5, "radius": 1, "exclude_conjugate": True,
                      "delta": 1e-12}


def _validate(spec: dict):
    validator = jsonschema.Draft7Validator(SPEC_SCHEMA)
    errors = sorted(validator.iter_errors(spec), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SpecError(f"spec error at {where}: {e.message}")


def _resolve_optimizer(opt: dict, seed: int) -> dict:
    out = dict(OPTIMIZER_DEFAULTS)
    out.update(opt)
    out.setdefault("seed", seed)
    out.setdefault("label", out["name"])
    return out


def resolve_spec(spec: dict, base_dir: Path, seed: int | None = None, out: str | None = None) -> dict:
    """Validate ``spec`` and fill every default; relative paths resolve against ``base_dir``."""
    _validate(spec)
    s = copy.deepcopy(spec)
    if seed is not None:
        s["seed"] = int(seed)
    seed = s.setdefault("seed", 0)
    if out is not None:
        # a command-line path is relative to the working directory
        s["out"] = str(Path(out).resolve())
    elif "out" in s:
        s["out"] = str((base_dir / s["out"]).resolve())
    else:
        raise SpecError("spec error at out: no output directory (give --out or set 'out')")
    s.setdefault("timing", False)
    s.setdefault("criterion", "kspace")
    ds = s.setdefault("dataset", {})
    if "path" in ds:
        ds["path"] = str((base_dir / ds["path"]).resolve())
    if "phantom" in ds:
        ph = ds["phantom"]
        ph.setdefault("seed", seed)
        ds["phantom"] = {**_phantom_dict(PhantomConfig(**{k: tuple(v) if isinstance(v, list) else v
                                                            for k, v in ph.items()}))}
    recon = s.setdefault("recon", {})
    recon.setdefault("method", "cs-sfd")
    recon.setdefault("lam", 1e-3)
    recon.setdefault("lam_grid", [] if recon["method"] == "zero-fill" else list(DEFAULT_LAM_GRID))
    recon.setdefault("max_iter", 30)
    recon.setdefault("tol", 0.0)
    recon.setdefault("inner_iter", 10)
    recon.setdefault("decay_constants", [])
    recon.setdefault("frame_times", [])
    recon.setdefault("step_scale", 1.0)
    init = s.setdefault("init", {})
    init.setdefault("kind", "variable-density")
    init.setdefault("sigma", 4.0)
    init.setdefault("power", 2.0)
    init.setdefault("radius", 1.5)
    init.setdefault("calib", [0, 0])
    init.setdefault("calib_frames", "all")
    init.setdefault("seed", seed)
    if "optimizer" in s:
        s["optimizer"] = _resolve_optimizer(s["optimizer"], seed)
    if "optimizers" in s:
        s["optimizers"] = [_resolve_optimizer(o, seed) for o in s["optimizers"]]
        labels = [o["label"] for o in s["optimizers"]]
        if len(set(labels)) != len(labels):
            raise SpecError("spec error at optimizers: labels must be unique (set 'label')")
    if "mask" in s:
        s["mask"] = str((base_dir / s["mask"]).resolve())
    s.setdefault("evaluate", {}).setdefault("split", "validation")
    return s


def _phantom_dict(cfg: PhantomConfig) -> dict:
    d = dict(cfg.__dict__)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def load_spec(path, seed=None, out=None) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise SpecError(f"spec error: {path} not found") from None
    except json.JSONDecodeError as e:
        raise SpecError(f"spec error: {path} is not valid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise SpecError("spec error at <root>: expected a JSON object")
    return resolve_spec(raw, path.parent, seed, out)


# ----------------------------------------------------------------------------
# shared plumbing

@dataclass
class Loaded:
    dataset: Dataset
    sens: CoilSensitivities
    frame_times: tuple


def load_data(spec: dict) -> Loaded:
    ds = spec["dataset"]
    if "path" in ds:
        dataset, header = read_dataset(ds["path"])
        side = sidecar_path(ds["path"])
        g = dataset.grid
        if side.exists():
            truth = read_sidecar(side)
            sens = CoilSensitivities(truth["sensitivities"])
            times = tuple(float(t) for t in truth.get("frame_times", ()))
        elif g.nc == 1:
            sens, times = CoilSensitivities.ones(g.ny, g.nx), ()
        else:
            raise DataFormatError(f"{side}: coil sensitivities missing for a {g.nc}-coil dataset")
        if sens.maps.shape != (g.nc, g.ny, g.nx):
            raise GridMismatchError(f"sensitivities {sens.maps.shape} do not fit dataset grid {g}")
        return Loaded(dataset, sens, times)
    if "phantom" in ds:
        ph = generate_phantom_dataset(_phantom_config(ds["phantom"]))
        return Loaded(ph.dataset, ph.sensitivities, tuple(ph.config.times.tolist()))
    raise SpecError("spec error at dataset: needs 'path' or 'phantom'")


def _phantom_config(d: dict) -> PhantomConfig:
    return PhantomConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def split_data(spec: dict, dataset: Dataset) -> tuple[Dataset, Dataset | None]:
    sp = spec.get("split", {})
    n_train = sp.get("train", len(dataset))
    n_val = sp.get("validation", len(dataset) - n_train)
    if n_train + n_val > len(dataset):
        raise SpecError(f"spec error at split: {n_train} + {n_val} items requested, dataset has {len(dataset)}")
    return dataset.split(n_train, n_val)


def recon_config(spec: dict, frame_times=(), lam: float | None = None) -> ReconConfig:
    r = spec["recon"]
    return ReconConfig(method=r["method"], lam=r["lam"] if lam is None else lam, max_iter=r["max_iter"],
                       tol=r["tol"], inner_iter=r["inner_iter"], decay_constants=tuple(r["decay_constants"]),
                       frame_times=tuple(r["frame_times"]) or tuple(frame_times), step_scale=r["step_scale"])


def target_M(opt: dict, grid: KSpaceGrid) -> int:
    if "M" in opt:
        return int(opt["M"])
    if "af" in opt:
        return int(round(grid.N / float(opt["af"])))
    raise SpecError("spec error at optimizer: give 'M' or 'af'")


def initial_pattern(spec: dict, grid: KSpaceGrid, M: int) -> SamplingPattern:
    i = spec["init"]
    cfg = GeneratorConfig(kind=i["kind"], M=int(i.get("M", M)), sigma=i["sigma"], power=i["power"],
                          radius=i["radius"], calib=tuple(i["calib"]), calib_frames=i["calib_frames"],
                          seed=i["seed"])
    return generate(cfg, KSpaceGrid(grid.nx, grid.ny, grid.nt))


def tune_lambda(pattern, train: Dataset, spec: dict, loaded: Loaded, threads: int):
    """Pick the grid value with the lowest training cost; ties go to the earlier entry."""
    grid_vals = spec["recon"]["lam_grid"]
    if not grid_vals or spec["recon"]["method"] == "zero-fill":
        return spec["recon"]["lam"], []
    sweep = []
    for lam in grid_vals:
        rec = make_reconstructor(recon_config(spec, loaded.frame_times, lam), loaded.sens)
        sweep.append((float(lam), efficacy(pattern, train, rec, threads).F))
    best = min(sweep, key=lambda p: p[1])
    log.info("lambda sweep: %s -> %g", ", ".join(f"{l:g}:{F:.4g}" for l, F in sweep), best[0])
    return best[0], sweep


def run_optimizer(opt: dict, init: SamplingPattern, M: int, train: Dataset, reconstructor, spec: dict,
                  sens, threads: int, max_recon_calls: int | None = None) -> OptimizerResult:
    crit = spec["criterion"]
    name = opt["name"]
    if name == "bass":
        cfg = BassConfig(M=M, L=opt["L"], K_init=opt["K_init"], alpha=opt["alpha"],
                         constraint=PositionalConstraint(opt["radius"], opt["exclude_conjugate"]),
                         delta=opt["delta"], seed=opt["seed"], criterion=crit)
        return bass_run(init, cfg, train, reconstructor, sens=sens, threads=threads,
                        max_recon_calls=max_recon_calls)
    if name in ("greedy", "greedy-full"):
        return greedy_forward(init, M, train, reconstructor, lazy=name == "greedy", criterion=crit, sens=sens,
                              threads=threads, max_recon_calls=max_recon_calls)
    return poss_run(init, M, opt["L"], train, reconstructor, seed=opt["seed"], criterion=crit, sens=sens,
                    threads=threads, max_recon_calls=max_recon_calls)


def write_trace(path, rows, timing: bool) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in rows:
            w.writerow([r.iter, r.size, r.K, repr(float(r.F)), int(r.accepted), r.recon_calls_cum,
                        r.wall_ms if timing else 0.0])
    return Path(path)


def write_report(out: Path, name: str, report, timing: bool):
    if not timing:
        report.wall_ms = 0.0
    (out / f"{name}.json").write_text(report.to_json() + "\n")
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=report.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in report.csv_row().items()})


def finish(out: Path, spec: dict, command: str, extra: dict | None = None) -> Path:
    """Write the resolved spec and a manifest of every file under ``out``."""
    (out / "spec.resolved.json").write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(out).as_posix()] = file_sha256(p)
    manifest = {"command": command, "version": __version__, "seed": spec["seed"], "files": files}
    manifest.update(extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _threads(args, spec) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    if "threads" in spec:
        return spec["threads"]
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SpecError(f"spec error: {THREADS_ENV}={env!r} is not an integer") from None
    return 1


def _outdir(spec) -> Path:
    out = Path(spec["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------------
# commands

def cmd_phantom(args, spec) -> int:
    ds = spec["dataset"]
    if "phantom" not in ds:
        raise SpecError("spec error at dataset/phantom: required for the phantom command")
    out = _outdir(spec)
    path = Path(ds.get("path", out / "phantom.kspd"))
    path.parent.mkdir(parents=True, exist_ok=True)
    ph = generate_phantom_dataset(_phantom_config(ds["phantom"]))
    write_dataset(path, ph.dataset, normalized=True, generator=ds["phantom"])
    side = write_sidecar(sidecar_path(path), ph)
    digest = file_sha256(path)
    g = ph.dataset.grid
    extra = {"dataset": {"path": str(path), "sha256": digest, "sidecar": str(side),
                         "sidecar_sha256": file_sha256(side)}}
    finish(out, spec, "phantom", extra)
    print(f"dims nx={g.nx} ny={g.ny} nt={g.nt} nc={g.nc}  items={len(ph.dataset)}  sha256={digest}")
    return EXIT_OK


def cmd_learn(args, spec) -> int:
    from . import plotting

    if "optimizer" not in spec:
        raise SpecError("spec error at optimizer: required for the learn command")
    out = _outdir(spec)
    threads = _threads(args, spec)
    timing = spec["timing"]
    loaded = load_data(spec)
    train, val = split_data(spec, loaded.dataset)
    grid = loaded.dataset.grid
    opt = spec["optimizer"]
    M = target_M(opt, grid)
    init = initial_pattern(spec, grid, M)

    lam0, sweep0 = tune_lambda(init, train, spec, loaded, threads)
    rec = make_reconstructor(recon_config(spec, loaded.frame_times, lam0), loaded.sens)
    res = run_optimizer(opt, init, M, train, rec, spec, loaded.sens, threads)
    lam1, sweep1 = tune_lambda(res.pattern, train, spec, loaded, threads)
    final = make_reconstructor(recon_config(spec, loaded.frame_times, lam1), loaded.sens)

    write_mask(out / "final.mask", res.pattern)
    write_mask_pgm(out / "final", res.pattern)
    write_trace(out / "trace.csv", res.trace, timing)
    reports = {"train": evaluate(res.pattern, train, final, loaded.sens, "train", threads)}
    if val is not None and len(val):
        reports["validation"] = evaluate(res.pattern, val, final, loaded.sens, "validation", threads)
    for split, rep in reports.items():
        rep.extra = {"lambda": lam1, "M": res.pattern.size, "optimizer": opt["name"]}
        write_report(out, f"eval_{split}", rep, timing)

    st = res.state
    if st is not None:
        eps, rm = st.eps, st.rmap
    else:
        ev = efficacy(res.pattern, train, final, threads)
        eps, rm = epsilon_map(ev.residuals, train), r_map(ev.residuals, train)
    save_npz(out / "state.npz", eps=eps, rmap=rm, members=res.pattern.indices, locked=res.pattern.locked,
             dims=np.array([grid.nx, grid.ny, grid.nt]))
    with open(out / "lambda.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "lambda", "F"])
        for stage, sweep in (("initial", sweep0), ("learned", sweep1)):
            for lam, F in sweep:
                w.writerow([stage, repr(lam), repr(F)])

    fig = out / "figures"
    plotting.plot_convergence({opt["label"]: res.trace}, fig / "convergence.png", len(train))
    plotting.plot_masks(res.pattern, fig / "mask.png")
    plotting.plot_maps(eps, rm, grid.shape, fig / "maps.png")
    if sweep1:
        lams, Fs = zip(*sweep1)
        plotting.plot_lambda_sweep(lams, Fs, fig / "lambda.png", lam1)
    finish(out, spec, "learn")
    if not args.quiet:
        for split, rep in reports.items():
            print(f"{split}: F={rep.cost:.6g} nrmse={rep.nrmse:.6g} ssim={rep.ssim:.4f} "
                  f"M={res.pattern.size} lambda={lam1:g}")
    return EXIT_OK


def cmd_evaluate(args, spec) -> int:
    out = _outdir(spec)
    threads = _threads(args, spec)
    mask_path = args.mask or spec.get("mask")
    if not mask_path:
        raise SpecError("spec error at mask: give --mask or set 'mask'")
    pattern = read_mask(mask_path)
    loaded = load_data(spec)
    if not pattern.grid.same_space(loaded.dataset.grid):
        raise GridMismatchError(f"mask grid {pattern.grid.shape} does not match dataset {loaded.dataset.grid.shape}")
    train, val = split_data(spec, loaded.dataset)
    which = spec["evaluate"]["split"]
    data = {"train": train, "validation": val, "all": loaded.dataset}[which]
    if data is None or len(data) == 0:
        raise SpecError(f"spec error at split: the {which} split is empty")
    rec = make_reconstructor(recon_config(spec, loaded.frame_times), loaded.sens)
    rep = evaluate(pattern, data, rec, loaded.sens, which, threads)
    rep.extra = {"lambda": spec["recon"]["lam"], "M": pattern.size, "mask": str(mask_path)}
    write_report(out, f"eval_{which}", rep, spec["timing"])
    finish(out, spec, "evaluate")
    if not args.quiet:
        print(f"{which}: F={rep.cost:.6g} nrmse={rep.nrmse:.6g} image_nrmse={rep.image_nrmse:.6g} "
              f"ssim={rep.ssim:.4f} calls={rep.recon_calls}")
    return EXIT_OK


COMPARE_FIELDS = ("optimizer", "iter", "epoch", "size", "F", "nrmse", "recon_calls")


def cmd_compare(args, spec) -> int:
    from . import plotting

    if "optimizers" not in spec:
        raise SpecError("spec error at optimizers: required for the compare command")
    out = _outdir(spec)
    threads = _threads(args, spec)
    loaded = load_data(spec)
    train, _ = split_data(spec, loaded.dataset)
    n = len(train)
    grid = loaded.dataset.grid
    budget = spec.get("budget")
    rec_cfg = recon_config(spec, loaded.frame_times)
    kspace = spec["criterion"] == "kspace"

    def nrmse_of(F):
        # training k-space NRMSE is sqrt(sum f_i) = sqrt(n * F)
        return repr(float(np.sqrt(n * F))) if kspace else ""

    rows, series = [], {}
    for opt in spec["optimizers"]:
        M = target_M(opt, grid)
        init = initial_pattern(spec, grid, M)
        rec = make_reconstructor(rec_cfg, loaded.sens)
        F0, _ = (efficacy(init, train, rec, threads).F, None) if init.size else (1.0, None)
        rows.append([opt["label"], 0, repr(0.0), init.size, repr(F0), nrmse_of(F0), 0])
        rec.reset_calls()
        # the initial evaluation is shared; the budget counts optimizer calls beyond it
        cap = None if budget is None else budget + (n if init.size else 0)
        res = run_optimizer(opt, init, M, train, rec, spec, loaded.sens, threads, max_recon_calls=cap)
        offset = n if init.size else 0
        trace = [r for r in res.trace if not (opt["name"] in ("bass", "poss") and r.iter == 0)]
        for r in trace:
            calls = r.recon_calls_cum - offset
            rows.append([opt["label"], r.iter, repr(calls / n), r.size, repr(float(r.F)), nrmse_of(r.F), calls])
        series[opt["label"]] = trace
        log.info("%s: final F=%.6g after %d calls", opt["label"], res.cost, res.recon_calls)

    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_FIELDS)
        w.writerows(rows)
    if any(series.values()):
        plotting.plot_convergence(series, out / "figures" / "compare.png", n)
    finish(out, spec, "compare")
    if not args.quiet:
        print(f"wrote {len(rows)} rows for {len(spec['optimizers'])} optimizers to {out / 'compare.csv'}")
    return EXIT_OK


def log_scale_u8(values: np.ndarray) -> np.ndarray:
    """Log-scaled 8-bit rendering: zeros black, positives in 1..255, brighter is higher."""
    v = np.asarray(values, dtype=float)
    img = np.zeros(v.shape, dtype=np.uint8)
    pos = v > 0
    if not pos.any():
        return img
    lv = np.log10(v[pos])
    lo, hi = lv.min(), lv.max()
    if hi == lo:
        img[pos] = 255
    else:
        img[pos] = np.round(1 + 254 * (lv - lo) / (hi - lo)).astype(np.uint8)
    return img


def write_map_csv(path, values: np.ndarray, grid: KSpaceGrid):
    t, ky, kx = np.unravel_index(np.arange(grid.N), grid.shape)
    with open(path, "w") as fh:
        fh.write("k,t,ky,kx,value\n")
        for row in zip(range(grid.N), t.tolist(), ky.tolist(), kx.tolist(), values.tolist()):
            fh.write("%d,%d,%d,%d,%.17g\n" % row)


def read_map_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 4]


def cmd_export_maps(args, spec) -> int:
    state_dir = Path(args.state) if args.state else Path(spec["out"])
    state_file = state_dir / "state.npz"
    if not state_file.exists():
        raise DataFormatError(f"{state_file}: missing optimizer state (run learn first)")
    with np.load(state_file) as z:
        st = {k: z[k] for k in z.files}
    nx, ny, nt = (int(v) for v in st["dims"])
    grid = KSpaceGrid(nx, ny, nt)
    out = _outdir(spec)
    for name, key in (("eps_map", "eps"), ("r_map", "rmap")):
        values = np.asarray(st[key], dtype=float)
        if values.size != grid.N:
            raise DataFormatError(f"{state_file}: {key} has {values.size} entries, grid needs {grid.N}")
        write_map_csv(out / f"{name}.csv", values, grid)
        frames = log_scale_u8(values).reshape(grid.shape)
        for t in range(nt):
            write_pgm(out / f"{name}_t{t}.pgm", frames[t])
    pattern = SamplingPattern(grid, st["members"], st["locked"])
    write_mask_pgm(out / "mask", pattern)
    finish(out, spec, "export-maps")
    if not args.quiet:
        print(f"exported maps for {nt} frame(s) of {nx}x{ny} to {out}")
    return EXIT_OK


COMMANDS = {
    "phantom": cmd_phantom,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "export-maps": cmd_export_maps,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bassmri", description="Learn and evaluate k-space sampling patterns.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--spec", required=name != "export-maps", help="JSON experiment spec")
        sp.add_argument("--out", help="output directory (overrides the spec)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the spec)")
        sp.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        sp.add_argument("--quiet", action="store_true")
        if name == "evaluate":
            sp.add_argument("--mask", help="pattern file to evaluate (overrides the spec)")
        if name == "export-maps":
            sp.add_argument("--state", help="directory holding state.npz (default: spec out)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.spec:
            spec = load_spec(args.spec, args.seed, args.out)
        else:
            if not args.out:
                raise SpecError("spec error: export-maps without --spec needs --out")
            spec = resolve_spec({}, Path.cwd(), args.seed, args.out)
        if args.seed is not None and args.seed < 0:
            raise SpecError("spec error at seed: must be >= 0")
        return COMMANDS[args.command](args, spec)
    except (SpecError, jsonschema.SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SPEC
    except (DataFormatError, GridMismatchError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ItemReconError as e:
        code = EXIT_NUMERIC if isinstance(e.__cause__, NumericalError) else EXIT_DATA
        print(f"error: {e}", file=sys.stderr)
        return code
    except ValueError as e:
        # configuration values rejected by the library (e.g. K_init >= M)
        print(f"spec error: {e}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
