import csv
import json

import numpy as np
import pytest

from bassmri.cli import log_scale_u8, main, read_map_csv
from bassmri.core import KSpaceGrid, SamplingPattern
from bassmri.data import read_mask, read_pgm, save_npz, write_mask

PHANTOM = {"nx": 8, "ny": 8, "nc": 2, "n_items": 4, "seed": 3}


def run(tmp_path, spec, command, *extra, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(spec))
    return main([command, "--spec", str(path), "--quiet", *extra])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def learn_spec(out="run", **opt):
    return {
        "out": out,
        "dataset": {"phantom": PHANTOM},
        "split": {"train": 2, "validation": 2},
        "recon": {"method": "zero-fill"},
        "init": {"kind": "center-only", "M": 4, "calib": [1, 1]},
        "optimizer": {"name": "bass", "M": 16, "L": 12, "K_init": 4, **opt},
    }


def test_bad_schema_reports_field_path(tmp_path, capsys):
    assert run(tmp_path, {"out": "x", "recon": {"lam": -1}}, "evaluate") == 2
    assert "recon/lam" in capsys.readouterr().err
    assert run(tmp_path, {"out": "x", "bogus": 1}, "evaluate") == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["learn", "--spec", str(tmp_path / "broken.json")]) == 2


def test_library_value_errors_are_spec_errors(tmp_path):
    spec = learn_spec(K_init=20)  # K_init >= M
    assert run(tmp_path, spec, "learn") == 2


def test_missing_data_exits_3(tmp_path, capsys):
    spec = {"out": "x", "dataset": {"path": "nowhere.kspd"}, "mask": "m.mask"}
    write_mask(tmp_path / "m.mask", SamplingPattern(KSpaceGrid(8, 8), [0]))
    assert run(tmp_path, spec, "evaluate") == 3
    assert "nowhere.kspd" in capsys.readouterr().err


def test_phantom_output_is_stable(tmp_path, capsys):
    spec = {"out": "a", "dataset": {"phantom": PHANTOM}}
    assert run(tmp_path, spec, "phantom") == 0
    first = capsys.readouterr().out
    assert first.startswith("dims nx=8 ny=8 nt=1 nc=2  items=4  sha256=")
    assert run(tmp_path, {**spec, "out": "b"}, "phantom") == 0
    assert capsys.readouterr().out == first
    assert (tmp_path / "a" / "phantom.kspd").read_bytes() == (tmp_path / "b" / "phantom.kspd").read_bytes()
    assert (tmp_path / "a" / "phantom.truth.npz").read_bytes() == (tmp_path / "b" / "phantom.truth.npz").read_bytes()


def test_learn_trace_and_outputs(tmp_path):
    assert run(tmp_path, learn_spec(), "learn") == 0
    out = tmp_path / "run"
    rows = read_rows(out / "trace.csv")
    assert len(rows) == 12
    assert {r["wall_ms"] for r in rows} == {"0.0"}
    best = np.inf
    for r in rows:
        if r["accepted"] == "1" and int(r["size"]) == 16:
            assert float(r["F"]) <= best
            best = float(r["F"])
    mask = read_mask(out / "final.mask")
    assert mask.size == 16 and mask.locked.size == 4
    for name in ("eval_train.json", "eval_validation.csv", "state.npz", "manifest.json", "final_t0.pgm",
                 "figures/convergence.png", "figures/mask.png", "figures/maps.png"):
        assert (out / name).is_file(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert "trace.csv" in manifest["files"]


def test_learn_greedy_two_additions(tmp_path):
    spec = learn_spec()
    spec["dataset"]["phantom"] = {**PHANTOM, "nx": 4, "ny": 4}
    spec["optimizer"] = {"name": "greedy", "M": 6}
    assert run(tmp_path, spec, "learn") == 0
    rows = read_rows(tmp_path / "run" / "trace.csv")
    assert [int(r["size"]) for r in rows] == [5, 6]


def test_learn_is_reproducible(tmp_path):
    assert run(tmp_path, learn_spec("r1"), "learn") == 0
    assert run(tmp_path, learn_spec("r2"), "learn") == 0
    for name in ("final.mask", "trace.csv", "eval_validation.json", "state.npz", "figures/convergence.png"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes(), name


def test_evaluate_full_mask_zero_fill(tmp_path):
    spec = {"out": "ev", "dataset": {"phantom": PHANTOM}, "split": {"train": 2, "validation": 2},
            "recon": {"method": "zero-fill"}, "mask": "full.mask"}
    write_mask(tmp_path / "full.mask", SamplingPattern(KSpaceGrid(8, 8), range(64)))
    assert run(tmp_path, spec, "evaluate") == 0
    rep = json.loads((tmp_path / "ev" / "eval_validation.json").read_text())
    assert rep["nrmse"] == 0.0
    spec["split"] = {"train": 4, "validation": 0}
    assert run(tmp_path, spec, "evaluate") == 2


def test_evaluate_grid_mismatch(tmp_path):
    spec = {"out": "ev", "dataset": {"phantom": PHANTOM}, "recon": {"method": "zero-fill"}, "mask": "m.mask",
            "split": {"train": 2, "validation": 2}}
    write_mask(tmp_path / "m.mask", SamplingPattern(KSpaceGrid(6, 8), [0]))
    assert run(tmp_path, spec, "evaluate") == 3


def compare_spec(budget=None):
    spec = learn_spec("cmp")
    del spec["optimizer"]
    spec["optimizers"] = [{"name": "bass", "M": 10, "L": 30, "K_init": 3},
                          {"name": "greedy", "M": 10}]
    if budget is not None:
        spec["budget"] = budget
    return spec


def test_compare_series(tmp_path):
    assert run(tmp_path, compare_spec(), "compare") == 0
    rows = read_rows(tmp_path / "cmp" / "compare.csv")
    assert {r["optimizer"] for r in rows} == {"bass", "greedy"}
    for label in ("bass", "greedy"):
        mine = [r for r in rows if r["optimizer"] == label]
        assert mine[0]["epoch"] == "0.0" and mine[0]["recon_calls"] == "0"
        epochs = [float(r["epoch"]) for r in mine]
        assert epochs == sorted(epochs)
        for r in mine:
            assert float(r["nrmse"]) == pytest.approx(np.sqrt(2 * float(r["F"])), rel=1e-12)
    assert (tmp_path / "cmp" / "figures" / "compare.png").is_file()


def test_compare_zero_budget(tmp_path):
    assert run(tmp_path, compare_spec(budget=0), "compare") == 0
    rows = read_rows(tmp_path / "cmp" / "compare.csv")
    assert len(rows) == 2 and all(r["epoch"] == "0.0" for r in rows)


def test_log_scale_u8():
    np.testing.assert_array_equal(log_scale_u8(np.zeros(5)), np.zeros(5))
    img = log_scale_u8(np.array([0.0, 1e-3, 1e-2, 1e-1]))
    assert img.tolist() == [0, 1, 128, 255]


def test_export_maps(tmp_path):
    g = KSpaceGrid(5, 4, 2)
    eps = np.zeros(g.N)
    eps[g.index_of(2, 1, 1)] = 0.25
    rmap = np.linspace(0.1, 2.0, g.N)
    save_npz(tmp_path / "state.npz", eps=eps, rmap=rmap, members=np.array([3, 9]), locked=np.array([3]),
             dims=np.array([5, 4, 2]))
    assert main(["export-maps", "--state", str(tmp_path), "--out", str(tmp_path / "maps"), "--quiet"]) == 0
    out = tmp_path / "maps"
    frame0, frame1 = read_pgm(out / "eps_map_t0.pgm"), read_pgm(out / "eps_map_t1.pgm")
    assert not frame0.any()
    assert np.count_nonzero(frame1) == 1 and frame1[1, 2] == 255
    np.testing.assert_array_equal(read_map_csv(out / "eps_map.csv"), eps)
    np.testing.assert_array_equal(read_map_csv(out / "r_map.csv"), rmap)
    assert read_pgm(out / "mask_t0.pgm")[0, 3] == 255


def test_export_maps_without_state(tmp_path):
    assert main(["export-maps", "--state", str(tmp_path), "--out", str(tmp_path / "m"), "--quiet"]) == 3
