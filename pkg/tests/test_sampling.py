import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bassmri.core import KSpaceGrid
from bassmri.sampling import (
    GENERATOR_KINDS,
    ConstraintMask,
    GeneratorConfig,
    PositionalConstraint,
    calibration_region,
    conjugate_index,
    generate,
    violates_constraint,
)


def test_center_only_calibration_block():
    g = KSpaceGrid(32, 32)
    p = generate(GeneratorConfig(kind="center-only", M=16, calib=(2, 2)), g)
    kx, ky, _ = g.coords_of(p.indices)
    assert p.size == 16 and p.locked.size == 16
    assert set(kx.tolist()) == {14, 15, 16, 17} and set(ky.tolist()) == {14, 15, 16, 17}


def test_uniform_random_is_deterministic():
    g = KSpaceGrid(16, 16)
    cfg = GeneratorConfig(kind="uniform-random", M=64, seed=3)
    np.testing.assert_array_equal(generate(cfg, g).indices, generate(cfg, g).indices)
    other = generate(GeneratorConfig(kind="uniform-random", M=64, seed=4), g)
    assert not np.array_equal(generate(cfg, g).indices, other.indices)


@pytest.mark.parametrize("kind", GENERATOR_KINDS)
@pytest.mark.parametrize("nt,frames", [(1, "all"), (3, "all"), (3, "first")])
def test_generators_hit_M_exactly(kind, nt, frames):
    g = KSpaceGrid(20, 16, nt)
    n_cal = calibration_region(g, (2, 3), frames).size
    for M in (n_cal + 10, g.N // 4, g.N // 2):
        cfg = GeneratorConfig(kind=kind, M=M, calib=(2, 3), calib_frames=frames, seed=11, radius=1.2)
        p = generate(cfg, g)
        assert p.size == M
        np.testing.assert_array_equal(p.locked, calibration_region(g, (2, 3), frames))
        assert p.mask[p.locked].all()


def test_generator_errors():
    g = KSpaceGrid(8, 8)
    with pytest.raises(ValueError):
        generate(GeneratorConfig(kind="center-only", M=3, calib=(1, 1)), g)
    with pytest.raises(ValueError):
        generate(GeneratorConfig(kind="uniform-random", M=65), g)


def test_poisson_disk_min_distance_brute_force():
    g = KSpaceGrid(64, 64)
    r = 2.5
    p = generate(GeneratorConfig(kind="poisson-disk", M=300, radius=r, calib=(3, 3), seed=5), g)
    free = np.setdiff1d(p.indices, p.locked)
    kx, ky, _ = g.coords_of(free)
    pts = np.stack([kx, ky], axis=1).astype(float)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    d[np.diag_indices_from(d)] = np.inf
    assert d.min() >= r


def test_variable_density_prefers_center():
    g = KSpaceGrid(64, 64)
    counts = np.zeros(g.N)
    for s in range(20):
        counts += generate(GeneratorConfig(kind="variable-density", M=512, seed=s), g).mask
    kx, ky, _ = g.coords_of(np.arange(g.N))
    d = np.hypot(kx - 32, ky - 32)
    assert counts[d < 8].mean() > 3 * counts[d > 24].mean()


def test_conjugate_index_examples():
    g = KSpaceGrid(4, 4)
    dc = g.index_of(*g.center)
    assert conjugate_index(dc, g) == dc
    # centred layout: offset +1 from DC maps to offset -1
    assert conjugate_index(g.index_of(3, 2), g) == g.index_of(1, 2)
    # the most negative frequency is its own partner under modular negation
    assert conjugate_index(g.index_of(0, 2), g) == g.index_of(0, 2)
    g3 = KSpaceGrid(5, 4, 3)
    ks = np.arange(g3.N)
    np.testing.assert_array_equal(conjugate_index(conjugate_index(ks, g3), g3), ks)
    _, _, t = g3.coords_of(conjugate_index(ks, g3))
    np.testing.assert_array_equal(t, g3.coords_of(ks)[2])


def test_violates_constraint_examples():
    g = KSpaceGrid(16, 16)
    pc = PositionalConstraint(radius=1)
    c = g.index_of(5, 5)
    assert not violates_constraint(c, [], pc, g)
    assert violates_constraint(g.index_of(6, 5), [c], pc, g)
    assert violates_constraint(g.index_of(6, 6), [c], pc, g)
    assert not violates_constraint(g.index_of(7, 5), [c], pc, g)
    far = conjugate_index(c, g)
    assert violates_constraint(far, [c], pc, g)
    assert not violates_constraint(far, [c], PositionalConstraint(1, exclude_conjugate=False), g)
    # adjacency never crosses frames
    g2 = KSpaceGrid(16, 16, 2)
    assert not violates_constraint(g2.index_of(6, 5, 1), [g2.index_of(5, 5, 0)], pc, g2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), radius=st.integers(0, 2), conj=st.booleans())
def test_constraint_mask_matches_pairwise_rule(seed, radius, conj):
    g = KSpaceGrid(9, 8, 2)
    pc = PositionalConstraint(radius, conj)
    rng = np.random.default_rng(seed)
    cm = ConstraintMask(g, pc)
    chosen = []
    for k in rng.permutation(g.N)[:40].tolist():
        expect = violates_constraint(k, chosen, pc, g)
        assert cm.violates(k) == expect
        if not expect:
            cm.accept(k)
            chosen.append(k)
    for a, b in itertools.combinations(chosen, 2):
        assert not violates_constraint(a, [b], pc, g)
