import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tilefuse.stitch import (FeatureCanvas, PatchFeatureGrid, dump_canvas, hann_weights, load_canvas,
                             overlap_add)
from tilefuse.errors import StitchError

import oracles
from conftest import random_windows, toy_plan


def test_hann_t2():
    np.testing.assert_allclose(hann_weights(2), np.full((2, 2), 0.25), atol=1e-15)


def test_hann_t4():
    h = np.sqrt(np.diag(hann_weights(4)))
    np.testing.assert_allclose(h, [0.14644660940672624, 0.8535533905932737,
                                   0.8535533905932737, 0.14644660940672624], atol=1e-4)
    np.testing.assert_allclose(h, oracles.hann_1d(4), atol=1e-15)


@pytest.mark.parametrize("t", [2, 4, 6, 8, 12, 24])
def test_hann_symmetry_and_positivity(t):
    W = hann_weights(t)
    assert np.all(W > 0)
    assert np.array_equal(W, W.T)
    assert np.array_equal(W, W[::-1, ::-1])


@pytest.mark.parametrize("t", [3, 0, 1])
def test_hann_rejects_odd(t):
    with pytest.raises(StitchError):
        hann_weights(t)


def test_single_window_is_identity(rng):
    plan = toy_plan(4, 4)
    windows, patches = random_windows(rng, plan, 5)
    canvas = overlap_add(patches, plan)
    assert np.array_equal(canvas.grid, windows[(0, 0)])


def test_constant_patches(rng):
    plan = toy_plan(12, 4)
    c = rng.normal(size=3)
    patches = [PatchFeatureGrid(0, 1, (i, j), np.broadcast_to(c, (4, 4, 3)).copy())
               for i in range(5) for j in range(5)]
    canvas = overlap_add(patches, plan)
    assert np.all(canvas.grid == c)


def test_matches_loop_oracle(rng):
    plan = toy_plan(8, 4)
    windows, patches = random_windows(rng, plan, 3)
    expected, den = oracles.overlap_add_loop(8, 4, windows)
    canvas = overlap_add(patches, plan)
    rel = np.abs(canvas.grid - expected).max() / np.abs(expected).max()
    assert rel < 1e-9
    np.testing.assert_allclose(canvas.weight_sums, den, rtol=1e-12)


@pytest.mark.parametrize("T, t", [(8, 2), (12, 4), (16, 8), (48, 12)])
def test_interior_partition_of_unity(T, t, rng):
    plan = toy_plan(T, t)
    _, patches = random_windows(rng, plan, 1)
    den = overlap_add(patches, plan).weight_sums
    tau = t // 2
    interior = den[tau:T - tau, tau:T - tau]
    np.testing.assert_allclose(interior, 1.0, atol=1e-9)


def test_order_of_patches_does_not_matter(rng):
    plan = toy_plan(12, 4)
    _, patches = random_windows(rng, plan, 4)
    a = overlap_add(patches, plan)
    shuffled = [patches[k] for k in rng.permutation(len(patches))]
    b = overlap_add(shuffled, plan)
    assert np.array_equal(a.grid, b.grid)


def test_reverse_accumulation_within_tolerance(rng):
    plan = toy_plan(16, 4)
    windows, patches = random_windows(rng, plan, 3)
    canvas = overlap_add(patches, plan)
    # accumulate in reverse window order with plain numpy
    W = hann_weights(4)
    num = np.zeros((16, 16, 3))
    den = np.zeros((16, 16))
    starts = plan.start_positions_tok
    for (i, j) in sorted(windows, reverse=True):
        r, c = starts[i], starts[j]
        num[r:r + 4, c:c + 4] += W[:, :, None] * windows[(i, j)]
        den[r:r + 4, c:c + 4] += W
    np.testing.assert_allclose(canvas.grid, num / den[:, :, None], rtol=0, atol=1e-12)


def test_missing_window(rng):
    plan = toy_plan(8, 4)
    _, patches = random_windows(rng, plan, 2)
    with pytest.raises(StitchError, match="missing"):
        overlap_add(patches[:-1], plan)


def test_wrong_window_shape(rng):
    plan = toy_plan(8, 4)
    _, patches = random_windows(rng, plan, 2)
    patches[0] = PatchFeatureGrid(0, 1, patches[0].window_index, np.zeros((2, 2, 2)))
    with pytest.raises(StitchError):
        overlap_add(patches, plan)


def test_canvas_dump_roundtrip(rng):
    grid = rng.normal(size=(6, 6, 3))
    canvas = FeatureCanvas(0, 1, grid, np.ones((6, 6)))
    blob = dump_canvas(canvas)
    assert blob[:8] == (6).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert len(blob) == 8 + 6 * 6 * 3 * 8
    assert np.array_equal(load_canvas(blob), grid)
    # token-major: the first d values are token (0, 0)
    assert np.array_equal(np.frombuffer(blob[8:8 + 24], "<f8"), grid[0, 0])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(4, 2), (8, 4), (12, 6), (12, 2), (16, 8)]), st.integers(0, 2**31))
def test_convexity_property(Tt, seed):
    T, t = Tt
    rng = np.random.default_rng(seed)
    plan = toy_plan(T, t)
    windows, patches = random_windows(rng, plan, 2)
    lo, hi = oracles.contributor_range(T, t, windows)
    out = overlap_add(patches, plan).grid
    assert np.all(out >= lo) and np.all(out <= hi)
    assert np.all(np.isfinite(out))
