import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tilefuse.errors import MissingCanvasError
from tilefuse.stacks import (PhaseOffset, RawSequence, build_bank, dump_bank, fit_length, load_bank,
                             phase_length, phase_offsets, subsample)
from tilefuse.stitch import FeatureCanvas


def make_canvas(rng, T, d=3, scale=0, layer=1):
    return FeatureCanvas(scale, layer, rng.normal(size=(T, T, d)), np.ones((T, T)))


def test_phase_offsets():
    assert phase_offsets(2) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert phase_offsets(1) == [(0, 0)]
    offs = phase_offsets(3)
    assert len(offs) == 9 and offs[0] == (0, 0) and offs[-1] == (2, 2)


def test_subsample_checkerboard(rng):
    canvas = make_canvas(rng, 4)
    seq = subsample(canvas, PhaseOffset(0, 0), 2)
    assert seq.coords.tolist() == [[0, 0], [0, 2], [2, 0], [2, 2]]
    assert np.array_equal(seq.tokens, canvas.grid[[0, 0, 2, 2], [0, 2, 0, 2]])


def test_subsample_identity(rng):
    canvas = make_canvas(rng, 5)
    seq = subsample(canvas, PhaseOffset(0, 0), 1)
    assert np.array_equal(seq.tokens, canvas.grid.reshape(25, 3))


def test_subsample_lengths(rng):
    canvas = make_canvas(rng, 4)
    lengths = [len(subsample(canvas, off, 2).tokens) for off in phase_offsets(2)]
    assert lengths == [4, 4, 4, 4] and sum(lengths) == 16


def _raw(n, d=2):
    return RawSequence(np.arange(n * d, dtype=float).reshape(n, d) + 1, np.zeros((n, 2), int))


def test_fit_length_exact():
    tokens, raw, _ = fit_length(_raw(576), 576)
    assert raw == 576 and np.array_equal(tokens, _raw(576).tokens)


def test_fit_length_pad():
    tokens, raw, kept = fit_length(_raw(4), 6)
    assert raw == 4 and tokens.shape == (6, 2)
    assert np.array_equal(tokens[:4], _raw(4).tokens)
    assert np.all(tokens[4:] == 0)
    assert len(kept) == 4


def test_fit_length_truncate():
    tokens, raw, _ = fit_length(_raw(9), 4)
    assert raw == 9 and np.array_equal(tokens, _raw(9).tokens[:4])


@pytest.mark.parametrize("n_scales, n_layers, f, expected", [(2, 3, 2, 24), (1, 1, 1, 1), (2, 3, 3, 54)])
def test_bank_cardinality(n_scales, n_layers, f, expected, rng):
    canvases = {(s, l): make_canvas(rng, 12, scale=s, layer=l)
                for s in range(n_scales) for l in range(1, n_layers + 1)}
    bank = build_bank(canvases, f, 16)
    assert len(bank) == expected
    keys = [s.key for s in bank.stacks]
    assert keys == sorted(keys)
    assert all(s.tokens.shape == (16, 3) for s in bank.stacks)


def test_bank_missing_canvas(rng):
    canvases = {(0, 1): make_canvas(rng, 4)}
    with pytest.raises(MissingCanvasError) as info:
        build_bank(canvases, 2, 4, scales=[0, 1], layers=[1])
    assert info.value.key == (1, 1)


def test_bank_deterministic(rng):
    canvases = {(s, l): make_canvas(rng, 8, scale=s, layer=l) for s in range(2) for l in (1, 2)}
    a = build_bank(canvases, 2, 16)
    b = build_bank(canvases, 2, 16)
    assert dump_bank(a) == dump_bank(b)


def test_bank_dump_roundtrip(rng):
    canvases = {(0, 1): make_canvas(rng, 8)}
    bank = build_bank(canvases, 2, 16)
    blob = dump_bank(bank)
    assert blob[:12] == b"".join(n.to_bytes(4, "little") for n in (4, 16, 3))
    assert np.array_equal(load_bank(blob), bank.as_array())


def test_exact_fit_alignment(rng):
    # T_base = 8, f = 2: every phase has 16 tokens, so stack position t is the same
    # canvas cell offset across all four phases
    canvases = {(0, 1): make_canvas(rng, 8)}
    bank = build_bank(canvases, 2, 16)
    for st_ in bank.stacks:
        assert st_.raw_length == 16
        base = st_.coords - np.array([st_.offset.a, st_.offset.b])
        assert np.array_equal(base, bank.stacks[0].coords)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 17), st.integers(1, 5), st.integers(0, 2**31))
def test_partition_and_spacing(T, f, seed):
    rng = np.random.default_rng(seed)
    canvas = make_canvas(rng, T, d=2)
    seen = {}
    for off in phase_offsets(f):
        seq = subsample(canvas, off, f)
        assert len(seq.tokens) == phase_length(T, off, f)
        assert len(seq.tokens) == sum(1 for u in range(T) for v in range(T) if u % f == off.a and v % f == off.b)
        for (u, v), tok in zip(seq.coords.tolist(), seq.tokens):
            assert (u, v) not in seen
            seen[(u, v)] = tok
        # consecutive same-row elements are f columns apart
        rows = seq.coords[:, 0]
        same_row = rows[1:] == rows[:-1]
        assert np.all(np.diff(seq.coords[:, 1])[same_row] == f)
    assert set(seen) == {(u, v) for u in range(T) for v in range(T)}
    rebuilt = np.array([[seen[(u, v)] for v in range(T)] for u in range(T)])
    assert np.array_equal(rebuilt, canvas.grid)
