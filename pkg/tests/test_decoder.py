import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffschemes.algebra import load_rotation, make_constellation
from ffschemes.codes import (
    alamouti_code,
    encode,
    golden_thread_scheme,
    residual_energy,
    spatial_multiplexing_code,
    t1_scheme,
    threaded_scheme,
)
from ffschemes.decoder import RealLatticeModel, ml_decode_exhaustive, real_stack, sphere_decode

QAM4 = make_constellation("QAM4")
BPSK = make_constellation("BPSK")
CODES = [
    golden_thread_scheme(QAM4).codes[0],
    golden_thread_scheme(QAM4).codes[1],
    t1_scheme(3, load_rotation(3), c=BPSK).codes[2],
    threaded_scheme(2, 2, load_rotation(4), c=BPSK).codes[0],
    alamouti_code(QAM4),
]


def _trial(rng, code, nr, snr_db):
    h = (rng.standard_normal((code.nt, nr)) + 1j * rng.standard_normal((code.nt, nr))) / np.sqrt(2)
    s = rng.choice(code.constellation.points, size=code.k)
    n0 = 10 ** (-snr_db / 10)
    w = np.sqrt(n0 / 2) * (rng.standard_normal((code.t, nr)) + 1j * rng.standard_normal((code.t, nr)))
    return h, s, encode(code, s) @ h + w


def test_real_stack_convention():
    np.testing.assert_array_equal(real_stack(np.array([[1 + 2j, 3 - 4j]])), [1, 2, 3, -4])


def test_lattice_model_reproduces_channel_output():
    rng = np.random.default_rng(0)
    for code in CODES:
        h = rng.standard_normal((code.nt, 2)) + 1j * rng.standard_normal((code.nt, 2))
        s = rng.choice(code.constellation.points, size=code.k)
        model = RealLatticeModel.build(code, h, 1.7)
        x = np.array([getattr(s[k], "real" if p == 0 else "imag") for k, p in model.variables])
        np.testing.assert_allclose(model.generator @ x, real_stack(1.7 * encode(code, s) @ h), atol=1e-12)
        np.testing.assert_allclose(model.to_symbols(x), s)


@pytest.mark.parametrize("code", CODES, ids=lambda c: c.label)
def test_noiseless_recovery(code):
    rng = np.random.default_rng(1)
    for _ in range(20):
        h, s, _ = _trial(rng, code, 2, 0)
        y = encode(code, s) @ h
        np.testing.assert_array_equal(ml_decode_exhaustive(code, y, h, 1.0), s)
        np.testing.assert_array_equal(sphere_decode(code, y, h, 1.0), s)


def test_zero_channel_returns_tie_break_vector():
    code = CODES[0]
    y = np.ones((1, 1), dtype=complex)
    h = np.zeros((2, 1))
    s_ex, i_ex = ml_decode_exhaustive(code, y, h, 1.0, return_indices=True)
    s_sd, i_sd = sphere_decode(code, y, h, 1.0, return_indices=True)
    assert i_ex.tolist() == i_sd.tolist() == [0, 0]
    np.testing.assert_array_equal(s_ex, s_sd)


@pytest.mark.parametrize("code", CODES, ids=lambda c: c.label)
def test_sphere_matches_exhaustive(code):
    rng = np.random.default_rng(2)
    for i in range(150):
        h, _, y = _trial(rng, code, 1 + i % 2, 5 + i % 15)
        a = ml_decode_exhaustive(code, y, h, 1.0, return_indices=True)[1]
        b = sphere_decode(code, y, h, 1.0, return_indices=True)[1]
        assert a.tolist() == b.tolist()


def test_exhaustive_matches_python_rescan():
    code = CODES[2]
    rng = np.random.default_rng(3)
    pts = code.constellation.points
    for _ in range(20):
        h, _, y = _trial(rng, code, 1, 3)
        best = min(itertools.product(range(len(pts)), repeat=code.k),
                   key=lambda ix: (np.linalg.norm(y - encode(code, pts[list(ix)]) @ h) ** 2, ix))
        assert tuple(ml_decode_exhaustive(code, y, h, 1.0, return_indices=True)[1]) == best


@pytest.mark.parametrize("code", CODES, ids=lambda c: c.label)
def test_leaf_count_bounded_by_codebook(code):
    rng = np.random.default_rng(4)
    for _ in range(30):
        h, _, y = _trial(rng, code, 1, 0)
        stats = {}
        sphere_decode(code, y, h, 1.0, stats=stats)
        assert stats["leaves"] <= code.codebook_size


def test_rank_deficient_channel_matches_oracle():
    code = spatial_multiplexing_code(1, 2, QAM4)
    rng = np.random.default_rng(5)
    for _ in range(30):
        h = np.zeros((2, 2), dtype=complex)
        h[0] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        y = rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2))
        a = ml_decode_exhaustive(code, y, h, 1.0, return_indices=True)[1]
        b = sphere_decode(code, y, h, 1.0, return_indices=True)[1]
        assert a.tolist() == b.tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_joint_scaling_invariance(seed, c):
    code = CODES[0]
    rng = np.random.default_rng(seed)
    h, _, y = _trial(rng, code, 2, 10)
    a = ml_decode_exhaustive(code, y, h, 1.0)
    b = ml_decode_exhaustive(code, c * y, c * h, 1.0)
    r = residual_energy(code, y, h, 1.0, np.stack([a, b]))
    # the two answers coincide or are exact-metric ties up to rounding
    assert np.array_equal(a, b) or abs(r[0] - r[1]) <= 1e-9 * max(r.max(), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_optimality(seed):
    code = CODES[3]
    rng = np.random.default_rng(seed)
    h, _, y = _trial(rng, code, 1, 6)
    s = sphere_decode(code, y, h, 1.0)
    best = residual_energy(code, y, h, 1.0, s[None])[0]
    others = rng.choice(code.constellation.points, size=(64, code.k))
    assert np.all(residual_energy(code, y, h, 1.0, others) >= best)
