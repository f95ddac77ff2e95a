import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffschemes import algebra
from ffschemes.algebra import (
    Constellation,
    besicovitch_exponents,
    besicovitch_set,
    difference_alphabet,
    golden_phasor,
    integer_relation,
    load_rotation,
    make_constellation,
    pairwise_ratio_relation,
    verify_rotation,
)
from ffschemes.errors import DimensionError, RotationUnavailable, UnsupportedConstellation


# ---------------------------------------------------------------------------
# matrix kernel
# ---------------------------------------------------------------------------

def test_rank_identity():
    assert algebra.rank(np.eye(3)) == 3


def test_min_singular_value_singular_diag():
    assert algebra.min_singular_value(np.diag([3.0, 0.0])) == 0.0


def test_det_matches_permutation_sum_on_thread_matrix():
    from ffschemes.codes import thread_matrix

    rng = np.random.default_rng(11)
    vecs = [rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in range(3)]
    m = thread_matrix(vecs)
    # Leibniz expansion as an independent oracle
    total = 0j
    for perm in itertools.permutations(range(3)):
        inv = sum(1 for i in range(3) for j in range(i + 1, 3) if perm[i] > perm[j])
        total += (-1) ** inv * np.prod([m[i, perm[i]] for i in range(3)])
    assert abs(algebra.det(m) - total) < 1e-12


def test_kernel_shape_errors():
    with pytest.raises(DimensionError):
        algebra.det(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        algebra.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        algebra.as_matrix(np.array([[np.nan]]))


def test_kernel_basics():
    a = np.array([[1 + 1j, 2], [0, 3j]])
    np.testing.assert_allclose(algebra.hermitian_transpose(a), a.conj().T)
    np.testing.assert_allclose(algebra.matmul(a, a), a @ a)
    assert algebra.frobenius_norm(a) == pytest.approx(np.sqrt(1 + 1 + 4 + 9))


def test_min_singular_value_accuracy():
    rng = np.random.default_rng(5)
    for n in range(1, 9):
        m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        ref = float(mpmath.svd_c(mpmath.matrix(m.tolist()), compute_uv=False)[n - 1])
        assert algebra.min_singular_value(m) == pytest.approx(ref, rel=1e-10)


def test_rank_agrees_with_gram_eigen_count():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        r, c = rng.integers(1, 7, size=2)
        k = rng.integers(0, min(r, c) + 1)
        m = (rng.standard_normal((r, k)) + 1j * rng.standard_normal((r, k))) @ (
            rng.standard_normal((k, c)) + 1j * rng.standard_normal((k, c)))
        ev = np.linalg.eigvalsh(m.conj().T @ m)
        gram_rank = int(np.sum(ev > 1e-9 * max(ev.max(), 1e-300))) if k else 0
        assert algebra.rank(m) == gram_rank == k


# ---------------------------------------------------------------------------
# constellations
# ---------------------------------------------------------------------------

def test_qam4_points():
    c = make_constellation("QAM4")
    assert set(c.points.tolist()) == {1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j}
    assert c.bits_per_symbol == 2


def test_bpsk_points_and_bit_convention():
    c = make_constellation("BPSK")
    assert set(c.points.tolist()) == {1, -1}
    assert c.bits_per_symbol == 1
    assert c.gray_map["0"] == 1 and c.gray_map["1"] == -1


@pytest.mark.parametrize("name", ["QAM4", "QAM16", "QAM64", "QAM256"])
def test_gray_neighbours_differ_in_one_bit(name):
    c = make_constellation(name)
    lookup = {complex(p): i for i, p in enumerate(c.points)}
    checked = 0
    for i, p in enumerate(c.points):
        for step in (2, 2j):
            q = complex(p) + step
            if q in lookup:
                assert bin(i ^ lookup[q]).count("1") == 1
                checked += 1
    side = int(round(np.sqrt(c.size)))
    assert checked == 2 * side * (side - 1)


def test_qam16_coordinates():
    c = make_constellation("QAM16")
    assert c.size == 16
    assert set(c.points.real.tolist()) == {-3, -1, 1, 3}
    assert set(c.points.imag.tolist()) == {-3, -1, 1, 3}


@pytest.mark.parametrize("name,energy", [("BPSK", 1), ("QAM4", 2), ("QAM16", 10),
                                         ("QAM64", 42), ("QAM256", 170)])
def test_mean_energy(name, energy):
    assert make_constellation(name).mean_energy == energy


def test_unknown_constellation():
    with pytest.raises(UnsupportedConstellation):
        make_constellation("QAM8")


def test_gray_map_is_bijection():
    c = make_constellation("QAM64")
    assert len(set(c.gray_map.values())) == 64
    assert all(len(k) == 6 for k in c.gray_map)


def test_difference_alphabet_examples():
    assert set(difference_alphabet(make_constellation("QAM4")).tolist()) == {
        0, 2, -2, 2j, -2j, 2 + 2j, 2 - 2j, -2 + 2j, -2 - 2j}
    assert set(difference_alphabet(make_constellation("BPSK")).tolist()) == {0, 2, -2}
    single = Constellation("one", np.array([1 + 0j]), 0)
    assert difference_alphabet(single).tolist() == [0]


@pytest.mark.parametrize("name", ["BPSK", "QAM4", "QAM16", "QAM64"])
def test_difference_alphabet_symmetric_and_matches_pairs(name):
    c = make_constellation(name)
    d = set(difference_alphabet(c).tolist())
    assert all(-x in d for x in d)
    assert d == set((c.points[:, None] - c.points[None, :]).ravel().tolist())


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def test_builtin_rotation_rows():
    np.testing.assert_array_equal(load_rotation(4).matrix[0].real, [-0.3664, -0.7677, 0.4231, 0.3121])
    np.testing.assert_array_equal(load_rotation(3).matrix[0].real, [-0.328, -0.591, -0.737])


def test_rotation_unavailable():
    with pytest.raises(RotationUnavailable):
        load_rotation(6)


def test_rotation_file_roundtrip(tmp_path):
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    p = tmp_path / "rot6.txt"
    p.write_text("6\n" + "\n".join(" ".join(repr(float(v)) for v in row) for row in q) + "\n")
    u = load_rotation(6, p)
    assert u.dim == 6 and u.orth_residual < 1e-9 and u.tol == 1e-9
    with pytest.raises(DimensionError):
        load_rotation(4, p)


def test_identity_rotation_has_zero_product_distance():
    u = algebra.AlgebraicRotation(3, np.eye(3), "identity")
    rep = verify_rotation(u, make_constellation("BPSK"))
    assert rep.exhaustive and rep.min_prod_dist == 0.0


@pytest.mark.parametrize("dim", [3, 4])
def test_builtin_rotation_fidelity(dim):
    rep = verify_rotation(load_rotation(dim), make_constellation("BPSK"))
    assert rep.orth_residual < 5e-3
    assert rep.exhaustive and rep.vectors_checked == 3**dim - 1
    assert rep.min_prod_dist > 0


def test_verify_rotation_sampled_mode():
    rep = verify_rotation(load_rotation(4), make_constellation("QAM4"), budget=5000, seed=3)
    assert not rep.exhaustive and rep.min_prod_dist > 0


# ---------------------------------------------------------------------------
# exponent sets
# ---------------------------------------------------------------------------

def test_besicovitch_example_set():
    ps = besicovitch_exponents(4, primes=(2, 3), degrees=(2, 2))
    np.testing.assert_allclose(ps.betas, [1, np.sqrt(2), np.sqrt(3), np.sqrt(6)], rtol=0, atol=1e-15)


def test_besicovitch_default_t2():
    ps = besicovitch_exponents(2)
    np.testing.assert_allclose(ps.betas, [np.sqrt(2), np.sqrt(3)], rtol=0, atol=1e-15)


def test_golden_phasor():
    ps = golden_phasor()
    assert ps.betas[0] == pytest.approx((1 + 5**0.5) / 2, abs=1e-15)
    assert abs(abs(ps.gammas[0]) - 1) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=12))
def test_phasors_unit_modulus_and_distinct(t):
    ps = besicovitch_exponents(t)
    assert len(ps) == t
    assert np.all(np.abs(np.abs(ps.gammas) - 1) < 1e-12)
    assert len(set(ps.betas)) == t


@pytest.mark.parametrize("t", [2, 3, 4, 6])
def test_pairwise_ratios_irrational_at_bounded_height(t):
    exact = besicovitch_exponents(t).exact(60)
    for a, b in itertools.combinations(exact, 2):
        assert pairwise_ratio_relation(a, b, max_coeff=1000) is None


def test_pairwise_probe_detects_rational_ratio():
    assert pairwise_ratio_relation(mpmath.sqrt(8), mpmath.sqrt(2)) == (1, -2)


def test_integer_relation_probe():
    with mpmath.workdps(60):
        s2, s3 = mpmath.sqrt(2), mpmath.sqrt(3)
        assert integer_relation([1, s2, s3, s2 * s3]) is None
        rel = integer_relation([1, s2, 3 * s2 + 5])
        assert rel is not None and abs(rel[0] * 1 + rel[1] * s2 + rel[2] * (3 * s2 + 5)) < 1e-40


def test_besicovitch_set_ordering():
    ps = besicovitch_set((2, 3, 5), (2, 2, 2))
    assert ps.labels[:4] == ("1", "sqrt2", "sqrt3", "sqrt2*sqrt3")
    assert len(ps) == 8
