import itertools
import math

import numpy as np
import pytest

from ffschemes.algebra import AlgebraicRotation, golden_phasor, load_rotation, make_constellation
from ffschemes.codes import (
    beamforming_scheme,
    golden_constants,
    golden_thread_scheme,
    single_code_scheme,
    spatial_multiplexing_code,
    switching_scheme,
    t1_scheme,
    threaded_scheme,
)
from ffschemes.diversity import (
    certify_full_diversity,
    diversity_upper_bound,
    exhaustive_size,
    stack_differences,
)
from ffschemes.errors import EnumerationTooLarge, InvalidDifference
from ffschemes.feedback import difference_vectors

QAM4 = make_constellation("QAM4")
BPSK = make_constellation("BPSK")
GOLDEN = golden_thread_scheme(QAM4)


def _rotation2():
    # real two-dimensional rotation by arctan(2)/2, whose entries are algebraic
    th = 0.5 * math.atan(2.0)
    m = np.array([[math.cos(th), math.sin(th)], [-math.sin(th), math.cos(th)]])
    return AlgebraicRotation(2, m.astype(complex), "atan2-half")


def _brute(scheme):
    """Every stack through one batched SVD, no screening."""
    diffs = [difference_vectors(c) for c in scheme.codes]
    best_rank, best_l = scheme.nt, math.inf
    for combo in itertools.product(*[range(len(d)) for d in diffs]):
        x = stack_differences(scheme, [d[i] for d, i in zip(diffs, combo)])
        s = np.linalg.svd(x, compute_uv=False)
        r = int(np.sum(s > 1e-9 * s[0]))
        best_rank = min(best_rank, r)
        best_l = min(best_l, s[-1] ** 2 if len(s) == scheme.nt else 0.0)
    return best_rank, best_l


def test_stack_differences_golden_example():
    g = golden_constants()
    a, sa = g["alpha"], g["sigma_alpha"]
    x = stack_differences(GOLDEN, [np.array([2, 0]), np.array([2, 0])])
    np.testing.assert_allclose(x, [[2 * a, 2 * sa], [2 * a, 2j * sa]], atol=1e-14)


def test_stack_differences_single_code():
    s = single_code_scheme(spatial_multiplexing_code(2, 2, QAM4))
    d = np.array([2, 0, 0, 2j])
    np.testing.assert_array_equal(stack_differences(s, [d]), [[2, 0], [0, 2j]])


def test_stack_differences_errors():
    with pytest.raises(InvalidDifference):
        stack_differences(GOLDEN, [np.array([0, 0]), np.array([2, 0])])
    with pytest.raises(InvalidDifference):
        stack_differences(GOLDEN, [np.array([2, 0])])
    with pytest.raises(InvalidDifference):
        stack_differences(GOLDEN, [np.array([1, 0]), np.array([2, 0])])


def test_identical_single_antenna_codes_rank_one():
    s = beamforming_scheme(np.array([[1, 0], [1, 0]]), QAM4)
    x = stack_differences(s, [np.array([2]), np.array([2j])])
    assert np.linalg.matrix_rank(x) == 1


def test_golden_certified():
    cert = certify_full_diversity(GOLDEN)
    assert cert.stacks_checked == 6400 and cert.min_rank == 2
    assert cert.full_diversity_certified and cert.ft_optimal and cert.mode == "EXHAUSTIVE"
    assert cert.counterexample is None and cert.lambda_star > 0
    assert cert.upper_bound(2) == 4


def test_golden_matches_brute_force():
    rank, lam = _brute(GOLDEN)
    cert = certify_full_diversity(GOLDEN)
    assert cert.min_rank == rank
    assert cert.lambda_star == pytest.approx(lam, rel=1e-9)
    # frozen from the brute-force scan
    assert cert.lambda_star == pytest.approx(0.07435018625275315, rel=1e-9)


def test_duplicate_beamformers_refuted():
    s = beamforming_scheme(np.array([[1, 0], [1, 0]]), QAM4)
    cert = certify_full_diversity(s)
    assert cert.min_rank == 1 and cert.refuted and not cert.full_diversity_certified
    assert cert.counterexample is not None and cert.lambda_star == 0.0
    x = stack_differences(s, cert.counterexample)
    assert np.linalg.matrix_rank(x) < 2
    assert "status=refuted" in cert.summary()


@pytest.mark.parametrize("nt", [2, 3, 4])
def test_t1_certified_bpsk(nt):
    u = _rotation2() if nt == 2 else load_rotation(nt)
    s = t1_scheme(nt, u, c=BPSK)
    cert = certify_full_diversity(s)
    assert cert.stacks_checked == (3**nt - 1) ** nt
    assert cert.min_rank == nt and cert.full_diversity_certified and cert.ft_optimal


def test_t1_nt3_lambda_star_frozen():
    s = t1_scheme(3, load_rotation(3), c=BPSK)
    rank, lam = _brute(s)
    cert = certify_full_diversity(s)
    assert rank == 3 and cert.lambda_star == pytest.approx(lam, rel=1e-9)
    assert cert.lambda_star == pytest.approx(0.0014044472692097034, rel=1e-9)


def test_threaded_n2_t2_certified_bpsk():
    s = threaded_scheme(2, 2, load_rotation(4), c=BPSK)
    cert = certify_full_diversity(s)
    assert cert.stacks_checked == (3**8 - 1) ** 2
    assert cert.min_rank == 4 and cert.full_diversity_certified and cert.ft_optimal
    # frozen from a full brute-force SVD scan of all 4.3e7 stacks
    assert cert.lambda_star == pytest.approx(1.1591261022157733e-08, rel=1e-6)


def test_threaded_n3_t2_sampled_not_refuted():
    q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((6, 6))
                        + 1j * np.random.default_rng(5).standard_normal((6, 6)))
    s = threaded_scheme(3, 2, AlgebraicRotation(6, q, "random"), c=BPSK)
    with pytest.raises(EnumerationTooLarge):
        certify_full_diversity(s)
    cert = certify_full_diversity(s, mode="sampled", samples=20000, seed=1)
    assert cert.min_rank == 6 and not cert.full_diversity_certified and not cert.ft_optimal
    assert "status=not refuted" in cert.summary()


def test_sampled_refutes_rank_deficient_scheme():
    s = beamforming_scheme(np.array([[1, 0], [1, 0]]), QAM4)
    cert = certify_full_diversity(s, mode="sampled", samples=500, seed=3)
    assert cert.min_rank == 1 and cert.counterexample is not None
    assert cert.mode == "SAMPLED" and not cert.full_diversity_certified


def test_sampled_lambda_never_below_exhaustive():
    ex = certify_full_diversity(GOLDEN)
    sa = certify_full_diversity(GOLDEN, mode="sampled", samples=3000, seed=9)
    assert sa.min_rank >= ex.min_rank
    assert sa.lambda_star >= ex.lambda_star


def test_sampled_requires_seed():
    with pytest.raises(ValueError):
        certify_full_diversity(GOLDEN, mode="sampled")


def test_too_few_rows_cannot_be_full_rank():
    s = single_code_scheme(spatial_multiplexing_code(1, 2, BPSK))
    cert = certify_full_diversity(s)
    assert cert.min_rank < 2 and cert.counterexample is not None
    assert not cert.ft_optimal


def test_spatial_multiplexing_upper_bound():
    s = single_code_scheme(spatial_multiplexing_code(2, 2, QAM4))
    cert = certify_full_diversity(s)
    assert cert.min_rank == 1 and diversity_upper_bound(cert, 2) == 2


def test_switching_full_rank_not_ft_optimal():
    s = switching_scheme(BPSK, QAM4)
    cert = certify_full_diversity(s)
    assert cert.min_rank == 2 and cert.full_diversity_certified and not cert.ft_optimal


def test_budget_enforced():
    assert exhaustive_size(GOLDEN) == 6400
    with pytest.raises(EnumerationTooLarge):
        certify_full_diversity(GOLDEN, budget=6399)


def test_worker_count_does_not_change_result():
    s = t1_scheme(3, load_rotation(3), c=BPSK)
    a = certify_full_diversity(s, workers=1)
    b = certify_full_diversity(s, workers=3)
    assert (a.min_rank, a.lambda_star) == (b.min_rank, b.lambda_star)
    r = beamforming_scheme(np.array([[1, 0], [1, 0]]), QAM4)
    a = certify_full_diversity(r, mode="sampled", samples=70000, seed=2, workers=1)
    b = certify_full_diversity(r, mode="sampled", samples=70000, seed=2, workers=4)
    assert a.counterexample_index == b.counterexample_index


def test_power_scale_scales_lambda():
    base = certify_full_diversity(GOLDEN).lambda_star
    scaled = GOLDEN.with_codes([c.with_power_scale(0.5) for c in GOLDEN.codes])
    assert certify_full_diversity(scaled).lambda_star == pytest.approx(base / 4, rel=1e-9)
