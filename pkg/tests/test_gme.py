import numpy as np
import pytest

from cligme.gme import (
    GmeRegularizer,
    check_overall_convexity,
    complete_to_nonsingular,
    design_B_multi,
    design_B_theta,
    eval_gme_penalty,
)
from cligme.linop import as_linear_map, block_diag, identity, make_blur, make_difference_operators, stack, to_dense, zero
from cligme.prox import L1Norm


def first_difference(l, n):
    D = np.zeros((l, n))
    for i in range(l):
        D[i, i], D[i, i + 1] = -1, 1
    return D


def cert_lambda_min(A, L, B, mu):
    """Independent dense eigensolve of A^T A - mu L^T B^T B L."""
    BL = B @ L
    return np.linalg.eigvalsh(A.T @ A - mu * BL.T @ BL)[0]


def test_complete_examples():
    np.testing.assert_array_equal(np.abs(complete_to_nonsingular([[0.0, 1.0]])), np.eye(2))
    np.testing.assert_array_equal(complete_to_nonsingular(np.eye(3)), np.eye(3))


def test_complete_random(rng):
    L = rng.standard_normal((3, 5))
    Lt = complete_to_nonsingular(L)
    np.testing.assert_array_equal(np.hstack([np.zeros((3, 2)), np.eye(3)]) @ Lt, L)
    assert abs(np.linalg.det(Lt)) > 1e-8


def test_complete_rank_deficient():
    L = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    with pytest.raises(np.linalg.LinAlgError, match="rank is 1"):
        complete_to_nonsingular(L)


def test_design_theta_zero():
    A = np.diag([2.0, 1.0])
    B = design_B_theta(A, np.eye(2), 1.0, 0.0)
    np.testing.assert_array_equal(B, 0)
    reg = GmeRegularizer(L1Norm(2), as_linear_map(B))
    assert eval_gme_penalty(reg, np.array([1.5, -0.2])) == pytest.approx(1.7)


def test_design_diag_hand_example():
    A = np.diag([2.0, 1.0])
    B = design_B_theta(A, np.eye(2), 1.0, 1.0)
    # Lambda = diag(4, 1) up to ordering; rows of B are +-2 e1, +-1 e2
    np.testing.assert_allclose(np.sort(np.abs(B).ravel()), [0, 0, 1, 2], atol=1e-12)
    np.testing.assert_allclose(A.T @ A - B.T @ B, 0, atol=1e-12)


def test_design_random_first_difference(rng):
    A = rng.standard_normal((6, 5))
    L = first_difference(4, 5)
    B = design_B_theta(A, L, 0.05, 0.9)
    assert B.shape == (4, 4)
    assert cert_lambda_min(A, L, B, 0.05) >= -1e-9 * np.linalg.norm(A, 2) ** 2


def test_design_argument_checks(rng):
    A = rng.standard_normal((3, 3))
    with pytest.raises(ValueError):
        design_B_theta(A, np.eye(3), 1.0, 1.5)
    with pytest.raises(ValueError):
        design_B_theta(A, np.eye(3), 0.0, 0.5)
    with pytest.raises(np.linalg.LinAlgError):
        design_B_theta(A, np.ones((2, 3)), 1.0, 0.5)


@pytest.mark.parametrize("theta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_design_passes_certificate(theta, rng):
    for _ in range(5):
        m, n = rng.integers(3, 12, size=2)
        l = rng.integers(1, n + 1)
        A, L = rng.standard_normal((m, n)), rng.standard_normal((l, n))
        mu = rng.uniform(0.01, 2)
        B = design_B_theta(A, L, mu, theta)
        cert = check_overall_convexity(as_linear_map(A), as_linear_map(L), as_linear_map(B), mu)
        assert cert.passed, cert
        assert cert_lambda_min(A, L, B, mu) >= -1e-9 * np.linalg.norm(A, 2) ** 2


def test_certificate_monotone_in_theta(rng):
    A, L = rng.standard_normal((7, 6)), rng.standard_normal((4, 6))
    mu = 0.3
    thetas = [0.0, 0.3, 0.6, 1.0]
    Ms = []
    for t in thetas:
        BL = design_B_theta(A, L, mu, t) @ L
        Ms.append(A.T @ A - mu * BL.T @ BL)
    for M1, M2 in zip(Ms, Ms[1:]):
        assert np.linalg.eigvalsh(M1 - M2)[0] >= -1e-10


def test_multi_single_block_reduces(rng):
    A, L = rng.standard_normal((5, 4)), rng.standard_normal((3, 4))
    mu, mu1, th = 0.2, 0.7, 0.8
    got = to_dense(design_B_multi(A, [(L, mu1, th, 1.0)], mu))
    np.testing.assert_allclose(got, np.sqrt(mu1) * design_B_theta(np.sqrt(1 / mu) * A, L, mu1, th), atol=1e-12)


def test_multi_zero_theta(rng):
    A = rng.standard_normal((5, 4))
    Ls = [rng.standard_normal((2, 4)), rng.standard_normal((3, 4))]
    B = design_B_multi(A, [(Ls[0], 1.0, 0.0, 0.4), (Ls[1], 2.0, 0.0, 0.6)], 0.5)
    assert B.shape == (5, 5)
    np.testing.assert_array_equal(to_dense(B), 0)


def test_multi_rejects_bad_weights(rng):
    A, L = rng.standard_normal((3, 3)), np.eye(3)
    with pytest.raises(ValueError, match="sum to 1"):
        design_B_multi(A, [(L, 1, 0.5, 0.5), (L, 1, 0.5, 0.6)], 1.0)


def test_multi_certificate_sums_blocks(rng):
    A = rng.standard_normal((8, 6))
    Ls = [rng.standard_normal((3, 6)), rng.standard_normal((4, 6))]
    mu, omegas, mus = 0.4, (0.3, 0.7), (1.0, 2.5)
    B = design_B_multi(A, [(Ls[0], mus[0], 1.0, omegas[0]), (Ls[1], mus[1], 1.0, omegas[1])], mu)
    L = np.vstack(Ls)
    assert cert_lambda_min(A, L, to_dense(B), mu) >= -1e-9 * np.linalg.norm(A, 2) ** 2
    # each block certificate on its own share of the data term
    for k in range(2):
        Bk = design_B_theta(np.sqrt(omegas[k] / mu) * A, Ls[k], mus[k], 1.0)
        Ak = np.sqrt(omegas[k] / mu) * A
        assert cert_lambda_min(Ak, Ls[k], Bk, mus[k]) >= -1e-9 * np.linalg.norm(Ak, 2) ** 2


def test_multi_experiment_setup():
    N = 16
    A = to_dense(make_blur(N))
    D_V, D_H = make_difference_operators(N)
    mu = 0.03
    B = design_B_multi(A, [(D_H, 1.0, 0.99, 0.5), (D_V, 1.0, 0.99, 0.5)], mu)
    L = to_dense(stack(D_H, D_V))
    assert cert_lambda_min(A, L, to_dense(B), mu) >= -1e-9 * np.linalg.norm(A, 2) ** 2


def test_gme_zero_B_equals_penalty(rng):
    reg = GmeRegularizer(L1Norm(5), zero(5))
    for _ in range(20):
        z = rng.standard_normal(5)
        assert eval_gme_penalty(reg, z) == L1Norm(5).value(z)


def test_gme_scalar_mc_value():
    z = 2.0
    grid = np.arange(-3, 3 + 1e-9, 1e-4)
    oracle = abs(z) - np.min(np.abs(grid) + 0.5 * (z - grid) ** 2)
    assert oracle == pytest.approx(0.5, abs=1e-4)
    reg = GmeRegularizer(L1Norm(1), identity(1))
    assert eval_gme_penalty(reg, np.array([z])) == pytest.approx(oracle, abs=1e-4)


@pytest.mark.parametrize("z", [0.0, 0.3, -0.8, 1.0, 1.7, -5.0])
def test_gme_scalar_mc_shape(z):
    # |z| - z^2/2 inside [-1, 1], 1/2 outside
    expected = abs(z) - z * z / 2 if abs(z) <= 1 else 0.5
    reg = GmeRegularizer(L1Norm(1), identity(1))
    assert eval_gme_penalty(reg, np.array([z])) == pytest.approx(expected, abs=1e-6)


def test_gme_bounds(rng):
    A, L = rng.standard_normal((6, 5)), rng.standard_normal((3, 5))
    B = as_linear_map(design_B_theta(A, L, 0.5, 1.0))
    reg = GmeRegularizer(L1Norm(3), B)
    assert eval_gme_penalty(reg, np.zeros(3)) == 0
    for _ in range(20):
        z = 2 * rng.standard_normal(3)
        val = eval_gme_penalty(reg, z)
        assert -1e-12 <= val <= L1Norm(3).value(z) + 1e-12


def test_certificate_examples(rng):
    A = as_linear_map(rng.standard_normal((4, 6)))
    cert = check_overall_convexity(A, identity(6), zero(6), 1.0)
    assert cert.passed and cert.lambda_min >= -1e-12
    Ad = np.diag([2.0, 1.0])
    B = design_B_theta(Ad, np.eye(2), 1.0, 1.0)
    inflated = as_linear_map(np.sqrt(1.5) * B)
    bad = check_overall_convexity(as_linear_map(Ad), identity(2), inflated, 1.0)
    assert not bad.passed and bad.lambda_min < 0
    # A^T A - 1.5 A^T A = -0.5 diag(4, 1)
    assert bad.lambda_min == pytest.approx(-2.0, abs=1e-10)


def test_certificate_dense_cap():
    big = identity(1100)
    with pytest.raises(ValueError, match="cap"):
        check_overall_convexity(big, big, zero(1100), 1.0)


def test_certificate_block_operator(rng):
    A = rng.standard_normal((6, 6))
    L1, L2 = rng.standard_normal((2, 6)), rng.standard_normal((3, 6))
    B = design_B_multi(A, [(L1, 1.0, 1.0, 0.5), (L2, 1.0, 1.0, 0.5)], 0.1)
    L = stack(as_linear_map(L1), as_linear_map(L2))
    assert check_overall_convexity(as_linear_map(A), L, B, 0.1).passed
    assert isinstance(block_diag([identity(2)]).apply(np.ones(2)), np.ndarray)
