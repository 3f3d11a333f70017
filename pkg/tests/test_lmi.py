import numpy as np
import pytest

from jlssabs.lmi import AffineBlock, maximize_margin


def test_scalar_margin_is_balanced():
    # max t with diag(z, 1 - z) >= t I: optimum t = 1/2 at z = 1/2
    F0 = np.diag([0.0, 1.0])
    coeffs = np.array([np.diag([1.0, -1.0])])
    z, t, _ = maximize_margin([AffineBlock(F0, coeffs)], np.array([0.2]))
    assert t == pytest.approx(0.5, abs=1e-5)
    assert z[0] == pytest.approx(0.5, abs=1e-4)


def test_lyapunov_lmi_margin_is_positive():
    # find X with A X + X A' < 0 and 0 < X < I for a Hurwitz A
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    basis = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 1.0], [1.0, 0]]),
             np.array([[0, 0], [0, 1.0]])]
    lyap = AffineBlock(np.zeros((2, 2)), [-(A @ S + S @ A.T) for S in basis])
    box = AffineBlock(np.eye(2), [-S for S in basis], strict=False)
    pos = AffineBlock(np.zeros((2, 2)), basis, strict=False)
    z0 = np.array([0.5, 0.0, 0.5])
    z, t, _ = maximize_margin([lyap, box, pos], z0)
    X = sum(zk * S for zk, S in zip(z, basis))
    assert t > 0
    assert np.linalg.eigvalsh(-(A @ X + X @ A.T)).min() >= t - 1e-9
    assert 0 < np.linalg.eigvalsh(X).min() and np.linalg.eigvalsh(X).max() < 1


def test_infeasible_problem_reports_negative_margin():
    # A unstable: no X > 0 makes A X + X A' negative definite
    A = np.array([[1.0]])
    lyap = AffineBlock(np.zeros((1, 1)), [-(2 * A)])
    box = AffineBlock(np.eye(1), [-np.eye(1)], strict=False)
    pos = AffineBlock(np.zeros((1, 1)), [np.eye(1)], strict=False)
    _, t, _ = maximize_margin([lyap, box, pos], np.array([0.5]), max_iter=500)
    assert t < 0


def test_start_must_satisfy_nonstrict_blocks():
    pos = AffineBlock(np.zeros((1, 1)), [np.eye(1)], strict=False)
    strict = AffineBlock(np.eye(1), [np.eye(1)])
    with pytest.raises(ValueError):
        maximize_margin([strict, pos], np.array([-1.0]))
