import numpy as np
import pytest

from jlssabs import case_study as cs
from jlssabs import ssf
from jlssabs.errors import Infeasible, SingularGram
from jlssabs.model import JlssSystem


@pytest.mark.parametrize("make,kappa", [(cs.double_integrator, 3.0), (cs.triple_integrator, 2.5)])
@pytest.mark.parametrize("method", ["lmi", "fallback"])
def test_synthesis_satisfies_design_inequalities(make, kappa, method):
    sys = make(0.5)
    M, K, info = ssf.synthesize_mk(sys, kappa, method=method)
    m = ssf.check_design_inequalities(sys, M, K, kappa)
    assert m["con1_margin"] >= -1e-9 and m["con11_margin"] >= 0
    assert info["path"] == method


def test_triple_integrator_decay_limit():
    # the closed loop cannot be changed (no inputs); its mean-square decay
    # rate is bounded by 2.958, so 3 must be rejected
    with pytest.raises(Infeasible):
        ssf.synthesize_mk(cs.triple_integrator(0.5), 3.0)


def test_scale_for_con1_exact():
    M = ssf.scale_for_con1(np.eye(2), [[2.0, 0.0]])
    np.testing.assert_allclose(M, 4 * np.eye(2))
    np.testing.assert_allclose(ssf.scale_for_con1(5 * np.eye(2), [[1.0, 0.0]]), 5 * np.eye(2))


def test_pi_range_enforced():
    z = np.zeros((1, 1))
    with pytest.raises(ValueError):
        ssf.QuadraticSsf(M=np.eye(1), K=z, P=np.eye(1), Q=z, S=z, R_tilde=z, kappa_hat=1.0, pi=1.0)


def test_r_tilde_projection_and_singular_gram():
    M = np.diag([1.0, 2.0])
    B = np.array([[0.0], [1.0]])
    P = np.eye(2)
    # Bh = B gives the exact inverse
    np.testing.assert_allclose(ssf.compute_r_tilde(M, B, P, B), [[1.0]])
    with pytest.raises(SingularGram):
        ssf.compute_r_tilde(M, np.zeros((2, 1)), P, B)
    assert ssf.compute_r_tilde(M, np.zeros((2, 0)), P, B).shape == (0, 1)


def _random_pair(rng, n, nh, m, p, nw, nj):
    mk = lambda *s: rng.normal(size=s)
    sys = JlssSystem(A=mk(n, n), B=mk(n, m), C=mk(1, n), D=mk(n, p), E=0.3 * mk(nw, n, n),
                     jumps=tuple((float(rng.uniform(0.5, 2)), 0.3 * mk(n, n)) for _ in range(nj)))
    abs_sys = JlssSystem(A=mk(nh, nh), B=mk(nh, m), C=mk(1, nh), D=mk(nh, p),
                         E=0.3 * mk(nw, nh, nh),
                         jumps=tuple((r, 0.3 * mk(nh, nh)) for r in sys.rates))
    L = mk(n, n)
    cert = ssf.QuadraticSsf(M=L @ L.T + np.eye(n), K=mk(m, n), P=mk(n, nh), Q=mk(m, nh),
                            S=mk(m, p), R_tilde=mk(m, m), kappa_hat=2.0, pi=1.0)
    return sys, abs_sys, cert


def test_generator_equals_time_derivative_without_noise(rng):
    sys, abs_sys, cert = _random_pair(rng, 3, 2, 1, 1, 1, 0)
    sys = sys.replace(E=np.zeros((3, 3)))
    abs_sys = abs_sys.replace(E=np.zeros((2, 2)))
    x, xh, u, uh, w, wh = (rng.normal(size=k) for k in (3, 2, 1, 1, 1, 1))
    LV = ssf.generator_quadratic(cert, sys, abs_sys, x, xh, u, uh, w, wh)
    f = sys.A @ x + sys.B @ u + sys.D @ w
    fh = abs_sys.A @ xh + abs_sys.B @ uh + abs_sys.D @ wh
    h = 1e-6
    fd = (cert.V(x + h * f, xh + h * fh) - cert.V(x - h * f, xh - h * fh)) / (2 * h)
    assert LV == pytest.approx(fd, rel=1e-6)


def test_generator_jump_term_scalar():
    # V = e^2, pure jumps: LV = lam ((1 + r)^2 x - (1 + rh)^2 ...) computed by hand
    sys = JlssSystem(A=[[0.0]], B=np.zeros((1, 0)), C=[[1.0]], D=np.zeros((1, 0)), E=0.0,
                     jumps=((2.0, [[0.5]]),))
    abs_sys = JlssSystem(A=[[0.0]], B=np.zeros((1, 0)), C=[[1.0]], D=np.zeros((1, 0)), E=0.0,
                         jumps=((2.0, [[-0.5]]),))
    z = np.zeros((0, 1))
    cert = ssf.QuadraticSsf(M=np.eye(1), K=np.zeros((0, 1)), P=np.eye(1), Q=z, S=np.zeros((0, 0)),
                            R_tilde=np.zeros((0, 0)), kappa_hat=1.0, pi=0.5)
    x, xh = np.array([1.0]), np.array([2.0])
    LV = ssf.generator_quadratic(cert, sys, abs_sys, x, xh, np.zeros(0), np.zeros(0),
                                 np.zeros(0), np.zeros(0))
    assert LV == pytest.approx(2.0 * ((1.5 - 1.0) ** 2 - 1.0))


def test_generator_is_batched(rng):
    sys, abs_sys, cert = _random_pair(rng, 3, 2, 2, 1, 2, 1)
    xs = [rng.normal(size=(5, k)) for k in (3, 2, 2, 2, 1, 1)]
    batch = ssf.generator_quadratic(cert, sys, abs_sys, *xs)
    single = [ssf.generator_quadratic(cert, sys, abs_sys, *(a[i] for a in xs)) for i in range(5)]
    np.testing.assert_allclose(batch, single, rtol=1e-12)


def test_gains_structure(benchmark):
    net, abstractions = benchmark
    for sid, res in abstractions.items():
        g = res.gains
        assert g.a == 1.0
        assert g.h == pytest.approx(res.ssf.kappa_hat - res.ssf.pi)
        # with Bh = I and B = e2 the interface cannot cancel the first
        # coordinate, so r_e >= 2 * (Schur complement of M) / pi >= 2 / pi
    g1 = abstractions["1"].gains
    assert g1.r_e >= 2.0 / abstractions["1"].ssf.pi - 1e-9


def test_verification_report(benchmark):
    net, abstractions = benchmark
    for sid, res in abstractions.items():
        rep = ssf.verify_ssf(res.ssf, net[sid].sys, res.abs_sys, res.gains, trials=5000, seed=3)
        assert rep["ok"], rep
        assert rep["worst_slack"] >= -1e-7 and rep["worst_sandwich"] >= -1e-7


def test_verification_detects_inflated_decay(benchmark):
    net, abstractions = benchmark
    res = abstractions["1"]
    bad = ssf.LinearGains(a=1.0, h=res.gains.h * 50, r_e=res.gains.r_e, r_i=res.gains.r_i)
    rep = ssf.verify_ssf(res.ssf, net["1"].sys, res.abs_sys, bad, trials=2000)
    assert not rep["ok"]
