"""Quadratic stochastic simulation functions between two jump linear systems.

The certificate is ``V(x, xh) = (x - P xh)' M (x - P xh)`` together with the
interface ``u = K (x - P xh) + Q xh + Rt uh + S wh`` that drives the concrete
system from the abstract one.  This module designs ``(M, K)``, evaluates the
generator of ``V`` along the coupled pair, extracts the linear gains and
checks the dissipation inequality.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.signal

from . import lmi
from .errors import (CertificateInvalid, DimensionMismatch, Infeasible, NotConverged,
                     NotPD, SingularGram, SingularOperator)
from .linalg import TOL_EQ, apply_lyap, kron_lyap_solve, rowmul, sym_eigs

log = logging.getLogger(__name__)

NORM_CONVENTION = "lambda_max(X' M X)"


@dataclass(frozen=True, eq=False)
class QuadraticSsf:
    M: np.ndarray
    K: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    R_tilde: np.ndarray
    kappa_hat: float
    pi: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.pi < self.kappa_hat:
            raise ValueError(f"pi must lie in (0, kappa_hat), got pi={self.pi}, "
                             f"kappa_hat={self.kappa_hat}")

    def V(self, x, xh):
        e = np.asarray(x, dtype=float) - rowmul(xh, self.P)
        return np.sum(rowmul(e, self.M) * e, axis=-1)


@dataclass(frozen=True)
class LinearGains:
    """Slopes of the linear class-K functions of an SSF.

    ``a``: V >= a |h(x) - hh(xh)|^2, ``h``: decay rate, ``r_e`` and ``r_i``:
    external and internal input gains.
    """

    a: float
    h: float
    r_e: float
    r_i: float
    convention: str = NORM_CONVENTION

    def __post_init__(self):
        if not (self.a > 0 and self.h > 0 and self.r_e >= 0 and self.r_i >= 0):
            raise ValueError(f"invalid gain slopes {self}")


def design_matrix(sys, M, K, kappa_hat):
    """Left-hand side of the mean-square decay inequality (must be <= 0)."""
    Abar = sys.A + sys.B @ K + sum((r * R for r, R in sys.jumps), np.zeros_like(sys.A))
    return apply_lyap(Abar, sys.E, sys.jumps, kappa_hat, M)


def check_design_inequalities(sys, M, K, kappa_hat):
    """Margins of ``C'C <= M`` and of the mean-square decay inequality.

    Both margins are smallest eigenvalues; nonnegative means satisfied.
    """
    M = np.asarray(M, dtype=float)
    K = np.asarray(K, dtype=float).reshape(sys.m, sys.n)
    if M.shape != (sys.n, sys.n):
        raise DimensionMismatch(f"M must be {sys.n}x{sys.n}, got {M.shape}")
    con1 = sym_eigs(M - sys.C.T @ sys.C, tol_sym=1e-8)[0]
    con11 = -sym_eigs(design_matrix(sys, M, K, kappa_hat), tol_sym=1e-8)[-1]
    return {"con1_margin": float(con1), "con11_margin": float(con11)}


def scale_for_con1(M, C):
    """Smallest scaling ``c >= 1`` of M such that ``c M - C'C`` is PSD."""
    M = np.asarray(M, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    evals = np.linalg.eigvalsh(0.5 * (M + M.T))
    if evals[0] <= 0:
        raise NotPD("M is not positive definite")
    if C.size == 0:
        return M.copy()
    gen = scipy.linalg.eigh(C.T @ C, 0.5 * (M + M.T), eigvals_only=True)
    c = max(1.0, float(gen[-1]))
    return c * M


def _sym_basis(n):
    basis = []
    for i in range(n):
        for j in range(i, n):
            S = np.zeros((n, n))
            S[i, j] = S[j, i] = 1.0
            basis.append(S)
    return basis


def _lmi_blocks(sys, kappa_hat, bound=1e2, kbound=1e3):
    """Affine blocks of the design LMIs in ``Mb = M^-1`` and ``Kb = K Mb``."""
    n, m, q = sys.n, sys.m, sys.q
    C = sys.C
    Atil = sys.A + sum((r * R for r, R in sys.jumps), np.zeros_like(sys.A))
    mats = [sys.diffusions[k] for k in range(len(sys.diffusions))]
    mats += [np.sqrt(r) * R for r, R in reversed(sys.jumps)]
    nb = len(mats)
    S_basis = _sym_basis(n)
    K_basis = []
    for a in range(m):
        for b in range(n):
            Kb = np.zeros((m, n))
            Kb[a, b] = 1.0
            K_basis.append(Kb)
    nvar = len(S_basis) + len(K_basis)

    d1 = n + q
    F10 = np.zeros((d1, d1))
    F10[n:, n:] = np.eye(q)
    F1k = np.zeros((nvar, d1, d1))
    d2 = n * (nb + 1)
    F20 = np.zeros((d2, d2))
    F2k = np.zeros((nvar, d2, d2))
    last = slice(nb * n, (nb + 1) * n)
    for k, S in enumerate(S_basis):
        F1k[k, :n, :n] = S
        F1k[k, :n, n:] = S @ C.T
        F1k[k, n:, :n] = C @ S
        for i, X in enumerate(mats):
            blk = slice(i * n, (i + 1) * n)
            F2k[k, blk, blk] = S
            F2k[k, blk, last] = X @ S
            F2k[k, last, blk] = S @ X.T
        F2k[k, last, last] = -kappa_hat * S - S @ Atil.T - Atil @ S
    for k, Kb in enumerate(K_basis, start=len(S_basis)):
        F2k[k, last, last] = -Kb.T @ sys.B.T - sys.B @ Kb
    # The design LMIs are homogeneous in (Mb, Kb) up to the constant block of
    # F1, so the margin is unbounded without a normalization: box both.
    F30 = bound * np.eye(n)
    F3k = np.zeros((nvar, n, n))
    d4 = m + n
    F40 = kbound * np.eye(d4)
    F4k = np.zeros((nvar, d4, d4))
    for k, S in enumerate(S_basis):
        F3k[k] = -S
    for k, Kb in enumerate(K_basis, start=len(S_basis)):
        F4k[k, :m, m:] = Kb
        F4k[k, m:, :m] = Kb.T
    blocks = [lmi.AffineBlock(F10, F1k, strict=False), lmi.AffineBlock(F20, F2k, strict=True),
              lmi.AffineBlock(F30, F3k, strict=False)]
    if m:
        blocks.append(lmi.AffineBlock(F40, F4k, strict=False))
    return blocks, S_basis, K_basis


def _solve_lmi(sys, kappa_hat, max_iter):
    n, m = sys.n, sys.m
    blocks, S_basis, K_basis = _lmi_blocks(sys, kappa_hat)
    eps = 0.5 / (1.0 + np.linalg.norm(sys.C, 2) ** 2) if sys.q else 1.0
    z0 = np.zeros(len(S_basis) + len(K_basis))
    for k, S in enumerate(S_basis):
        if np.count_nonzero(S) == 1:
            z0[k] = eps
    z, t, iters = lmi.maximize_margin(blocks, z0, max_iter=max_iter)
    Mb = sum((zk * S for zk, S in zip(z, S_basis)), np.zeros((n, n)))
    Kb = sum((zk * Kk for zk, Kk in zip(z[len(S_basis):], K_basis)), np.zeros((m, n)))
    M = np.linalg.inv(Mb)
    M = 0.5 * (M + M.T)
    return M, Kb @ M, {"path": "lmi", "lmi_margin": float(t), "iterations": iters}


def _fallback_gain(sys, kappa_hat):
    if sys.m == 0:
        return np.zeros((0, sys.n))
    shift = kappa_hat / 2.0 + 1.0 + sum(sys.rates) * max(
        [np.linalg.norm(R, 2) for R in sys.resets] + [0.0])
    shift += sum(np.linalg.norm(Ek, 2) ** 2 for Ek in sys.diffusions)
    poles = -shift * (1.0 + 0.1 * np.arange(sys.n))
    try:
        res = scipy.signal.place_poles(sys.A, sys.B, poles)
    except ValueError:
        return np.zeros((sys.m, sys.n))
    return -res.gain_matrix


def _solve_fallback(sys, kappa_hat, K):
    K = _fallback_gain(sys, kappa_hat) if K is None else np.asarray(K, dtype=float).reshape(sys.m, sys.n)
    Abar = sys.A + sys.B @ K + sum((r * R for r, R in sys.jumps), np.zeros_like(sys.A))
    eps = 1e-3 * np.linalg.norm(sys.A)
    eps = eps if eps > 0 else 1e-3
    M = kron_lyap_solve(Abar, sys.E, sys.jumps, kappa_hat, eps * np.eye(sys.n))
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise NotPD("Lyapunov solution is not positive definite")
    return M, K, {"path": "fallback", "W_scale": eps}


def synthesize_mk(sys, kappa_hat, K=None, method="auto", max_iter=10_000):
    """Find ``(M, K)`` satisfying both design inequalities for ``kappa_hat``.

    ``method`` is ``"lmi"``, ``"fallback"`` (given or pole-placement ``K``
    followed by a Lyapunov solve) or ``"auto"`` (LMI, then fallback).  The
    result is always re-checked with :func:`check_design_inequalities`.

    Returns
    -------
    M, K : ndarray
    info : dict
        Solver path, margins and iteration counts.
    """
    if method not in ("auto", "lmi", "fallback"):
        raise ValueError(f"unknown method {method!r}")
    attempts = []
    if method in ("auto", "lmi") and K is None:
        attempts.append("lmi")
    if method in ("auto", "fallback"):
        attempts.append("fallback")
    failures = []
    for path in attempts:
        try:
            if path == "lmi":
                M, Kout, info = _solve_lmi(sys, kappa_hat, max_iter)
            else:
                M, Kout, info = _solve_fallback(sys, kappa_hat, K)
            M = scale_for_con1(M, sys.C)
        except (NotConverged, SingularOperator, NotPD, np.linalg.LinAlgError) as exc:
            failures.append(f"{path}: {exc}")
            continue
        margins = check_design_inequalities(sys, M, Kout, kappa_hat)
        info.update(margins)
        if margins["con1_margin"] >= -TOL_EQ * max(1.0, np.abs(M).max()) and margins["con11_margin"] >= 0:
            return M, Kout, info
        failures.append(f"{path}: margins {margins}")
    raise Infeasible("no (M, K) certifies kappa_hat=%g (%s)" % (kappa_hat, "; ".join(failures)))


def compute_r_tilde(M, B, P, Bh):
    """Input map of the interface minimizing the external gain."""
    M, B, P, Bh = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (M, B, P, Bh))
    m, mh = B.shape[1], Bh.shape[1]
    if m == 0 or mh == 0:
        return np.zeros((m, mh))
    gram = B.T @ M @ B
    s = np.linalg.svd(gram, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], 1e-300):
        raise SingularGram("B'MB is singular")
    return np.linalg.solve(gram, B.T @ M @ P @ Bh)


def interface_u(ssf, x, xh, uh, wh):
    """Concrete input ``K (x - P xh) + Q xh + Rt uh + S wh`` (batched on leading axes)."""
    x, xh, uh, wh = (np.asarray(a, dtype=float) for a in (x, xh, uh, wh))
    e = x - rowmul(xh, ssf.P)
    return rowmul(e, ssf.K) + rowmul(xh, ssf.Q) + rowmul(uh, ssf.R_tilde) + rowmul(wh, ssf.S)


def _check_pair(sys, abs_sys):
    if sys.rates != abs_sys.rates:
        raise DimensionMismatch("concrete and abstract systems must share jump rate lists")
    if len(sys.diffusions) != len(abs_sys.diffusions):
        raise DimensionMismatch("concrete and abstract systems must share Brownian drivers")


def generator_quadratic(ssf, sys, abs_sys, x, xh, u, uh, w, wh):
    """Infinitesimal generator of V along the coupled pair, evaluated exactly.

    Brownian drivers and Poisson events are shared between the two systems.
    Arguments may carry leading batch axes.
    """
    _check_pair(sys, abs_sys)
    x, xh, u, uh, w, wh = (np.asarray(a, dtype=float) for a in (x, xh, u, uh, w, wh))
    if x.shape[-1] != sys.n or xh.shape[-1] != abs_sys.n:
        raise DimensionMismatch("state dimensions do not match the systems")
    M, P = ssf.M, ssf.P
    e = x - xh @ P.T
    f = x @ sys.A.T + u @ sys.B.T + w @ sys.D.T
    fh = xh @ abs_sys.A.T + uh @ abs_sys.B.T + wh @ abs_sys.D.T
    g = f - fh @ P.T
    out = 2.0 * np.einsum("...i,ij,...j->...", e, M, g)
    for Ek, Ehk in zip(sys.diffusions, abs_sys.diffusions):
        sig = x @ Ek.T - xh @ (P @ Ehk).T
        out = out + np.einsum("...i,ij,...j->...", sig, M, sig)
    V0 = np.einsum("...i,ij,...j->...", e, M, e)
    for (rate, R), (_, Rh) in zip(sys.jumps, abs_sys.jumps):
        ej = (x + x @ R.T) - (xh + xh @ Rh.T) @ P.T
        out = out + rate * (np.einsum("...i,ij,...j->...", ej, M, ej) - V0)
    return out


def _sqrt_m_norm_sq(M, X):
    if X.size == 0:
        return 0.0
    return float(max(0.0, sym_eigs(X.T @ M @ X, tol_sym=1e-8)[-1]))


def con2_residuals(sys, abs_sys, P, Q, S):
    """Frobenius residuals of the five matching equations."""
    res = {
        "con2a": np.linalg.norm(sys.A @ P - P @ abs_sys.A + sys.B @ Q),
        "con2b": np.linalg.norm(sys.D - P @ abs_sys.D + sys.B @ S),
        "con2c": np.linalg.norm(sys.C @ P - abs_sys.C),
        "con2g": max([np.linalg.norm(Ek @ P - P @ Ehk)
                      for Ek, Ehk in zip(sys.diffusions, abs_sys.diffusions)] + [0.0]),
        "con2h": max([np.linalg.norm(R @ P - P @ Rh)
                      for R, Rh in zip(sys.resets, abs_sys.resets)] + [0.0]),
    }
    return {k: float(v) for k, v in res.items()}


def algebraic_report(ssf, sys, abs_sys):
    _check_pair(sys, abs_sys)
    report = check_design_inequalities(sys, ssf.M, ssf.K, ssf.kappa_hat)
    report.update(con2_residuals(sys, abs_sys, ssf.P, ssf.Q, ssf.S))
    return report


def algebraic_ok(report, tol=TOL_EQ, scale=1.0):
    return (report["con1_margin"] >= -tol * scale and report["con11_margin"] >= -tol * scale
            and all(report[k] <= tol * scale for k in ("con2a", "con2b", "con2c", "con2g", "con2h")))


def extract_gains(ssf, sys, abs_sys, tol=TOL_EQ):
    """Linear gains ``a = 1``, ``h = kappa - pi`` and the two input gains."""
    report = algebraic_report(ssf, sys, abs_sys)
    scale = max(1.0, float(np.abs(ssf.M).max()))
    if not algebraic_ok(report, tol, scale):
        raise CertificateInvalid(f"certificate conditions fail: {report}")
    X = sys.B @ ssf.R_tilde - ssf.P @ abs_sys.B
    r_e = 2.0 * _sqrt_m_norm_sq(ssf.M, X) / ssf.pi
    r_i = 2.0 * _sqrt_m_norm_sq(ssf.M, sys.D) / ssf.pi
    return LinearGains(a=1.0, h=ssf.kappa_hat - ssf.pi, r_e=r_e, r_i=r_i)


def dissipation_slack(ssf, sys, abs_sys, gains, x, xh, uh, w, wh):
    """``-h V + r_e |uh|^2 + r_i |w - wh|^2 - LV`` with u from the interface."""
    u = interface_u(ssf, x, xh, uh, wh)
    LV = generator_quadratic(ssf, sys, abs_sys, x, xh, u, uh, w, wh)
    V = ssf.V(x, xh)
    rhs = -gains.h * V + gains.r_e * np.sum(uh * uh, axis=-1) \
        + gains.r_i * np.sum((w - wh) ** 2, axis=-1)
    return rhs - LV


def verify_ssf(ssf, sys, abs_sys, gains=None, trials=10_000, seed=0, box=10.0,
               tol=TOL_EQ, batch=20_000):
    """Algebraic and randomized check of the SSF inequalities.

    Samples ``(x, xh, uh, w, wh)`` uniformly from ``[-box, box]`` and records
    the worst slack of the dissipation inequality and of the output sandwich
    ``V >= |C x - Ch xh|^2``.  Failures are reported, not raised.
    """
    report = algebraic_report(ssf, sys, abs_sys)
    scale = max(1.0, float(np.abs(ssf.M).max()))
    report["algebraic_ok"] = bool(algebraic_ok(report, tol, scale))
    if gains is None:
        try:
            gains = extract_gains(ssf, sys, abs_sys, tol)
        except CertificateInvalid:
            report.update(ok=False, worst_slack=None, worst_sandwich=None, trials=0)
            return report
    rng = np.random.default_rng(seed)
    worst, worst_sw = np.inf, np.inf
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        x = rng.uniform(-box, box, (b, sys.n))
        xh = rng.uniform(-box, box, (b, abs_sys.n))
        uh = rng.uniform(-box, box, (b, abs_sys.m))
        w = rng.uniform(-box, box, (b, sys.p))
        wh = rng.uniform(-box, box, (b, sys.p))
        slack = dissipation_slack(ssf, sys, abs_sys, gains, x, xh, uh, w, wh)
        worst = min(worst, float(slack.min()))
        dy = x @ sys.C.T - xh @ abs_sys.C.T
        sw = ssf.V(x, xh) - gains.a * np.sum(dy * dy, axis=-1)
        worst_sw = min(worst_sw, float(sw.min()))
        done += b
    report.update(worst_slack=worst, worst_sandwich=worst_sw, trials=trials,
                  gains=gains, ok=bool(report["algebraic_ok"] and worst >= -tol and worst_sw >= -tol))
    return report
