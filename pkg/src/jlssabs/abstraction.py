"""Reduced-order abstractions of a single jump linear stochastic system.

Given a subsystem and an injective ``P`` whose image is (nearly) invariant
under the dynamics, the pipeline solves the matching equations

    A P = P Ah - B Q,   D = P Dh - B S,   Ch = C P,   E P = P Eh,   R_i P = P Rh_i

for the abstract matrices, picks ``Bh`` and packages the quadratic
certificate.  The nine construction steps are numbered as follows:

1. ``M`` and ``K``;  2. conditions on ``P``;  3. ``Ah``, ``Q``;  4. ``Dh``, ``S``;
5. ``Ch``;  6. ``Bh``;  7. ``Rt``;  8. ``Eh``;  9. ``Rh_i``.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ssf as _ssf
from .errors import (Con3deViolated, Con3Unsatisfiable, ConditionViolated, JlssError)
from .linalg import (TOL_EQ, TOL_RANK, as_matrix, image_basis, kernel_basis, lstsq_solve,
                     subspace_contains)
from .model import JlssSystem

log = logging.getLogger(__name__)

BHAT_MODES = ("identity", "behavior", "user")


@dataclass(frozen=True, eq=False)
class BehaviorPreservingData:
    """Left inverse ``P_hat`` of ``P`` and the complement pair ``(G, F)``."""

    P_hat: np.ndarray
    G: np.ndarray
    F: np.ndarray


@dataclass(frozen=True, eq=False)
class Con2Solution:
    A_hat: np.ndarray
    Q: np.ndarray
    D_hat: np.ndarray
    S: np.ndarray
    C_hat: np.ndarray
    E_hat: np.ndarray
    R_hat: tuple
    residuals: dict


@dataclass(frozen=True, eq=False)
class AbstractionResult:
    abs_sys: JlssSystem
    ssf: _ssf.QuadraticSsf
    gains: _ssf.LinearGains
    bp: Optional[BehaviorPreservingData] = None
    log: list = field(default_factory=list)
    verification: dict = field(default_factory=dict)


def _at_step(step, exc):
    """Annotate an upstream error with the construction step that raised it."""
    if getattr(exc, "step", None) is None:
        exc.step = step
        exc.args = (f"step {step}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
    return exc


def _scale(*mats):
    return 1.0 + max([float(np.abs(m).max()) for m in mats if np.size(m)] + [0.0])


def check_p_conditions(sys, P, tol=TOL_EQ, tol_rank=TOL_RANK):
    """Report the subspace conditions that make ``P`` usable.

    Returns a dict mapping condition names to ``(ok, residual)`` plus the
    keys ``injective``, ``behavior`` (the extra ``im P + ker C`` condition)
    and ``ok`` (all conditions except ``behavior``).  Nothing is raised.
    """
    P = as_matrix(P, sys.n, None, "P")
    rep = {}
    sv = np.linalg.svd(P, compute_uv=False)
    rep["injective"] = bool(sv.size and sv[-1] > tol_rank * sv[0])
    PB = np.hstack([P, sys.B])
    scale = _scale(sys.A, P)
    rep["AP_in_P_B"] = subspace_contains(sys.A @ P, PB, tol * scale, tol_rank)
    rep["D_in_P_B"] = subspace_contains(sys.D, PB, tol * _scale(sys.D, P), tol_rank)
    rep["EP_in_P"] = tuple(
        subspace_contains(Ek @ P, P, tol * _scale(Ek, P), tol_rank) for Ek in sys.diffusions)
    rep["RP_in_P"] = tuple(
        subspace_contains(R @ P, P, tol * _scale(R, P), tol_rank) for R in sys.resets)
    span = np.hstack([image_basis(P, tol_rank), kernel_basis(sys.C, tol_rank)])
    rank = image_basis(span, tol_rank).shape[1] if span.size else 0
    rep["imP_plus_kerC"] = (rank == sys.n, float(sys.n - rank))
    flat = [rep["AP_in_P_B"], rep["D_in_P_B"], *rep["EP_in_P"], *rep["RP_in_P"]]
    rep["ok"] = bool(rep["injective"] and all(ok for ok, _ in flat))
    rep["behavior"] = bool(rep["ok"] and rep["imP_plus_kerC"][0])
    return rep


def _failed_conditions(rep):
    bad = [] if rep["injective"] else ["P is not injective"]
    for name in ("AP_in_P_B", "D_in_P_B"):
        if not rep[name][0]:
            bad.append(f"{name} (residual {rep[name][1]:.3e})")
    for name in ("EP_in_P", "RP_in_P"):
        for i, (ok, res) in enumerate(rep[name]):
            if not ok:
                bad.append(f"{name}[{i}] (residual {res:.3e})")
    return bad


def _min_norm_pair(P, B, Y):
    """Solve ``Y = P X - B Z`` with the minimum-norm ``Z``.

    ``Z`` must cancel the part of ``Y`` outside ``im P``; whatever freedom
    remains (``im P`` and ``im B`` may intersect) is spent on keeping ``Z``
    small, so that ``P = I`` gives ``X = Y`` and ``Z = 0``.
    """
    U = image_basis(P)
    Pi = np.eye(P.shape[0]) - U @ U.T
    Z = -lstsq_solve(Pi @ B, Pi @ Y)[0] if B.shape[1] else np.zeros((0, Y.shape[1]))
    X = lstsq_solve(P, Y + B @ Z)[0]
    return X, Z, float(np.linalg.norm(P @ X - B @ Z - Y))


def solve_con2(sys, P, tol=TOL_EQ):
    """Solve the matching equations column by column in the least-squares sense.

    When ``(Ah, Q)`` or ``(Dh, S)`` is not unique the solution with the
    smallest ``Q`` (resp. ``S``) is returned.

    Raises
    ------
    ConditionViolated
        When a residual exceeds ``tol`` (scaled by the data magnitude); the
        exception carries the step number of the failing equation.
    """
    P = as_matrix(P, sys.n, None, "P")
    nh = P.shape[1]
    res = {}
    A_hat, Q, res["con2a"] = _min_norm_pair(P, sys.B, sys.A @ P)
    D_hat, S, res["con2b"] = _min_norm_pair(P, sys.B, sys.D)
    C_hat = sys.C @ P
    res["con2c"] = 0.0
    E_hat, eres = [], []
    for Ek in sys.diffusions:
        X, r = lstsq_solve(P, Ek @ P)
        E_hat.append(X)
        eres.append(r)
    res["con2g"] = max(eres + [0.0])
    R_hat, rres = [], []
    for R in sys.resets:
        X, r = lstsq_solve(P, R @ P)
        R_hat.append(X)
        rres.append(r)
    res["con2h"] = max(rres + [0.0])
    steps = {"con2a": 3, "con2b": 4, "con2g": 8, "con2h": 9}
    for key, step in steps.items():
        if res[key] > tol * _scale(sys.A, sys.D, P):
            raise ConditionViolated(f"{key} residual {res[key]:.3e} exceeds tolerance", step=step)
    return Con2Solution(A_hat=A_hat, Q=Q, D_hat=D_hat, S=S, C_hat=C_hat,
                        E_hat=np.array(E_hat).reshape(len(E_hat), nh, nh),
                        R_hat=tuple(R_hat), residuals=res)


def zero_redundant_dhat(sys, D_hat, S, P, tol=TOL_EQ):
    """Zero the columns of ``Dh`` whose concrete counterpart lies in ``im B``.

    Such internal inputs can be cancelled entirely by the interface, so the
    abstract subsystem does not need to see them.
    """
    D_hat = np.array(D_hat, dtype=float, copy=True)
    S = np.array(S, dtype=float, copy=True)
    if sys.m == 0:
        return D_hat, S
    for j in range(sys.p):
        d = sys.D[:, j:j + 1]
        s, r = lstsq_solve(sys.B, d)
        if r <= tol * _scale(d, sys.B):
            D_hat[:, j] = 0.0
            S[:, j] = -s[:, 0]
    return D_hat, S


def _complement_in_kernel(P, C, tol_rank=TOL_RANK):
    """Columns completing ``im P`` to the whole space, taken from ``ker C``
    first and then from the standard basis, in column order."""
    n, nh = P.shape
    Z = kernel_basis(C, tol_rank)
    candidates = []
    if Z.shape[1]:
        proj = Z @ Z.T
        for j in range(n):
            v = proj[:, j]
            if np.linalg.norm(v) > 1e-8:
                candidates.append(v / np.abs(v).max())
    candidates += list(np.eye(n))
    cols = []
    current = P
    for v in candidates:
        if current.shape[1] == n:
            break
        trial = np.column_stack([current, v])
        if np.linalg.matrix_rank(trial, tol=tol_rank * np.linalg.norm(trial, 2)) == trial.shape[1]:
            cols.append(v)
            current = trial
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def con3_residuals(sys, C_hat, P, bp):
    n = sys.n
    GF = bp.G @ bp.F
    res = {
        "con3a": float(np.linalg.norm(sys.C - C_hat @ bp.P_hat)),
        "con3b": float(np.linalg.norm(np.eye(n) - P @ bp.P_hat - GF)),
        "con3c": float(np.linalg.norm(np.eye(P.shape[1]) - bp.P_hat @ P)),
        "con3d": max([float(np.linalg.norm(bp.P_hat @ Ek @ GF)) for Ek in sys.diffusions] + [0.0]),
        "con3e": max([float(np.linalg.norm(bp.P_hat @ R @ GF)) for R in sys.resets] + [0.0]),
    }
    return res


def choose_bhat(sys, P, mode="identity", B_hat=None, C_hat=None, tol=TOL_EQ):
    """Pick the abstract input matrix.

    ``identity`` gives ``I``; ``behavior`` builds ``(P_hat, G, F)`` and sets
    ``Bh = [P_hat B, P_hat A G]`` so that every concrete output trajectory is
    matched by an abstract one; ``user`` takes ``B_hat`` as given.

    Returns
    -------
    B_hat : ndarray
    bp : BehaviorPreservingData or None
    """
    P = as_matrix(P, sys.n, None, "P")
    nh = P.shape[1]
    if mode == "identity":
        return np.eye(nh), None
    if mode == "user":
        return as_matrix(B_hat, nh, None, "B_hat"), None
    if mode != "behavior":
        raise ValueError(f"unknown B_hat mode {mode!r}")
    C_hat = sys.C @ P if C_hat is None else C_hat
    G = _complement_in_kernel(P, sys.C)
    T = np.hstack([P, G])
    if T.shape[1] != sys.n or np.linalg.matrix_rank(T) < sys.n:
        raise Con3Unsatisfiable("no complement of im P found", step=6)
    Tinv = np.linalg.inv(T)
    bp = BehaviorPreservingData(P_hat=Tinv[:nh], G=G, F=Tinv[nh:])
    res = con3_residuals(sys, C_hat, P, bp)
    scale = _scale(sys.C, P, Tinv)
    bad = [k for k in ("con3a", "con3b", "con3c") if res[k] > tol * scale]
    if bad:
        raise Con3Unsatisfiable(
            "im P + ker C does not span the state space; failing " + ", ".join(bad), step=6)
    bad = [k for k in ("con3d", "con3e") if res[k] > tol * _scale(sys.A, Tinv)]
    if bad:
        raise Con3deViolated(f"noise/reset leak into the complement: {bad} {res}", step=6)
    B_hat = np.hstack([bp.P_hat @ sys.B, bp.P_hat @ sys.A @ G])
    return B_hat, bp


def eigen_projections(A, n_hat, tol=1e-9):
    """Candidate ``P`` matrices spanned by ``n_hat`` real eigenvectors of ``A``.

    Each column is scaled so that its first nonzero entry is one; candidates
    are listed in order of ascending eigenvalues.
    """
    A = as_matrix(A)
    w, V = np.linalg.eig(A)
    real = [i for i in np.argsort(w.real) if abs(w[i].imag) <= tol]
    cols = []
    for i in real:
        v = V[:, i].real
        lead = v[np.flatnonzero(np.abs(v) > tol)[0]]
        cols.append(v / lead)
    return [np.column_stack([cols[i] for i in combo])
            for combo in itertools.combinations(range(len(cols)), n_hat)]


def build_abstraction(sys, P, kappa_hat, pi=None, bhat_mode="identity", B_hat=None,
                      M=None, K=None, method="auto", zero_dhat=True, tol=TOL_EQ,
                      verify_trials=10_000, seed=0):
    """Run the full construction and return a verified :class:`AbstractionResult`.

    Parameters
    ----------
    sys : JlssSystem
    P : array_like
        Injective ``n x n_hat`` matrix.
    kappa_hat, pi : float
        Decay parameters of the certificate; ``pi`` defaults to ``kappa_hat / 2``.
    bhat_mode : {"identity", "behavior", "user"}
    M, K : array_like, optional
        Skip step 1 and use these instead (they are still checked).

    Raises
    ------
    JlssError
        Any failure, annotated with the step number.
    """
    pi = kappa_hat / 2.0 if pi is None else float(pi)
    steps = []
    P = as_matrix(P, sys.n, None, "P")
    try:
        if M is None:
            M, K, info = _ssf.synthesize_mk(sys, kappa_hat, K=K, method=method)
        else:
            M = as_matrix(M, sys.n, sys.n, "M")
            K = np.zeros((sys.m, sys.n)) if K is None else as_matrix(K, sys.m, sys.n, "K")
            info = dict(path="user", **_ssf.check_design_inequalities(sys, M, K, kappa_hat))
            if info["con11_margin"] < -tol * _scale(M) or info["con1_margin"] < -tol * _scale(M):
                raise ConditionViolated(f"supplied (M, K) violate the design inequalities {info}")
    except JlssError as exc:
        raise _at_step(1, exc)
    steps.append({"step": 1, "name": "M, K", **info})

    rep = check_p_conditions(sys, P, tol)
    steps.append({"step": 2, "name": "P conditions", "ok": rep["ok"], "behavior": rep["behavior"]})
    if not rep["ok"]:
        raise ConditionViolated("P fails: " + "; ".join(_failed_conditions(rep)), step=2)
    if bhat_mode == "behavior" and not rep["behavior"]:
        raise Con3Unsatisfiable("im P + ker C does not span the state space", step=2)

    sol = solve_con2(sys, P, tol)
    steps.append({"step": 3, "name": "A_hat, Q", "residual": sol.residuals["con2a"]})
    D_hat, S = sol.D_hat, sol.S
    if zero_dhat:
        D_hat, S = zero_redundant_dhat(sys, D_hat, S, P, tol)
    resid_b = float(np.linalg.norm(sys.D - P @ D_hat + sys.B @ S))
    steps.append({"step": 4, "name": "D_hat, S", "residual": resid_b})
    steps.append({"step": 5, "name": "C_hat", "residual": 0.0})

    B_hat_out, bp = choose_bhat(sys, P, bhat_mode, B_hat, sol.C_hat, tol)
    steps.append({"step": 6, "name": "B_hat", "mode": bhat_mode})

    try:
        R_tilde = _ssf.compute_r_tilde(M, sys.B, P, B_hat_out)
    except JlssError as exc:
        raise _at_step(7, exc)
    steps.append({"step": 7, "name": "R_tilde"})
    steps.append({"step": 8, "name": "E_hat", "residual": sol.residuals["con2g"]})
    steps.append({"step": 9, "name": "R_hat", "residual": sol.residuals["con2h"]})

    E_hat = sol.E_hat if sol.E_hat.shape[0] != 1 else sol.E_hat[0]
    abs_sys = JlssSystem(A=sol.A_hat, B=B_hat_out, C=sol.C_hat, D=D_hat, E=E_hat,
                         jumps=tuple(zip(sys.rates, sol.R_hat)))
    cert = _ssf.QuadraticSsf(M=M, K=K, P=P, Q=sol.Q, S=S, R_tilde=R_tilde,
                             kappa_hat=float(kappa_hat), pi=pi, provenance=dict(info))
    try:
        gains = _ssf.extract_gains(cert, sys, abs_sys, tol)
    except JlssError as exc:
        raise _at_step(7, exc)
    report = _ssf.verify_ssf(cert, sys, abs_sys, gains, trials=verify_trials, seed=seed, tol=tol)
    if not report["ok"]:
        raise ConditionViolated(f"certificate failed verification: {report}", step=7)
    return AbstractionResult(abs_sys=abs_sys, ssf=cert, gains=gains, bp=bp, log=steps,
                             verification=report)
