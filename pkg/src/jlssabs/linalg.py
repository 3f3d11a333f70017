"""Dense real linear algebra used by the synthesis and verification code.

Matrices are plain 2-D ``numpy`` float arrays.  Subspaces are represented by
matrices with orthonormal columns (possibly zero columns).  The heavy lifting
is delegated to LAPACK through ``numpy.linalg``; this module fixes the
tolerance conventions and the error types.
"""

import numpy as np

from .errors import DimensionMismatch, NonSquare, NotSymmetric, SingularOperator

TOL_RANK = 1e-9
TOL_SYM = 1e-9
TOL_EQ = 1e-7
TOL_ORTH = 1e-10


def as_matrix(m, rows=None, cols=None, name="matrix"):
    """Coerce ``m`` to a finite 2-D float array, optionally checking its shape."""
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # A flat list is read as a column vector.
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise DimensionMismatch(f"{name} must have {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionMismatch(f"{name} must have {cols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def rowmul(x, m):
    """``x @ m.T`` over leading batch axes, rounded identically for every batch size.

    BLAS picks different kernels (and summation orders) for one row and for
    many, so simulations route their products through this helper to stay
    reproducible however trials are batched.
    """
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    if m.shape[1] == 0:
        return np.zeros(x.shape[:-1] + (m.shape[0],))
    out = x[..., :1] * m[:, 0]
    for j in range(1, m.shape[1]):
        out = out + x[..., j:j + 1] * m[:, j]
    return out


def _check_square(m):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {m.shape}")
    return m


def sym_eigs(m, tol_sym=TOL_SYM):
    """Ascending eigenvalues of a symmetric matrix.

    The matrix is symmetrized before the solve; asymmetry beyond
    ``tol_sym * (1 + max|m|)`` raises :class:`NotSymmetric`.
    """
    m = _check_square(m)
    if m.size == 0:
        return np.zeros(0)
    scale = 1.0 + np.max(np.abs(m))
    if np.max(np.abs(m - m.T)) > tol_sym * scale:
        raise NotSymmetric("matrix is not symmetric")
    return np.linalg.eigvalsh(0.5 * (m + m.T))


def spectral_radius(m):
    """Largest eigenvalue modulus of a general square matrix."""
    m = _check_square(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _svd_rank(s, tol_rank):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s >= tol_rank * s[0]))


def image_basis(m, tol_rank=TOL_RANK):
    """Orthonormal basis of the column space of ``m``.

    Singular values below ``tol_rank * sigma_max`` count as zero.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[1] == 0 or m.shape[0] == 0:
        return np.zeros((m.shape[0], 0))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    return u[:, : _svd_rank(s, tol_rank)]


def kernel_basis(m, tol_rank=TOL_RANK):
    """Orthonormal basis of the null space of ``m``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(m, full_matrices=True)
    r = _svd_rank(s, tol_rank)
    return vt[r:].T.copy()


def subspace_contains(target, generators, tol=TOL_EQ, tol_rank=TOL_RANK):
    """Check ``im target`` is contained in ``im generators``.

    Returns
    -------
    ok : bool
        True iff every column of ``target`` is within ``tol`` of the span.
    residual : float
        Largest column distance to the span.
    """
    target = np.atleast_2d(np.asarray(target, dtype=float))
    generators = np.atleast_2d(np.asarray(generators, dtype=float))
    if target.shape[0] != generators.shape[0]:
        raise DimensionMismatch(
            f"row counts differ: {target.shape[0]} vs {generators.shape[0]}")
    if target.shape[1] == 0:
        return True, 0.0
    u = image_basis(generators, tol_rank)
    resid = target - u @ (u.T @ target)
    worst = float(np.max(np.linalg.norm(resid, axis=0)))
    return worst <= tol, worst


def lstsq_solve(a, b):
    """Least-squares solution of ``a @ x = b`` and its Frobenius residual."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b.reshape(-1, 1)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] == 0:
        x = np.zeros((0, b.shape[1]))
    else:
        x = np.linalg.lstsq(a, b, rcond=None)[0]
    return x, float(np.linalg.norm(a @ x - b))


def _diffusion_list(E, n):
    E = np.asarray(E, dtype=float)
    if E.ndim == 2:
        return [E]
    if E.ndim == 3:
        return list(E)
    raise DimensionMismatch(f"diffusion must be (n, n) or (w, n, n), got {E.shape}")


def lyap_operator(Abar, E, jumps, kappa_hat):
    """The linear map ``M -> Abar'M + M Abar + sum E'ME + sum lam R'MR + kappa M``.

    Returned as an ``n^2 x n^2`` matrix acting on column-major ``vec(M)``.
    """
    Abar = _check_square(Abar)
    n = Abar.shape[0]
    eye = np.eye(n)
    op = np.kron(eye, Abar.T) + np.kron(Abar.T, eye) + kappa_hat * np.eye(n * n)
    for Ek in _diffusion_list(E, n):
        op += np.kron(Ek.T, Ek.T)
    for rate, R in jumps:
        R = np.asarray(R, dtype=float)
        op += rate * np.kron(R.T, R.T)
    return op


def apply_lyap(Abar, E, jumps, kappa_hat, M):
    """Evaluate the generalized Lyapunov form directly (no vectorization)."""
    out = Abar.T @ M + M @ Abar + kappa_hat * M
    for Ek in _diffusion_list(E, M.shape[0]):
        out += Ek.T @ M @ Ek
    for rate, R in jumps:
        out += rate * R.T @ M @ R
    return out


def kron_lyap_solve(Abar, E, jumps, kappa_hat, W, cond_max=1e12):
    """Solve ``Abar'M + M Abar + E'ME + sum lam R'MR + kappa M = -W`` for M.

    The equation is vectorized with Kronecker products and solved densely,
    which is fine for the n <= 32 systems this package targets.  No
    definiteness claim is made about the result.
    """
    Abar = _check_square(Abar)
    n = Abar.shape[0]
    W = as_matrix(W, n, n, "W")
    op = lyap_operator(Abar, E, jumps, kappa_hat)
    s = np.linalg.svd(op, compute_uv=False)
    if s[-1] <= s[0] / cond_max or s[0] == 0.0:
        ratio = s[-1] / s[0] if s[0] else 0.0
        raise SingularOperator(f"Lyapunov operator is singular (sigma_min/sigma_max = {ratio:.3e})")
    vec_m = np.linalg.solve(op, -W.reshape(-1, order="F"))
    M = vec_m.reshape(n, n, order="F")
    M = 0.5 * (M + M.T)
    resid = np.linalg.norm(apply_lyap(Abar, E, jumps, kappa_hat, M) + W)
    if resid > 1e-8 * np.linalg.norm(W):
        raise SingularOperator(f"Lyapunov solve residual too large ({resid:.3e})")
    return M
