"""Small dense LMI feasibility solver (log-det barrier, damped Newton).

Solves problems of the form::

    maximize t  subject to  F_j(z) - t * I  >= 0   for every block j

where each ``F_j(z) = F_j0 + sum_k z_k F_jk`` is affine and symmetric.  The
solver is meant for desk-scale problems (a few hundred scalar variables);
its output is never trusted on its own and callers re-check the original
inequalities.
"""

import logging

import numpy as np

from .errors import NotConverged

log = logging.getLogger(__name__)


class AffineBlock:
    """An affine symmetric matrix function ``F0 + sum_k z_k Fk``.

    ``coeffs`` has shape ``(nvar, d, d)``.  When ``strict`` is False the
    block is only kept positive definite by the barrier and does not take
    part in the margin ``t``.
    """

    def __init__(self, F0, coeffs, strict=True):
        self.F0 = np.asarray(F0, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.strict = strict

    @property
    def dim(self):
        return self.F0.shape[0]

    def value(self, z, t=0.0):
        G = self.F0 + np.tensordot(z, self.coeffs, axes=1)
        if self.strict:
            G = G - t * np.eye(self.dim)
        return 0.5 * (G + G.T)


def _chol_ok(G):
    try:
        np.linalg.cholesky(G)
        return True
    except np.linalg.LinAlgError:
        return False


def _barrier(blocks, z, t, tau, reg):
    val = -tau * t + 0.5 * reg * float(z @ z)
    for b in blocks:
        # A positive determinant is not enough (pairs of negative eigenvalues).
        try:
            L = np.linalg.cholesky(b.value(z, t))
        except np.linalg.LinAlgError:
            return np.inf
        val -= 2.0 * np.sum(np.log(np.diag(L)))
    return val


def _grad_hess(blocks, z, t, tau, reg):
    nz = z.size
    g = np.zeros(nz + 1)
    H = np.zeros((nz + 1, nz + 1))
    g[:nz] = reg * z
    g[nz] = -tau
    H[:nz, :nz] = reg * np.eye(nz)
    for b in blocks:
        Ginv = np.linalg.inv(b.value(z, t))
        X = np.einsum("ab,kbc->kac", Ginv, b.coeffs)
        g[:nz] -= np.einsum("kaa->k", X)
        H[:nz, :nz] += np.einsum("kab,lba->kl", X, X)
        if b.strict:
            # d/dt of -logdet(G - tI) and the mixed terms.
            g[nz] += np.trace(Ginv)
            H[nz, nz] += np.sum(Ginv * Ginv.T)
            mixed = -np.einsum("kab,ba->k", X, Ginv)
            H[:nz, nz] += mixed
            H[nz, :nz] += mixed
    return g, H


def maximize_margin(blocks, z0, reg=1e-8, tau0=1.0, mu=8.0, tol=1e-7,
                    max_iter=10_000, t_stop=None, max_inner=60):
    """Maximize the common margin ``t`` of a set of affine LMI blocks.

    Parameters
    ----------
    blocks : list of AffineBlock
    z0 : ndarray
        Starting point; it need not be feasible since ``t`` starts below the
        smallest eigenvalue.
    t_stop : float, optional
        Return as soon as a point with margin at least ``t_stop`` is reached
        and the current centering step has converged.

    Returns
    -------
    z : ndarray
    t : float
        Achieved margin (negative means no strictly feasible point found).
    iters : int
        Newton iterations used.
    """
    z = np.asarray(z0, dtype=float).copy()
    t = min(np.linalg.eigvalsh(b.value(z)).min() for b in blocks if b.strict) - 1.0
    for b in blocks:
        if not b.strict and not _chol_ok(b.value(z)):
            raise ValueError("non-strict blocks must be positive definite at z0")
    tau = tau0
    iters = 0
    total_dim = sum(b.dim for b in blocks)
    while iters < max_iter:
        # Centering by damped Newton (capped: ill-conditioned centers are
        # good enough to continue the path).
        inner = 0
        while iters < max_iter and inner < max_inner:
            iters += 1
            inner += 1
            g, H = _grad_hess(blocks, z, t, tau, reg)
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = float(-g @ step)
            if dec < 2e-10:
                break
            f0 = _barrier(blocks, z, t, tau, reg)
            s = 1.0
            while s > 1e-12:
                zn, tn = z + s * step[:-1], t + s * step[-1]
                fn = _barrier(blocks, zn, tn, tau, reg)
                if fn <= f0 - 0.25 * s * dec:
                    break
                s *= 0.5
            else:
                break
            z, t = zn, tn
        if t_stop is not None and t >= t_stop:
            break
        if total_dim / tau < tol * max(1.0, abs(t)):
            break
        tau *= mu
    else:
        if t <= 0:
            raise NotConverged(f"LMI solver exhausted {max_iter} iterations (margin {t:.3e})")
    log.debug("LMI solver: margin %.3e after %d Newton steps", t, iters)
    return z, t, iters
