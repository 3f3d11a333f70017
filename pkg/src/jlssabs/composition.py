"""Compositional certificates for networks of abstracted subsystems.

With linear gains the small-gain condition reduces to a statement about the
nonnegative matrix ``Lambda^-1 Delta``: a weight vector ``mu > 0`` with
``mu' (Delta - Lambda) < 0`` exists iff its spectral radius is below one.  The
composite function is ``V = sum_i mu_i V_i``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import ssf as _ssf
from .errors import CertificateInvalid, DimensionMismatch, Infeasible, MissingGains
from .linalg import rowmul, spectral_radius
from .model import EXT

log = logging.getLogger(__name__)

TOL_SG = 1e-9


@dataclass(frozen=True, eq=False)
class CompositionCertificate:
    ids: tuple
    mu: np.ndarray
    Lambda: np.ndarray
    Delta: np.ndarray
    radius: float
    gains: dict
    literal: dict
    example_mode: dict
    k: int = 2
    triangle_mode: bool = True
    paper_example_mode: bool = False
    zero_input: tuple = ()

    def _slopes(self):
        return self.example_mode if self.paper_example_mode else self.literal

    @property
    def alpha_slope(self):
        return self._slopes()["alpha_slope"]

    @property
    def eta_slope(self):
        return self._slopes()["eta_slope"]

    @property
    def rho_ext_slope(self):
        return self._slopes()["rho_ext_slope"]


def _gains_of(obj):
    if isinstance(obj, _ssf.LinearGains):
        return obj
    if isinstance(obj, dict):
        return _ssf.LinearGains(a=obj["a"], h=obj["h"], r_e=obj["r_e"], r_i=obj["r_i"])
    g = getattr(obj, "gains", None)
    if g is None:
        raise MissingGains(f"no gains available on {obj!r}")
    return g


def _exponent(k, triangle_mode):
    e = max(k / 2.0, 1.0)
    return e - 1.0 if triangle_mode else e


def build_gain_matrices(net, gains, triangle_mode=True, k=None):
    """Assemble ``Lambda = diag(h_i)`` and the coupling matrix ``Delta``.

    ``gains`` maps subsystem id to :class:`LinearGains`, an abstraction
    result, or a dict with keys ``a, h, r_e, r_i``.  ``Delta[i, j]`` is zero
    whenever subsystem ``j`` sends nothing to subsystem ``i``.
    """
    k = net.k if k is None else k
    ids = net.ids
    missing = [i for i in ids if i not in gains]
    if missing:
        raise MissingGains(f"no gains for subsystems {missing}")
    g = {i: _gains_of(gains[i]) for i in ids}
    N = len(ids)
    factor = float(N - 1) ** _exponent(k, triangle_mode) if N > 1 else 0.0
    Lam = np.diag([g[i].h for i in ids])
    Delta = np.zeros((N, N))
    for a, si in enumerate(net.subsystems):
        for b, sj in enumerate(net.subsystems):
            if a != b and si.input_slice(sj.id) is not None and sj.output_rows(si.id) is not None:
                Delta[a, b] = g[si.id].r_i * factor / g[sj.id].a
    return Lam, Delta


def small_gain_margin(Lam, Delta, mu):
    """``mu' (Delta - Lambda)``; all entries negative means certified."""
    return np.asarray(mu) @ (np.asarray(Delta) - np.asarray(Lam))


def find_mu(Lam, Delta, tol_sg=TOL_SG):
    """Positive weights certifying the small-gain condition.

    The left Perron vector ``v`` of a slightly perturbed ``Lambda^-1 Delta``
    gives ``mu = Lambda^-1 v``.  The result is scaled to ``min(mu) = 1``.

    Raises
    ------
    Infeasible
        When the spectral radius is not below ``1 - tol_sg``; the radius is
        attached to the exception.
    """
    Lam = np.asarray(Lam, dtype=float)
    Delta = np.asarray(Delta, dtype=float)
    h = np.diag(Lam)
    if np.any(h <= 0) or np.any(Delta < 0):
        raise ValueError("Lambda must be positive diagonal and Delta nonnegative")
    N = h.size
    if not np.any(Delta):
        return np.ones(N)
    B = Delta / h[:, None]
    r = spectral_radius(B)
    if r >= 1.0 - tol_sg:
        raise Infeasible(f"small-gain condition fails: spectral radius {r:.9g} >= 1", radius=r)
    eps = (1.0 - r) / (4.0 * N)
    for _ in range(60):
        Bp = B + eps
        w, V = np.linalg.eig(Bp.T)
        i = int(np.argmax(w.real))
        v = np.abs(V[:, i].real)
        mu = v / h
        mu = mu / mu.min()
        if np.all(small_gain_margin(Lam, Delta, mu) < 0):
            return mu
        eps /= 4.0
    raise CertificateInvalid("could not certify the small-gain weights")


def literal_slopes(mu, Lam, Delta, gains_list, k, zero_input=()):
    """Composite slopes computed from the defining optimizations."""
    mu = np.asarray(mu, dtype=float)
    N = mu.size
    a = np.array([g.a for g in gains_list])
    r_e = np.array([0.0 if i in zero_input else g.r_e for i, g in enumerate(gains_list)])
    c = mu @ (Lam - Delta)
    return {
        "alpha_slope": float(1.0 / (N ** (max(k / 2.0, 1.0) - 1.0) * np.max(1.0 / (a * mu)))),
        "eta_slope": float(np.min(c / mu)),
        "rho_ext_slope": float(np.linalg.norm(mu * r_e)),
    }


def example_mode_slopes(mu, Lam, Delta, gains_list, k, zero_input=()):
    """Variant reproducing the worked example: the simplex constraint ``1's = s``
    in the decay term and a per-component maximum for the input gain."""
    mu = np.asarray(mu, dtype=float)
    a = np.array([g.a for g in gains_list])
    r_e = np.array([0.0 if i in zero_input else g.r_e for i, g in enumerate(gains_list)])
    c = mu @ (Lam - Delta)
    return {
        "alpha_slope": float(np.min(a)),
        "eta_slope": float(np.min(c)),
        "rho_ext_slope": float(np.max(r_e)) if r_e.size else 0.0,
    }


def compose(net, gains, mu=None, k=None, triangle_mode=True, paper_example_mode=False,
            zero_input=()):
    """Certify the interconnection and compute the composite gain slopes.

    Parameters
    ----------
    gains : mapping
        Subsystem id to gains (see :func:`build_gain_matrices`).
    mu : array_like, optional
        Weights to use; found with :func:`find_mu` when omitted.
    zero_input : iterable of ids
        Subsystems whose abstract external input is held at zero; their
        external gain does not enter the composite one.
    """
    k = net.k if k is None else int(k)
    ids = tuple(net.ids)
    Lam, Delta = build_gain_matrices(net, gains, triangle_mode, k)
    h = np.diag(Lam)
    radius = spectral_radius(Delta / h[:, None])
    if mu is None:
        mu = find_mu(Lam, Delta)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (len(ids),) or np.any(mu <= 0):
        raise CertificateInvalid(f"mu must be a positive vector of length {len(ids)}")
    margin = small_gain_margin(Lam, Delta, mu)
    if not np.all(margin < 0):
        raise CertificateInvalid(f"mu does not certify the small-gain condition: {margin}")
    glist = [_gains_of(gains[i]) for i in ids]
    zero_idx = tuple(ids.index(str(z)) for z in zero_input)
    return CompositionCertificate(
        ids=ids, mu=mu, Lambda=Lam, Delta=Delta, radius=float(radius),
        gains={i: g for i, g in zip(ids, glist)},
        literal=literal_slopes(mu, Lam, Delta, glist, k, zero_idx),
        example_mode=example_mode_slopes(mu, Lam, Delta, glist, k, zero_idx),
        k=k, triangle_mode=triangle_mode, paper_example_mode=paper_example_mode,
        zero_input=tuple(str(z) for z in zero_input))


def _blocks(abstractions, ids, x, xh):
    x = np.asarray(x, dtype=float)
    xh = np.asarray(xh, dtype=float)
    out, i0, j0 = [], 0, 0
    for sid in ids:
        res = abstractions[sid]
        n, nh = res.ssf.P.shape
        out.append((x[..., i0:i0 + n], xh[..., j0:j0 + nh]))
        i0 += n
        j0 += nh
    if x.shape[-1] != i0 or xh.shape[-1] != j0:
        raise DimensionMismatch(f"stacked states must have sizes {i0} and {j0}")
    return out


def composite_V(cert, abstractions, x, xh):
    """``sum_i mu_i V_i`` on stacked states (leading batch axes allowed)."""
    parts = _blocks(abstractions, cert.ids, x, xh)
    return sum(m * abstractions[sid].ssf.V(xi, xhi)
               for m, sid, (xi, xhi) in zip(cert.mu, cert.ids, parts))


def internal_inputs(net, sid, blocks, C_of):
    """Stack ``w_ij = C_ji x_j`` for subsystem ``sid`` from per-subsystem states."""
    si = net[sid]
    cols = []
    for j, _ in si.inputs:
        Cj = C_of(j)[net[j].output_rows(sid), :]
        cols.append(rowmul(blocks[j], Cj))
    if not cols:
        lead = next(iter(blocks.values())).shape[:-1]
        return np.zeros(lead + (0,))
    return np.concatenate(cols, axis=-1)


def composite_generator(net, cert, abstractions, x, xh, uh):
    """``sum_i mu_i LV_i`` with internal inputs closed through the wiring.

    ``uh`` is the stacked abstract external input.
    """
    ids = cert.ids
    parts = dict(zip(ids, _blocks(abstractions, ids, x, xh)))
    xs = {sid: p[0] for sid, p in parts.items()}
    xhs = {sid: p[1] for sid, p in parts.items()}
    uh = np.asarray(uh, dtype=float)
    total, u0 = 0.0, 0
    for m, sid in zip(cert.mu, ids):
        res = abstractions[sid]
        sys = net[sid].sys
        w = internal_inputs(net, sid, xs, lambda j: net[j].sys.C)
        wh = internal_inputs(net, sid, xhs, lambda j: abstractions[j].abs_sys.C)
        mh = res.abs_sys.m
        uhi = uh[..., u0:u0 + mh]
        u0 += mh
        u = _ssf.interface_u(res.ssf, xs[sid], xhs[sid], uhi, wh)
        total = total + m * _ssf.generator_quadratic(res.ssf, sys, res.abs_sys, xs[sid],
                                                     xhs[sid], u, uhi, w, wh)
    return total


def external_outputs(net, blocks, C_of):
    ys = []
    for s in net.subsystems:
        rows = s.output_rows(EXT)
        if rows is not None:
            ys.append(rowmul(blocks[s.id], C_of(s.id)[rows, :]))
    if not ys:
        lead = next(iter(blocks.values())).shape[:-1]
        return np.zeros(lead + (0,))
    return np.concatenate(ys, axis=-1)
