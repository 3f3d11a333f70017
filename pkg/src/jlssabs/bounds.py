"""Closed-form error and probability bounds for linear gain slopes.

For an SSF with ``V >= a |y - yh|^k`` and ``LV <= -h V + r_e |uh|^k + r_i |w - wh|^k``
Gronwall's inequality gives the moment bound; Markov-type arguments give the
probability bounds.  Every function accepts scalar or array ``t``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgs, NegativeInput


@dataclass(frozen=True)
class GainSlopes:
    a: float
    h: float
    r_e: float
    r_i: float = 0.0
    k: int = 2

    def __post_init__(self):
        if not (self.a > 0 and self.h > 0):
            raise InvalidArgs(f"a and h must be positive, got a={self.a}, h={self.h}")
        if self.r_e < 0 or self.r_i < 0:
            raise InvalidArgs("input gains must be nonnegative")
        if self.k < 1:
            raise InvalidArgs(f"moment order must be >= 1, got {self.k}")

    @classmethod
    def from_certificate(cls, cert):
        """Composite slopes of a :class:`CompositionCertificate` (closed network)."""
        return cls(a=cert.alpha_slope, h=cert.eta_slope, r_e=cert.rho_ext_slope, r_i=0.0,
                   k=cert.k)

    @classmethod
    def from_gains(cls, gains, k=2):
        return cls(a=gains.a, h=gains.h, r_e=gains.r_e, r_i=gains.r_i, k=k)


def _nonneg(**kw):
    for name, v in kw.items():
        if np.any(np.asarray(v) < 0):
            raise NegativeInput(f"{name} must be nonnegative")


def moment_bound(g, EV0, Eu_hat, Ew_mismatch, t):
    """Upper bound on ``E|zeta(t) - zeta_hat(t)|^k``.

    ``(EV0 exp(-h t) + (r_e Eu_hat + r_i Ew_mismatch) / h) / a``, where
    ``Eu_hat`` and ``Ew_mismatch`` are the expected sup norms to the power k.
    """
    _nonneg(EV0=EV0, Eu_hat=Eu_hat, Ew_mismatch=Ew_mismatch, t=t)
    t = np.asarray(t, dtype=float)
    val = (EV0 * np.exp(-g.h * t) + (g.r_e * Eu_hat + g.r_i * Ew_mismatch) / g.h) / g.a
    return float(val) if val.ndim == 0 else val


def _sup_branches(g, V0, eps, T, eps_const):
    aek = g.a * eps ** g.k
    theta = g.h
    b1 = 1.0 - (1.0 - V0 / aek) * np.exp(-eps_const * T / aek)
    # (theta V0 + (e^{theta T} - 1) c) / (theta a eps^k e^{theta T}), written without overflow
    b2 = (theta * V0 * np.exp(-theta * T) - np.expm1(-theta * T) * eps_const) / (theta * aek)
    return aek, b1, b2


def sup_probability_bound(g, V0, eps, T, eps_const, clamp=True):
    """Bound on ``P{sup_[0,T] |zeta - zeta_hat| >= eps}`` given the initial ``V0``.

    ``eps_const`` must dominate ``r_e |uh|_inf^k + r_i |w - wh|_inf^k``; the
    decay rate ``theta`` is the slope ``h``.  Set ``clamp=False`` to get the
    raw formula value.
    """
    if not (eps > 0 and np.all(np.asarray(T) > 0)):
        raise InvalidArgs("eps and T must be positive")
    if V0 < 0 or eps_const < 0:
        raise InvalidArgs("V0 and eps_const must be nonnegative")
    aek, b1, b2 = _sup_branches(g, V0, eps, np.asarray(T, dtype=float), eps_const)
    val = b1 if aek >= eps_const / g.h else b2
    if clamp:
        val = np.clip(val, 0.0, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def pointwise_probability_bound(g, EV0, Eu_hat, Ew_mismatch, eps, t):
    """Bound on ``P{|zeta(t) - zeta_hat(t)| >= eps}`` from the k-th moment bound."""
    if not eps > 0:
        raise InvalidArgs("eps must be positive")
    num = np.asarray(moment_bound(g, EV0, Eu_hat, Ew_mismatch, t))
    val = np.minimum(1.0, num ** (1.0 / g.k) / eps)
    return float(val) if val.ndim == 0 else val


def infinite_horizon_bound(g, V0, eps):
    """Bound on ``P{sup_t |zeta - zeta_hat| > eps}`` for zero abstract input."""
    if not eps > 0:
        raise InvalidArgs("eps must be positive")
    if V0 < 0:
        raise InvalidArgs("V0 must be nonnegative")
    return float(min(1.0, V0 / (g.a * eps ** g.k)))


def triangle_bound(b1, b2):
    """Combine two squared-distance bounds through the triangle inequality.

    ``b1`` and ``b2`` are arrays or callables of ``t``; the result has the
    same kind.
    """
    if callable(b1) or callable(b2):
        f1 = b1 if callable(b1) else (lambda t: b1)
        f2 = b2 if callable(b2) else (lambda t: b2)
        return lambda t: triangle_bound(f1(t), f2(t))
    b1, b2 = np.asarray(b1, dtype=float), np.asarray(b2, dtype=float)
    if np.any(b1 < 0) or np.any(b2 < 0):
        raise NegativeInput("bounds must be nonnegative")
    val = (np.sqrt(b1) + np.sqrt(b2)) ** 2
    return float(val) if val.ndim == 0 else val


def bound_curves(g, t, EV0, Eu_hat=0.0, Ew_mismatch=0.0, eps=1.0, eps_const=None, V0=None):
    """All four bound families on the grid ``t``.

    The sup bound at ``t`` uses the horizon ``T = t`` (grid points ``t = 0``
    report the initial-condition term only).
    """
    t = np.asarray(t, dtype=float)
    V0 = EV0 if V0 is None else V0
    eps_const = g.r_e * Eu_hat + g.r_i * Ew_mismatch if eps_const is None else eps_const
    sup = np.array([sup_probability_bound(g, V0, eps, max(ti, 1e-300), eps_const) for ti in t])
    return {
        "t": t,
        "moment": np.asarray(moment_bound(g, EV0, Eu_hat, Ew_mismatch, t)) * np.ones_like(t),
        "pointwise_probability": np.asarray(
            pointwise_probability_bound(g, EV0, Eu_hat, Ew_mismatch, eps, t)) * np.ones_like(t),
        "sup_probability": sup,
        "infinite_horizon": np.full_like(t, infinite_horizon_bound(g, V0, eps)),
    }


def write_bounds_csv(path, curves):
    """Write the curves as CSV; ``path`` may also be an open text file."""
    keys = list(curves)
    if hasattr(path, "write"):
        _write_rows(path, keys, curves)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(fh, keys, curves)


def _write_rows(fh, keys, curves):
    w = csv.writer(fh)
    w.writerow(keys)
    for row in zip(*(curves[k] for k in keys)):
        w.writerow([format(float(v), ".17g") for v in row])
