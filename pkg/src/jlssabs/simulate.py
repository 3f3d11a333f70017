"""Monte Carlo simulation of concrete/abstract pairs of jump linear systems.

Both systems are integrated with the Euler-Maruyama scheme plus full Poisson
increments.  By default a subsystem and its abstraction see the *same*
Brownian increments and the *same* Poisson counts, which is the coupling the
generator of the simulation function assumes.

Every trial owns its random streams, derived from ``(master_seed, trial,
role)`` through :class:`numpy.random.SeedSequence`, so an ensemble is
reproducible bit for bit no matter how trials are batched across threads.
"""

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ssf as _ssf
from .composition import external_outputs, internal_inputs
from .errors import ConfigInvalid, DimensionMismatch, InvalidArgs, TooFewTrials
from .linalg import rowmul

log = logging.getLogger(__name__)

ROLE_W, ROLE_N, ROLE_W_ABS, ROLE_N_ABS = 0, 1, 2, 3
THREADS_ENV = "JLSSABS_THREADS"


def stream(master_seed, trial, role):
    """Random generator for one ``(trial, role)`` pair."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(role)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class InputTrajectory:
    """Sample-and-hold input: ``values[i]`` holds on ``[times[i], times[i+1])``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size == 0 or v.shape[0] != t.size:
            raise ConfigInvalid("input trajectory needs one row per breakpoint")
        if t[0] > 0 or np.any(np.diff(t) <= 0):
            raise ConfigInvalid("breakpoints must start at or before 0 and increase")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def width(self):
        return self.values.shape[1]

    def at(self, t):
        return self.values[np.searchsorted(self.times, t + 1e-12, side="right") - 1]

    def sup_norm_sq(self):
        return float(np.max(np.sum(self.values ** 2, axis=1)))


def random_input(seed, width, horizon, hold=0.1, low=-1.0, high=1.0, active=None):
    """Piecewise-constant input with uniform values; ``active`` masks columns."""
    rng = np.random.default_rng(seed)
    n = int(math.ceil(horizon / hold - 1e-9)) + 1
    vals = rng.uniform(low, high, (n, width))
    if active is not None:
        vals[:, ~np.asarray(active, dtype=bool)] = 0.0
    return InputTrajectory(np.arange(n) * hold, vals)


def read_input_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise ConfigInvalid(f"{path}: first column header must be 't'")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigInvalid(f"{path}: no data rows")
    return InputTrajectory(data[:, 0], data[:, 1:])


def write_input_csv(path, traj):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"u_{i + 1}" for i in range(traj.width)])
        for t, row in zip(traj.times, traj.values):
            w.writerow([format(t, ".17g")] + [format(v, ".17g") for v in row])


@dataclass(frozen=True, eq=False)
class SimConfig:
    dt: float
    horizon: float
    trials: int
    master_seed: int = 0
    inputs: Optional[InputTrajectory] = None
    x0: Optional[dict] = None
    xh0: Optional[dict] = None
    record_every: int = 10
    store_paths: bool = True
    shared_drivers: bool = True
    box: Optional[tuple] = None
    batch: int = 250
    chunk: int = 1000

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def validate(self, max_rate=0.0):
        if not (self.dt > 0 and self.horizon > 0):
            raise ConfigInvalid("dt and horizon must be positive")
        if abs(self.steps * self.dt - self.horizon) > 1e-12 * max(1.0, self.horizon):
            raise ConfigInvalid("horizon must be a multiple of dt")
        if self.dt * max_rate > 0.1:
            raise ConfigInvalid(f"dt * max jump rate = {self.dt * max_rate:.3g} exceeds 0.1")
        if self.trials < 1 or self.record_every < 1 or self.batch < 1 or self.chunk < 1:
            raise ConfigInvalid("trials, record_every, batch and chunk must be positive")


@dataclass(eq=False)
class Ensemble:
    t: np.ndarray
    gap_sq: np.ndarray
    sup_gap: np.ndarray
    set_dist_sq: Optional[np.ndarray]
    zeta: Optional[np.ndarray] = None
    zeta_hat: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def trials(self):
        return self.gap_sq.shape[0]


def step_jlss(sys, x, u, w, dW, dN, dt):
    """One Euler-Maruyama step with Poisson counts ``dN`` (batched on leading axes)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sys.n:
        raise DimensionMismatch(f"state has size {x.shape[-1]}, system has {sys.n}")
    drift = rowmul(x, sys.A)
    if sys.m:
        drift = drift + rowmul(u, sys.B)
    if sys.p:
        drift = drift + rowmul(w, sys.D)
    out = x + drift * dt
    for k, Ek in enumerate(sys.diffusions):
        out = out + rowmul(x, Ek) * dW[..., k:k + 1]
    for i, R in enumerate(sys.resets):
        out = out + rowmul(x, R) * dN[..., i:i + 1]
    return out


def box_distance_sq(y, box):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    d = np.maximum(lo - y, 0.0) + np.maximum(y - hi, 0.0)
    return np.sum(d * d, axis=-1)


class _Noise:
    """Chunked per-trial draws of Brownian increments and Poisson counts."""

    def __init__(self, seed, trials, n_w, rates, dt, chunk, roles):
        self.gw = [stream(seed, t, roles[0]) for t in trials]
        self.gn = [stream(seed, t, roles[1]) for t in trials]
        self.n_w, self.lam = n_w, np.asarray(rates, dtype=float) * dt
        self.sq = math.sqrt(dt)
        self.chunk = chunk
        self.pos = chunk

    def next(self):
        if self.pos == self.chunk:
            self.W = np.stack([g.standard_normal((self.chunk, self.n_w)) for g in self.gw], 1)
            self.W *= self.sq
            self.N = np.stack([g.poisson(self.lam, (self.chunk, self.lam.size))
                               for g in self.gn], 1).astype(float)
            self.pos = 0
        k = self.pos
        self.pos += 1
        return self.W[k], self.N[k]


def _driver_layout(net):
    w_sl, n_sl, w0, n0, rates = {}, {}, 0, 0, []
    for s in net.subsystems:
        nw, nj = len(s.sys.diffusions), len(s.sys.jumps)
        w_sl[s.id] = slice(w0, w0 + nw)
        n_sl[s.id] = slice(n0, n0 + nj)
        w0, n0 = w0 + nw, n0 + nj
        rates += s.sys.rates
    return w_sl, n_sl, w0, rates


def _stack_initial(net, states, dims, batch):
    out = {}
    for s in net.subsystems:
        v = np.zeros(dims[s.id]) if states is None else np.asarray(states[s.id], dtype=float)
        if v.shape != (dims[s.id],):
            raise ConfigInvalid(f"initial state of {s.id} must have size {dims[s.id]}")
        out[s.id] = np.tile(v, (batch, 1))
    return out


def _run_batch(net, abstractions, cfg, trials):
    B = len(trials)
    ids = net.ids
    w_sl, n_sl, n_w, rates = _driver_layout(net)
    noise = _Noise(cfg.master_seed, trials, n_w, rates, cfg.dt, cfg.chunk, (ROLE_W, ROLE_N))
    if cfg.shared_drivers:
        noise_h = noise
    else:
        noise_h = _Noise(cfg.master_seed, trials, n_w, rates, cfg.dt, cfg.chunk,
                         (ROLE_W_ABS, ROLE_N_ABS))
    x = _stack_initial(net, cfg.x0, {s.id: s.sys.n for s in net.subsystems}, B)
    xh = _stack_initial(net, cfg.xh0, {i: abstractions[i].abs_sys.n for i in ids}, B)
    u_off, off = {}, 0
    for i in ids:
        u_off[i] = slice(off, off + abstractions[i].abs_sys.m)
        off += abstractions[i].abs_sys.m
    if cfg.inputs is not None and cfg.inputs.width != off:
        raise ConfigInvalid(f"input trajectory has {cfg.inputs.width} columns, expected {off}")
    C_of = lambda j: net[j].sys.C
    Ch_of = lambda j: abstractions[j].abs_sys.C

    steps, rec = cfg.steps, cfg.record_every
    idx = list(range(0, steps + 1, rec))
    if idx[-1] != steps:
        idx.append(steps)
    R = len(idx)
    gap_sq = np.empty((B, R))
    sup_gap = np.empty((B, R))
    dist = np.empty((B, R)) if cfg.box is not None else None
    paths = cfg.store_paths
    running = np.zeros(B)
    r = 0
    zeta = zeta_hat = None
    for k in range(steps + 1):
        y = external_outputs(net, x, C_of)
        yh = external_outputs(net, xh, Ch_of)
        g = np.sqrt(np.sum((y - yh) ** 2, axis=-1))
        running = np.maximum(running, g)
        if r < R and k == idx[r]:
            if zeta is None and paths:
                zeta = np.empty((B, R, y.shape[-1]))
                zeta_hat = np.empty((B, R, yh.shape[-1]))
            gap_sq[:, r] = g * g
            sup_gap[:, r] = running
            if dist is not None:
                dist[:, r] = box_distance_sq(y, cfg.box)
            if paths:
                zeta[:, r] = y
                zeta_hat[:, r] = yh
            r += 1
        if k == steps:
            break
        uh_all = np.zeros((B, off)) if cfg.inputs is None else np.tile(cfg.inputs.at(k * cfg.dt), (B, 1))
        dW, dN = noise.next()
        dWh, dNh = (dW, dN) if noise_h is noise else noise_h.next()
        new_x, new_xh = {}, {}
        for i in ids:
            res = abstractions[i]
            sys = net[i].sys
            w = internal_inputs(net, i, x, C_of)
            wh = internal_inputs(net, i, xh, Ch_of)
            uh = uh_all[:, u_off[i]]
            u = _ssf.interface_u(res.ssf, x[i], xh[i], uh, wh)
            new_x[i] = step_jlss(sys, x[i], u, w, dW[:, w_sl[i]], dN[:, n_sl[i]], cfg.dt)
            new_xh[i] = step_jlss(res.abs_sys, xh[i], uh, wh, dWh[:, w_sl[i]], dNh[:, n_sl[i]],
                                  cfg.dt)
        x, xh = new_x, new_xh
    t = np.array(idx) * cfg.dt
    return t, gap_sq, sup_gap, dist, zeta, zeta_hat


def _threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigInvalid(f"{THREADS_ENV} must be an integer, got {env!r}")
    return os.cpu_count() or 1


def run_coupled(net, abstractions, cfg, cert=None):
    """Simulate ``cfg.trials`` coupled concrete/abstract network trajectories.

    ``abstractions`` maps subsystem ids to abstraction results; internal
    inputs are closed as ``w_ij = C_ji x_j`` and ``wh_ij = Ch_ji xh_j``, and
    each concrete subsystem is driven by its interface.
    """
    for s in net.subsystems:
        if s.sys.rates != abstractions[s.id].abs_sys.rates:
            raise ConfigInvalid(f"subsystem {s.id}: jump rates differ from its abstraction")
    rates = [r for s in net.subsystems for r in s.sys.rates]
    cfg.validate(max(rates + [0.0]))
    batches = [list(range(b, min(b + cfg.batch, cfg.trials)))
               for b in range(0, cfg.trials, cfg.batch)]
    workers = min(_threads(), len(batches))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda tr: _run_batch(net, abstractions, cfg, tr), batches))
    else:
        parts = [_run_batch(net, abstractions, cfg, tr) for tr in batches]
    t = parts[0][0]
    cat = lambda j: None if parts[0][j] is None else np.concatenate([p[j] for p in parts])
    info = {"dt": cfg.dt, "horizon": cfg.horizon, "trials": cfg.trials,
            "master_seed": cfg.master_seed, "shared_drivers": cfg.shared_drivers}
    if cert is not None and cfg.x0 is not None and cfg.xh0 is not None:
        from .composition import composite_V
        x0 = np.concatenate([np.asarray(cfg.x0[i], dtype=float) for i in cert.ids])
        xh0 = np.concatenate([np.asarray(cfg.xh0[i], dtype=float) for i in cert.ids])
        info["V0"] = float(composite_V(cert, abstractions, x0, xh0))
    return Ensemble(t=t, gap_sq=cat(1), sup_gap=cat(2), set_dist_sq=cat(3), zeta=cat(4),
                    zeta_hat=cat(5), info=info)


def estimate_moment_gap(ens):
    """Mean squared output gap and its standard error per grid point."""
    n = ens.trials
    if n < 2:
        raise TooFewTrials("need at least two trials")
    mean = ens.gap_sq.mean(axis=0)
    se = ens.gap_sq.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, se


def wilson_interval(successes, n, z=1.959963984540054):
    if n <= 0:
        raise TooFewTrials("need at least one trial")
    p = successes / n
    den = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def estimate_sup_exceedance(ens, eps, T):
    """Fraction of trials whose gap reached ``eps`` on ``[0, T]``, with a Wilson 95% interval."""
    if eps < 0 or T < 0 or T > ens.t[-1] + 1e-9:
        raise InvalidArgs("need eps >= 0 and 0 <= T <= horizon")
    j = int(np.searchsorted(ens.t, T + 1e-9, side="right")) - 1
    hits = int(np.sum(ens.sup_gap[:, j] >= eps))
    return hits / ens.trials, wilson_interval(hits, ens.trials)


def estimate_set_distance(ens, box=None):
    """Mean squared distance of the concrete output to an axis-aligned box."""
    if box is None:
        if ens.set_dist_sq is None:
            raise InvalidArgs("ensemble has no set distance; pass a box")
        return ens.set_dist_sq.mean(axis=0)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if np.any(lo > hi):
        raise InvalidArgs("box is empty")
    if ens.zeta is None:
        raise InvalidArgs("paths were not stored; rerun with store_paths=True")
    return box_distance_sq(ens.zeta, (lo, hi)).mean(axis=0)


def write_summary_csv(path, ens, bound=None):
    mean, se = estimate_moment_gap(ens)
    bound = np.full_like(mean, np.nan) if bound is None else np.broadcast_to(bound, mean.shape)
    dist = (ens.set_dist_sq.mean(axis=0) if ens.set_dist_sq is not None
            else np.full_like(mean, np.nan))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_gap_sq", "se", "bound", "mean_set_dist_sq"])
        for row in zip(ens.t, mean, se, bound, dist):
            w.writerow([format(float(v), ".17g") for v in row])


def run_preservation(sys, result, x0, dt, horizon, trials, seed=0, omega=None, nu=None):
    """Drive a subsystem and its behavior-preserving abstraction in lockstep.

    The abstraction starts at ``P_hat x0`` and receives
    ``uh = [nu - Q P_hat x - S omega; F x]`` with the concrete noise paths.
    ``omega`` and ``nu`` are callables of time returning the internal and
    external concrete inputs (zero when omitted).

    Returns
    -------
    sup_gap, sup_out : ndarray
        Per-trial ``sup_t |zeta - zeta_hat|`` and ``sup_t |zeta|``.
    """
    bp = result.bp
    if bp is None:
        raise InvalidArgs("abstraction has no behavior-preserving data")
    cert, abs_sys = result.ssf, result.abs_sys
    steps = int(round(horizon / dt))
    noise = _Noise(seed, range(trials), len(sys.diffusions), sys.rates, dt,
                   min(1000, steps), (ROLE_W, ROLE_N))
    x = np.tile(np.asarray(x0, dtype=float), (trials, 1))
    xh = x @ bp.P_hat.T
    sup_gap = np.zeros(trials)
    sup_out = np.zeros(trials)
    for k in range(steps + 1):
        y, yh = x @ sys.C.T, xh @ abs_sys.C.T
        sup_gap = np.maximum(sup_gap, np.linalg.norm(y - yh, axis=-1))
        sup_out = np.maximum(sup_out, np.linalg.norm(y, axis=-1))
        if k == steps:
            break
        t = k * dt
        om = np.zeros((trials, sys.p)) if omega is None else np.broadcast_to(omega(t), (trials, sys.p))
        nv = np.zeros((trials, sys.m)) if nu is None else np.broadcast_to(nu(t), (trials, sys.m))
        uh = np.hstack([nv - (x @ bp.P_hat.T) @ cert.Q.T - om @ cert.S.T, x @ bp.F.T])
        dW, dN = noise.next()
        x, xh = (step_jlss(sys, x, nv, om, dW, dN, dt),
                 step_jlss(abs_sys, xh, uh, om, dW, dN, dt))
    return sup_gap, sup_out
