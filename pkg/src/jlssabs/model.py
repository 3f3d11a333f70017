"""Jump linear stochastic systems and their interconnection.

A subsystem evolves as::

    dx = (A x + B u + D w) dt + sum_k E_k x dW_k + sum_i R_i x dN_i,    y = C x

with independent scalar Brownian motions ``W_k`` and Poisson counters ``N_i``
of rate ``lam_i``.  Single subsystems have exactly one Brownian driver; the
closed network produced by :func:`interconnect` keeps one driver per
subsystem, so ``E`` may also be a stack of shape ``(w, n, n)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionMismatch, InvalidNetwork
from .linalg import as_matrix

EXT = "ext"


@dataclass(frozen=True, eq=False)
class JlssSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    jumps: tuple = ()

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = _as_block(self.B, n, None, "B")
        C = _as_block(self.C, None, n, "C")
        D = _as_block(self.D, n, None, "D")
        E = np.asarray(self.E, dtype=float)
        if E.ndim == 0:
            E = E * np.eye(n)
        if E.ndim == 2:
            E = E.reshape(1, *E.shape)
        if E.ndim != 3 or E.shape[1:] != (n, n):
            raise DimensionMismatch(f"E must be ({n}, {n}) or (w, {n}, {n}), got {E.shape}")
        if not np.all(np.isfinite(E)):
            raise ValueError("E has non-finite entries")
        jumps = []
        for rate, R in self.jumps:
            rate = float(rate)
            if not (rate >= 0.0 and np.isfinite(rate)):
                raise ValueError(f"jump rate must be finite and >= 0, got {rate}")
            jumps.append((rate, as_matrix(R, n, n, "R")))
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D), ("E", E)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.D.shape[1]

    @property
    def q(self):
        return self.C.shape[0]

    @property
    def diffusions(self):
        """List of diffusion matrices, one per Brownian driver."""
        return list(self.E)

    @property
    def rates(self):
        return [rate for rate, _ in self.jumps]

    @property
    def resets(self):
        return [R for _, R in self.jumps]

    def replace(self, **changes):
        kw = dict(A=self.A, B=self.B, C=self.C, D=self.D,
                  E=self.E if self.E.shape[0] > 1 else self.E[0], jumps=self.jumps)
        kw.update(changes)
        return JlssSystem(**kw)


def _as_block(m, rows, cols, name):
    a = np.asarray(m, dtype=float)
    if a.size == 0:
        # Empty blocks such as B = n x 0 or C = 0 x n.
        shape = a.shape if a.ndim == 2 else (0, 0)
        return np.zeros((rows if rows is not None else shape[0],
                         cols if cols is not None else shape[1]))
    return as_matrix(a, rows, cols, name)


@dataclass(frozen=True, eq=False)
class SubsystemSpec:
    """A subsystem with its internal input/output bookkeeping.

    ``inputs`` lists ``(peer_id, width)`` blocks partitioning the columns of
    ``D`` in order.  ``outputs`` lists ``(peer_id or "ext", row_indices)``
    blocks selecting rows of ``C``; a block may reuse rows of another one.
    A peer with no output block towards it receives nothing (``h_ij == 0``).
    """

    id: str
    sys: JlssSystem
    inputs: tuple = ()
    outputs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "inputs", tuple((str(j), int(w)) for j, w in self.inputs))
        object.__setattr__(
            self, "outputs",
            tuple((str(j), tuple(int(r) for r in rows)) for j, rows in self.outputs))

    def input_slice(self, peer):
        """Column slice of ``D`` fed by ``peer``, or None when not connected."""
        start = 0
        for j, w in self.inputs:
            if j == peer:
                return slice(start, start + w)
            start += w
        return None

    def output_rows(self, peer):
        for j, rows in self.outputs:
            if j == peer:
                return list(rows)
        return None

    def output_matrix(self, peer, C=None):
        """``C_ij``: rows of ``C`` (default: the subsystem's own) sent to ``peer``."""
        rows = self.output_rows(peer)
        if rows is None:
            return None
        C = self.sys.C if C is None else C
        return C[rows, :]


@dataclass(frozen=True, eq=False)
class Network:
    subsystems: tuple
    k: int = 2
    shared_noise: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        if self.shared_noise:
            raise InvalidNetwork("shared Brownian drivers across subsystems are not supported")

    @property
    def ids(self):
        return [s.id for s in self.subsystems]

    def __len__(self):
        return len(self.subsystems)

    def __getitem__(self, key):
        if isinstance(key, int):
            return self.subsystems[key]
        for s in self.subsystems:
            if s.id == str(key):
                return s
        raise KeyError(key)

    def index(self, sid):
        return self.ids.index(str(sid))

    def state_slices(self):
        out, start = [], 0
        for s in self.subsystems:
            out.append(slice(start, start + s.sys.n))
            start += s.sys.n
        return out


def validate_network(net):
    """List every bookkeeping violation; an empty list means the network is valid."""
    problems = []
    ids = net.ids
    if len(set(ids)) != len(ids):
        problems.append("subsystem ids are not unique")
    known = set(ids)
    for s in net.subsystems:
        widths = sum(w for _, w in s.inputs)
        if widths != s.sys.p:
            problems.append(f"subsystem {s.id}: input widths sum to {widths}, D has {s.sys.p} columns")
        seen = set()
        for j, w in s.inputs:
            if j == s.id:
                problems.append(f"subsystem {s.id}: self-loop input")
            elif j not in known:
                problems.append(f"subsystem {s.id}: input from unknown subsystem {j}")
            if j in seen:
                problems.append(f"subsystem {s.id}: duplicate input block from {j}")
            seen.add(j)
            if w <= 0:
                problems.append(f"subsystem {s.id}: input block from {j} has width {w}")
        seen = set()
        for j, rows in s.outputs:
            if j == s.id:
                problems.append(f"subsystem {s.id}: self-loop output")
            elif j != EXT and j not in known:
                problems.append(f"subsystem {s.id}: output to unknown subsystem {j}")
            if j in seen:
                problems.append(f"subsystem {s.id}: duplicate output block to {j}")
            seen.add(j)
            bad = [r for r in rows if not 0 <= r < s.sys.q]
            if bad or len(set(rows)) != len(rows) or not rows:
                problems.append(f"subsystem {s.id}: invalid output rows {list(rows)} to {j}")
    for si in net.subsystems:
        for sj in net.subsystems:
            if si.id == sj.id:
                continue
            # w_ij is fed by y_ji: widths must agree (and both blocks exist or neither).
            sl = si.input_slice(sj.id)
            rows = sj.output_rows(si.id)
            p_ij = 0 if sl is None else sl.stop - sl.start
            q_ji = 0 if rows is None else len(rows)
            if p_ij != q_ji:
                problems.append(
                    f"interconnection ({si.id},{sj.id}): input width p={p_ij} "
                    f"but output width q={q_ji}")
    return problems


def _check(net):
    problems = validate_network(net)
    if problems:
        raise InvalidNetwork("; ".join(problems))


def coupling_matrix(net, C_of=None):
    """Matrix ``L`` with ``w = L x`` stacking every subsystem's internal input.

    ``C_of(s)`` overrides the output matrix used for subsystem ``s`` (used to
    build the same wiring for abstract subsystems).
    """
    _check(net)
    slices = net.state_slices()
    p_tot = sum(s.sys.p for s in net.subsystems)
    n_tot = slices[-1].stop if slices else 0
    L = np.zeros((p_tot, n_tot))
    row = 0
    for si in net.subsystems:
        for j, w in si.inputs:
            sj = net[j]
            Cj = sj.sys.C if C_of is None else C_of(sj)
            L[row:row + w, slices[net.index(j)]] = sj.output_matrix(si.id, Cj)
            row += w
    return L


def interconnect(net):
    """Close all internal loops ``w_ij = y_ji`` and return the monolithic system.

    Each subsystem keeps its own Brownian driver and its own Poisson sources;
    the resulting system has no internal inputs.
    """
    _check(net)
    subs = net.subsystems
    slices = net.state_slices()
    n = slices[-1].stop if slices else 0
    A = block_diag(*[s.sys.A for s in subs]) if subs else np.zeros((0, 0))
    for i, si in enumerate(subs):
        for j, _ in si.inputs:
            sj = net[j]
            Dij = si.sys.D[:, si.input_slice(j)]
            A[slices[i], slices[net.index(j)]] += Dij @ sj.output_matrix(si.id)
    B = block_diag(*[s.sys.B for s in subs])
    ext = []
    for i, s in enumerate(subs):
        Cii = s.output_matrix(EXT)
        if Cii is not None:
            block = np.zeros((Cii.shape[0], n))
            block[:, slices[i]] = Cii
            ext.append(block)
    C = np.vstack(ext) if ext else np.zeros((0, n))
    E = []
    for i, s in enumerate(subs):
        for Ek in s.sys.diffusions:
            big = np.zeros((n, n))
            big[slices[i], slices[i]] = Ek
            E.append(big)
    jumps = []
    for i, s in enumerate(subs):
        for rate, R in s.sys.jumps:
            big = np.zeros((n, n))
            big[slices[i], slices[i]] = R
            jumps.append((rate, big))
    E = np.array(E) if E else np.zeros((0, n, n))
    return JlssSystem(A=A, B=B, C=C, D=np.zeros((n, 0)), E=E, jumps=tuple(jumps))


def jump_event_count(net):
    return sum(len(s.sys.jumps) for s in net.subsystems)
