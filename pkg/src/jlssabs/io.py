"""JSON documents for systems, networks, abstractions and certificates.

Matrices are row-major nested lists.  Entries may be arithmetic expressions
in named parameters (``"-d"``, ``"5*d"``), resolved at load time from the
document's ``params`` block, optionally overridden by the caller.
"""

import ast
import json
import math
import operator

import numpy as np

from . import ssf as _ssf
from .abstraction import AbstractionResult, BehaviorPreservingData
from .composition import CompositionCertificate
from .errors import ConfigInvalid
from .model import JlssSystem, Network, SubsystemSpec

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log, "abs": abs}


def eval_expr(text, params):
    """Evaluate an arithmetic expression over ``params`` without ``eval``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in params:
                raise ConfigInvalid(f"unknown parameter {node.id!r} in {text!r}")
            return float(params[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return float(_FUNCS[node.func.id](ev(node.args[0])))
        raise ConfigInvalid(f"unsupported expression {text!r}")

    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigInvalid(f"cannot parse expression {text!r}: {exc.msg}") from None
    return ev(tree)


def resolve(value, params):
    """Replace every string leaf of a nested list by its numeric value."""
    if isinstance(value, str):
        return eval_expr(value, params)
    if isinstance(value, (list, tuple)):
        return [resolve(v, params) for v in value]
    if isinstance(value, bool) or value is None:
        raise ConfigInvalid(f"expected a number, got {value!r}")
    return float(value)


def mat(value, params=None, rows=None, cols=None):
    """Nested list (possibly with expressions) to a float matrix.

    Empty matrices take their shape from ``rows``/``cols``.
    """
    a = np.array(resolve(value, params or {}), dtype=float)
    if a.size == 0:
        r = rows if rows is not None else (a.shape[0] if a.ndim == 2 else 0)
        c = cols if cols is not None else (a.shape[1] if a.ndim == 2 else 0)
        return np.zeros((r, c))
    if a.ndim == 1:
        a = a.reshape(1, -1) if rows == 1 or (cols is not None and cols == a.size and rows != a.size) \
            else a.reshape(-1, 1)
    return a


def to_list(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[1] == 0:
        return [[] for _ in range(a.shape[0])]
    return a.tolist()


def system_from_doc(doc, params=None):
    params = dict(doc.get("params", {}), **(params or {}))
    try:
        A = mat(doc["A"], params)
        n = A.shape[0]
        E = doc.get("E", 0.0)
        E = np.array(resolve(E, params), dtype=float)
        if E.ndim == 1:
            E = E.reshape(1, 1)
        D = mat(doc.get("D", []), params, rows=n)
        jumps = tuple((resolve(j["rate"], params), mat(j["R"], params, n, n))
                      for j in doc.get("jumps", []))
        return JlssSystem(A=A, B=mat(doc.get("B", []), params, rows=n),
                          C=mat(doc.get("C", []), params, cols=n), D=D, E=E, jumps=jumps)
    except KeyError as exc:
        raise ConfigInvalid(f"system document lacks field {exc}") from None


def system_to_doc(sys):
    E = sys.E[0] if sys.E.shape[0] == 1 else sys.E
    return {"A": to_list(sys.A), "B": to_list(sys.B), "C": to_list(sys.C),
            "D": to_list(sys.D), "E": E.tolist(),
            "jumps": [{"rate": r, "R": to_list(R)} for r, R in sys.jumps]}


def network_from_doc(doc, params=None):
    params = dict(doc.get("params", {}), **(params or {}))
    if "subsystems" not in doc:
        raise ConfigInvalid("network document lacks 'subsystems'")
    subs = []
    for s in doc["subsystems"]:
        if "id" not in s:
            raise ConfigInvalid("every subsystem needs an 'id'")
        subs.append(SubsystemSpec(
            id=s["id"], sys=system_from_doc(s, params),
            inputs=tuple((i["from"], i["width"]) for i in s.get("inputs", [])),
            outputs=tuple((o["to"], o["rows"]) for o in s.get("outputs", []))))
    return Network(tuple(subs), k=int(doc.get("k", 2)), params=params)


def network_to_doc(net):
    subs = []
    for s in net.subsystems:
        d = {"id": s.id, **system_to_doc(s.sys)}
        d["inputs"] = [{"from": j, "width": w} for j, w in s.inputs]
        d["outputs"] = [{"to": j, "rows": list(r)} for j, r in s.outputs]
        subs.append(d)
    return {"k": net.k, "params": dict(net.params), "subsystems": subs}


def _clean(obj):
    """Make report dicts JSON-safe (numpy scalars, nested gains)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, _ssf.LinearGains):
        return gains_to_doc(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def gains_to_doc(g):
    return {"a": g.a, "h": g.h, "r_e": g.r_e, "r_i": g.r_i, "convention": g.convention}


def gains_from_doc(doc):
    return _ssf.LinearGains(a=float(doc["a"]), h=float(doc["h"]), r_e=float(doc["r_e"]),
                            r_i=float(doc["r_i"]),
                            convention=doc.get("convention", _ssf.NORM_CONVENTION))


def abstraction_to_doc(res, sys=None, sid=None, params=None):
    c = res.ssf
    doc = {
        "id": sid,
        "params": dict(params or {}),
        "abs_sys": system_to_doc(res.abs_sys),
        "ssf": {"M": to_list(c.M), "K": to_list(c.K), "P": to_list(c.P), "Q": to_list(c.Q),
                "S": to_list(c.S), "R_tilde": to_list(c.R_tilde), "kappa_hat": c.kappa_hat,
                "pi": c.pi, "provenance": _clean(c.provenance)},
        "gains": gains_to_doc(res.gains),
        "bp": None if res.bp is None else {"P_hat": to_list(res.bp.P_hat),
                                           "G": to_list(res.bp.G), "F": to_list(res.bp.F)},
        "steps": _clean(res.log),
        "verification": _clean({k: v for k, v in res.verification.items() if k != "gains"}),
    }
    if sys is not None:
        doc["sys"] = system_to_doc(sys)
    return doc


def abstraction_from_doc(doc):
    abs_sys = system_from_doc(doc["abs_sys"])
    s = doc["ssf"]
    P = mat(s["P"])
    n, nh = P.shape
    m = len(s["K"]) if s["K"] else 0
    if "sys" in doc:
        m = system_from_doc(doc["sys"]).m
    cert = _ssf.QuadraticSsf(
        M=mat(s["M"], rows=n, cols=n), K=mat(s["K"], rows=m, cols=n), P=P,
        Q=mat(s["Q"], rows=m, cols=nh), S=mat(s["S"], rows=m, cols=abs_sys.p),
        R_tilde=mat(s["R_tilde"], rows=m, cols=abs_sys.m), kappa_hat=float(s["kappa_hat"]),
        pi=float(s["pi"]), provenance=s.get("provenance", {}))
    bp = None
    if doc.get("bp"):
        b = doc["bp"]
        bp = BehaviorPreservingData(P_hat=mat(b["P_hat"], rows=nh, cols=n),
                                    G=mat(b["G"], rows=n, cols=n - nh),
                                    F=mat(b["F"], rows=n - nh, cols=n))
    res = AbstractionResult(abs_sys=abs_sys, ssf=cert, gains=gains_from_doc(doc["gains"]),
                            bp=bp, log=doc.get("steps", []),
                            verification=doc.get("verification", {}))
    sys = system_from_doc(doc["sys"]) if "sys" in doc else None
    return res, sys


def certificate_to_doc(cert, abstractions=None, network=None):
    doc = {
        "ids": list(cert.ids), "mu": cert.mu.tolist(), "Lambda": cert.Lambda.tolist(),
        "Delta": cert.Delta.tolist(), "spectral_radius": cert.radius, "k": cert.k,
        "triangle_mode": cert.triangle_mode, "paper_example_mode": cert.paper_example_mode,
        "zero_input": list(cert.zero_input),
        "gains": {i: gains_to_doc(g) for i, g in cert.gains.items()},
        "slopes": {"literal": dict(cert.literal), "paper_example_mode": dict(cert.example_mode)},
        "active_slopes": "paper_example_mode" if cert.paper_example_mode else "literal",
    }
    if abstractions is not None:
        doc["abstractions"] = {
            i: abstraction_to_doc(abstractions[i], None if network is None else network[i].sys, i)
            for i in cert.ids}
    if network is not None:
        doc["network"] = network_to_doc(network)
    return doc


def certificate_from_doc(doc):
    cert = CompositionCertificate(
        ids=tuple(doc["ids"]), mu=np.array(doc["mu"], dtype=float),
        Lambda=np.array(doc["Lambda"], dtype=float), Delta=np.array(doc["Delta"], dtype=float),
        radius=float(doc["spectral_radius"]),
        gains={i: gains_from_doc(g) for i, g in doc["gains"].items()},
        literal=dict(doc["slopes"]["literal"]),
        example_mode=dict(doc["slopes"]["paper_example_mode"]), k=int(doc["k"]),
        triangle_mode=bool(doc["triangle_mode"]),
        paper_example_mode=bool(doc["paper_example_mode"]),
        zero_input=tuple(doc.get("zero_input", ())))
    abstractions = None
    if "abstractions" in doc:
        abstractions = {i: abstraction_from_doc(d)[0] for i, d in doc["abstractions"].items()}
    return cert, abstractions


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from None


def dump_json(doc, path):
    # Python's float repr is the shortest string that round-trips exactly.
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=1, sort_keys=False)
        fh.write("\n")


def load_matrix_csv(path):
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    return a
