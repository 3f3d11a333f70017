"""Command line front end: ``jlssabs {abstract,compose,bounds,simulate,verify}``.

Exit codes
----------
0  success
1  unreadable input, malformed document or invalid option
2  a construction or certificate condition failed (the message names the step)
3  the small-gain condition fails (the spectral radius is printed)
4  a simulated ensemble is not dominated by its certified bound
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import bounds as bd
from . import io
from . import simulate as sim
from . import ssf as _ssf
from .abstraction import build_abstraction
from .composition import build_gain_matrices, compose, literal_slopes, example_mode_slopes, \
    small_gain_margin
from .errors import (CertificateInvalid, ConditionViolated, ConfigInvalid, Infeasible,
                     InvalidArgs, JlssError)
from .linalg import spectral_radius

log = logging.getLogger("jlssabs")

EXIT_OK, EXIT_INVALID, EXIT_CONDITION, EXIT_SMALL_GAIN, EXIT_DOMINANCE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; 2 is reserved for condition failures here.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _params(pairs):
    out = {}
    for item in pairs or []:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise ConfigInvalid(f"--param expects NAME=VALUE, got {item!r}")
        out[name.strip()] = io.eval_expr(value, out)
    return out


def _floats(text, name):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid(f"{name}: expected comma separated numbers, got {text!r}") from None


def _write(doc, path):
    if path is None or path == "-":
        json.dump(io._clean(doc), sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        io.dump_json(doc, path)


# ---------------------------------------------------------------- abstract

def _load_system(path, sid, params):
    doc = io.load_json(path)
    if "subsystems" in doc:
        if sid is None:
            ids = [str(s.get("id")) for s in doc["subsystems"]]
            raise ConfigInvalid(f"{path} is a network; choose a subsystem with --id {ids}")
        net = io.network_from_doc(doc, params)
        try:
            return net[sid].sys, dict(net.params)
        except KeyError:
            raise ConfigInvalid(f"no subsystem {sid!r} in {path}") from None
    merged = dict(doc.get("params", {}), **params)
    return io.system_from_doc(doc, merged), merged


def cmd_abstract(args):
    params = _params(args.param)
    sys_, params = _load_system(args.system, args.id, params)
    P = io.load_matrix_csv(args.P)
    mode, B_hat = args.bhat, None
    if mode.startswith("file:"):
        B_hat = io.load_matrix_csv(mode[len("file:"):])
        mode = "user"
    elif mode not in ("identity", "behavior"):
        raise ConfigInvalid(f"--bhat must be identity, behavior or file:PATH, got {mode!r}")
    res = build_abstraction(sys_, P, args.kappa_hat, pi=args.pi, bhat_mode=mode, B_hat=B_hat,
                            method=args.method, verify_trials=args.trials, seed=args.seed)
    doc = io.abstraction_to_doc(res, sys_, args.id, params)
    _write(doc, args.out)
    g = res.gains
    print(f"abstraction {args.id or ''}: n_hat={res.abs_sys.n}, a={g.a:.6g}, h={g.h:.6g}, "
          f"r_e={g.r_e:.6g}, r_i={g.r_i:.6g}, worst slack "
          f"{res.verification.get('worst_slack', float('nan')):.3g}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- compose

def _load_gains_file(path):
    doc = io.load_json(path)
    return {str(i): io.gains_from_doc(dict({"r_i": 0.0}, **g)) for i, g in doc.items()}


def cmd_compose(args):
    params = _params(args.param)
    net = io.network_from_doc(io.load_json(args.network), params)
    abstractions = {}
    for path in args.abstractions:
        res, _ = io.abstraction_from_doc(io.load_json(path))
        sid = io.load_json(path).get("id")
        if sid is None:
            raise ConfigInvalid(f"{path}: abstraction has no subsystem id")
        abstractions[str(sid)] = res
    gains = {i: r.gains for i, r in abstractions.items()}
    if args.gains:
        gains.update(_load_gains_file(args.gains))
    mu = None if args.mu is None else np.array(_floats(args.mu, "--mu"))
    try:
        cert = compose(net, gains, mu=mu, triangle_mode=args.triangle_mode,
                       paper_example_mode=args.paper_example_mode,
                       zero_input=tuple(args.zero_input or ()))
    except Infeasible as exc:
        print(f"small-gain condition fails: spectral radius {exc.radius:.17g}")
        raise
    complete = set(abstractions) >= set(net.ids)
    doc = io.certificate_to_doc(cert, abstractions if complete else None, net)
    _write(doc, args.out)
    print(f"certified: spectral radius {cert.radius:.17g}, mu {cert.mu.tolist()}, "
          f"slopes {dict(cert.literal if not cert.paper_example_mode else cert.example_mode)}",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- bounds

def _slopes_from_doc(doc):
    if "mu" in doc:
        cert, _ = io.certificate_from_doc(doc)
        return bd.GainSlopes.from_certificate(cert)
    if "gains" in doc and "ssf" in doc:
        return bd.GainSlopes.from_gains(io.gains_from_doc(doc["gains"]))
    raise ConfigInvalid("expected a certificate or abstraction document")


def cmd_bounds(args):
    g = _slopes_from_doc(io.load_json(args.certificate))
    horizon = args.T if args.T is not None else args.horizon
    if not (args.epsilon > 0):
        raise InvalidArgs(f"--epsilon must be positive, got {args.epsilon}")
    if not (horizon > 0 and args.dt > 0):
        raise InvalidArgs("--T and --dt must be positive")
    t = np.linspace(0.0, horizon, int(round(horizon / args.dt)) + 1)
    eps_const = g.r_e * args.u_sup_sq + g.r_i * args.w_sup
    curves = bd.bound_curves(g, t, args.EV0, args.u_sup_sq, args.w_sup, eps=args.epsilon,
                             eps_const=eps_const, V0=args.V0)
    bd.write_bounds_csv(sys.stdout if args.out in (None, "-") else args.out, curves)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _load_initial(path):
    if path is None:
        return None, None
    doc = io.load_json(path)
    conv = lambda d: None if d is None else {str(k): np.asarray(v, dtype=float) for k, v in d.items()}
    return conv(doc.get("x0")), conv(doc.get("xh0"))


def dominance_report(ens, g, u_sup_sq, eps_list, T_list, w_mismatch=0.0):
    """Compare an ensemble with its certified bounds.

    The moment check fails when ``mean - 3 SE`` exceeds the bound at any grid
    point; the exceedance check when the empirical fraction minus three
    binomial standard errors exceeds the sup-probability bound.
    """
    V0 = ens.info["V0"]
    mean, se = sim.estimate_moment_gap(ens)
    bound = np.asarray(bd.moment_bound(g, V0, u_sup_sq, w_mismatch, ens.t)) * np.ones_like(mean)
    excess = mean - 3.0 * se - bound
    tol = 1e-12 * np.maximum(1.0, bound)
    moment_ok = bool(np.all(excess <= tol))
    eps_const = g.r_e * u_sup_sq + g.r_i * w_mismatch
    exceed = []
    for eps in eps_list:
        for T in T_list:
            frac, (lo, hi) = sim.estimate_sup_exceedance(ens, eps, T)
            b = bd.sup_probability_bound(g, V0, eps, T, eps_const)
            se_p = math.sqrt(frac * (1.0 - frac) / ens.trials)
            exceed.append({"epsilon": eps, "T": T, "fraction": frac, "wilson_95": [lo, hi],
                           "bound": b, "ok": bool(frac - 3.0 * se_p <= b + 1e-12)})
    worst = int(np.argmax(excess))
    return bound, {
        "V0": V0, "u_sup_sq": u_sup_sq,
        "slopes": {"a": g.a, "h": g.h, "r_e": g.r_e, "r_i": g.r_i, "k": g.k},
        "moment": {"ok": moment_ok, "worst_t": float(ens.t[worst]),
                   "worst_mean_minus_3se": float(mean[worst] - 3.0 * se[worst]),
                   "bound_at_worst": float(bound[worst]),
                   "max_mean_over_bound": float(np.max(mean / np.maximum(bound, 1e-300)))},
        "exceedance": exceed,
        "ok": moment_ok and all(e["ok"] for e in exceed),
    }


def cmd_simulate(args):
    params = _params(args.param)
    net = io.network_from_doc(io.load_json(args.network), params)
    cert, abstractions = io.certificate_from_doc(io.load_json(args.certificate))
    if abstractions is None:
        raise ConfigInvalid("certificate does not embed the subsystem abstractions")
    if list(cert.ids) != list(net.ids):
        raise ConfigInvalid(f"certificate ids {list(cert.ids)} differ from network ids {net.ids}")
    inputs = None
    if args.inputs not in (None, "none", "-"):
        inputs = sim.read_input_csv(args.inputs)
    x0, xh0 = _load_initial(args.initial)
    box = None
    if args.box:
        box = (np.array(_floats(args.box[0], "--box")), np.array(_floats(args.box[1], "--box")))
    cfg = sim.SimConfig(dt=args.dt, horizon=args.horizon, trials=args.trials,
                        master_seed=args.seed, inputs=inputs, x0=x0, xh0=xh0,
                        record_every=args.record_every, store_paths=False,
                        shared_drivers=not args.independent_drivers, box=box)
    ens = sim.run_coupled(net, abstractions, cfg, cert)
    if "V0" not in ens.info:
        zeros = lambda dims: {i: np.zeros(d) for i, d in dims.items()}
        from .composition import composite_V
        xs = x0 or zeros({s.id: s.sys.n for s in net.subsystems})
        xhs = xh0 or zeros({i: abstractions[i].abs_sys.n for i in cert.ids})
        ens.info["V0"] = float(composite_V(cert, abstractions,
                                           np.concatenate([xs[i] for i in cert.ids]),
                                           np.concatenate([xhs[i] for i in cert.ids])))
    g = bd.GainSlopes.from_certificate(cert)
    usq = 0.0 if inputs is None else inputs.sup_norm_sq()
    T_list = [T for T in args.T if T <= args.horizon + 1e-12]
    bound, report = dominance_report(ens, g, usq, args.epsilon, T_list)
    report.update(trials=args.trials, dt=args.dt, horizon=args.horizon, seed=args.seed,
                  shared_drivers=cfg.shared_drivers,
                  slope_set="paper_example_mode" if cert.paper_example_mode else "literal")
    os.makedirs(args.out, exist_ok=True)
    sim.write_summary_csv(os.path.join(args.out, "summary.csv"), ens, bound)
    io.dump_json(report, os.path.join(args.out, "report.json"))
    m = report["moment"]
    print(f"moment bound {'dominates' if m['ok'] else 'VIOLATED'}: worst mean-3SE "
          f"{m['worst_mean_minus_3se']:.4g} vs bound {m['bound_at_worst']:.4g} at t={m['worst_t']:g}",
          file=sys.stderr)
    if not report["ok"]:
        print("dominance failure: the certified bound is below the simulated ensemble",
              file=sys.stderr)
        return EXIT_DOMINANCE
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _verify_abstraction(doc, trials, seed):
    res, sys_ = io.abstraction_from_doc(doc)
    if sys_ is None:
        raise ConfigInvalid("abstraction document does not embed its concrete system")
    c = res.ssf
    design = _ssf.check_design_inequalities(sys_, c.M, c.K, c.kappa_hat)
    rep = _ssf.verify_ssf(c, sys_, res.abs_sys, res.gains, trials=trials, seed=seed)
    try:
        fresh = _ssf.extract_gains(c, sys_, res.abs_sys)
        gains_match = all(np.isclose(getattr(fresh, f), getattr(res.gains, f), rtol=1e-9,
                                     atol=1e-12) for f in ("a", "h", "r_e", "r_i"))
    except CertificateInvalid:
        gains_match = False
    scale = max(1.0, float(np.abs(c.M).max()))
    design_ok = (design["con1_margin"] >= -1e-9 * scale
                 and design["con11_margin"] >= -1e-9 * scale)
    out = {"design": design, "design_ok": bool(design_ok), "gains_match": bool(gains_match),
           **{k: v for k, v in rep.items() if k != "gains"}}
    out["ok"] = bool(rep["ok"] and design_ok and gains_match)
    return out


def _verify_certificate(doc, trials, seed):
    cert, _ = io.certificate_from_doc(doc)
    report = {"subsystems": {}}
    ok_sub = True
    for sid, adoc in (doc.get("abstractions") or {}).items():
        r = _verify_abstraction(adoc, trials, seed)
        same = all(np.isclose(adoc["gains"][f], getattr(cert.gains[sid], f), rtol=1e-12)
                   for f in ("a", "h", "r_e", "r_i"))
        r["matches_certificate_gains"] = bool(same)
        r["ok"] = bool(r["ok"] and same)
        report["subsystems"][sid] = r
        ok_sub &= r["ok"]
    glist = [cert.gains[i] for i in cert.ids]
    if "network" in doc:
        net = io.network_from_doc(doc["network"])
        Lam, Delta = build_gain_matrices(net, cert.gains, cert.triangle_mode, cert.k)
        report["matrices_match"] = bool(np.allclose(Lam, cert.Lambda, rtol=1e-12)
                                        and np.allclose(Delta, cert.Delta, rtol=1e-12))
        ok_sub &= report["matrices_match"]
    h = np.diag(cert.Lambda)
    radius = spectral_radius(cert.Delta / h[:, None])
    margin = small_gain_margin(cert.Lambda, cert.Delta, cert.mu)
    zero = tuple(cert.ids.index(z) for z in cert.zero_input)
    lit = literal_slopes(cert.mu, cert.Lambda, cert.Delta, glist, cert.k, zero)
    pm = example_mode_slopes(cert.mu, cert.Lambda, cert.Delta, glist, cert.k, zero)
    slopes_ok = all(np.isclose(lit[k], cert.literal[k], rtol=1e-12) and
                    np.isclose(pm[k], cert.example_mode[k], rtol=1e-12) for k in lit)
    report.update(spectral_radius=radius, margin=margin.tolist(),
                  small_gain_ok=bool(np.all(margin < 0) and radius < 1.0),
                  slopes_ok=bool(slopes_ok))
    report["ok"] = bool(ok_sub and slopes_ok and report["small_gain_ok"])
    return report


def cmd_verify(args):
    doc = io.load_json(args.artifact)
    if "mu" in doc:
        report = _verify_certificate(doc, args.trials, args.seed)
        _write(report, args.out)
        if not report["small_gain_ok"]:
            print(f"small-gain condition fails: spectral radius {report['spectral_radius']:.17g}")
            return EXIT_SMALL_GAIN
    elif "ssf" in doc:
        report = _verify_abstraction(doc, args.trials, args.seed)
        _write(report, args.out)
    else:
        raise ConfigInvalid(f"{args.artifact}: neither an abstraction nor a certificate")
    if not report["ok"]:
        print("verification failed", file=sys.stderr)
        return EXIT_CONDITION
    print("verified", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="jlssabs", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("abstract", help="construct and certify a reduced-order abstraction")
    a.add_argument("system", help="system or network JSON")
    a.add_argument("P", help="CSV file holding the projection P (n rows)")
    a.add_argument("--id", help="subsystem id when SYSTEM is a network")
    a.add_argument("--kappa-hat", type=float, required=True)
    a.add_argument("--pi", type=float, default=None, help="defaults to kappa_hat / 2")
    a.add_argument("--bhat", default="identity", help="identity, behavior or file:PATH")
    a.add_argument("--method", choices=("auto", "lmi", "fallback"), default="auto")
    a.add_argument("--param", action="append", metavar="NAME=VALUE")
    a.add_argument("--trials", type=int, default=10_000, help="randomized verification samples")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_abstract)

    c = sub.add_parser("compose", help="certify a network by the small-gain condition")
    c.add_argument("network")
    c.add_argument("abstractions", nargs="*")
    c.add_argument("--gains", help="JSON mapping id to {a, h, r_e, r_i}; overrides abstractions")
    c.add_argument("--mu", help="comma separated weights (found automatically otherwise)")
    c.add_argument("--zero-input", nargs="*", metavar="ID")
    c.add_argument("--triangle-mode", action=argparse.BooleanOptionalAction, default=True)
    c.add_argument("--paper-example-mode", action="store_true",
                   help="use the worked-example slope variant (simplex decay, max input gain)")
    c.add_argument("--param", action="append", metavar="NAME=VALUE")
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_compose)

    b = sub.add_parser("bounds", help="tabulate the closed-form bounds")
    b.add_argument("certificate", help="certificate or abstraction JSON")
    b.add_argument("--EV0", type=float, required=True)
    b.add_argument("--V0", type=float, default=None, help="initial value for the sup bounds")
    b.add_argument("--u-sup-sq", type=float, default=0.0)
    b.add_argument("--w-sup", type=float, default=0.0,
                   help="sup of |w - wh|^k (zero for a closed network)")
    b.add_argument("--epsilon", type=float, default=1.0)
    b.add_argument("--T", type=float, default=None, help="grid horizon (same as --horizon)")
    b.add_argument("--horizon", type=float, default=15.0)
    b.add_argument("--dt", type=float, default=0.01)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("simulate", help="Monte Carlo check of a certificate")
    s.add_argument("network")
    s.add_argument("certificate")
    s.add_argument("inputs", nargs="?", default=None, help="abstract input CSV (t, u_1, ...)")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--horizon", type=float, default=15.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--initial", help="JSON with x0 and xh0 maps")
    s.add_argument("--box", nargs=2, metavar=("LO", "HI"), help="comma separated corners")
    s.add_argument("--epsilon", type=float, nargs="*", default=[0.5, 1.0, 2.0])
    s.add_argument("--T", type=float, nargs="*", default=[5.0, 15.0])
    s.add_argument("--record-every", type=int, default=10)
    s.add_argument("--independent-drivers", action="store_true")
    s.add_argument("--param", action="append", metavar="NAME=VALUE")
    s.add_argument("--out", default="sim_out")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="re-run all checks on a stored artifact")
    v.add_argument("artifact")
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except JlssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if getattr(exc, "radius", None) is not None:
            return EXIT_SMALL_GAIN
        if getattr(exc, "step", None) is not None or isinstance(
                exc, (ConditionViolated, CertificateInvalid, Infeasible)):
            return EXIT_CONDITION
        return EXIT_INVALID if isinstance(exc, ValueError) else EXIT_CONDITION
    except (OSError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID

if __name__ == "__main__":
    sys.exit(main())
