"""Command line harness.

Every subcommand reads an experiment configuration, runs one stage of the
analysis and prints a JSON report (keys sorted, so identical inputs give
byte-identical output).  Exit codes: 0 success, 2 failed bound or strict
refusal, 3 invalid input, 4 numerical failure.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import json
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .antiadiabatic import anti_adiabatic_commuting, anti_adiabatic_transform
from .checks import BoundCheck, _num, settle
from .config import ExperimentConfig, load_config, parse_scalar
from .diagonalization import (default_q, epsilon_threshold, progressive_diagonalize,
                              reduce_floquet)
from .errors import (BoundViolation, GapConditionViolated, NumericalError,
                     ShrinkGapError, SmallnessViolated, StepUnstable, ValidationError)
from .evolution import (EnergyTrace, fit_exponent, howland_sigma, initial_state,
                        linear_slope, propagate, theoretical_sigma, trivial_bound,
                        trivial_bound_check)
from .operator_classes import (BlockOperator, ClassParams, class_norm,
                               commutator_bound_check, schur_chain_checks)
from .spectral_basis import certify_gaps
from .time_periodic import family_class_norm, time_average

EXIT_OK, EXIT_BOUND, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3, 4


def _clean(obj):
    """Make nested results JSON-safe (numpy scalars, infinities)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2)


def _statuses(report):
    """All ``pass`` fields found anywhere in a report."""
    out = []
    if isinstance(report, dict):
        for k, v in report.items():
            if k == "pass" and isinstance(v, str):
                out.append(v)
            else:
                out += _statuses(v)
    elif isinstance(report, list):
        for v in report:
            out += _statuses(v)
    return out


def _checks(checks):
    return {c.name: c.to_dict() for c in checks}


def _model_meta(extra):
    return {k: v for k, v in extra.items() if k != "reparam"}


# subcommands ----------------------------------------------------------------------

def cmd_certify_gaps(cfg, args):
    basis, _, extra = cfg.build()
    cert = certify_gaps(basis)
    return {"basis": {"alpha": basis.alpha, "gamma": basis.gamma, "N": basis.N,
                      "dim": basis.dim}, "certificate": cert.to_dict(),
            "model": _model_meta(extra)}


def cmd_threshold(cfg, args):
    basis, _, extra = cfg.build()
    cert = certify_gaps(basis)
    pp = cfg["pipeline"]
    q = pp["q"] if pp["q"] is not None else default_q(pp["p"])
    thr = epsilon_threshold(pp["p"], q, cfg["model"]["period"], cert.c_H, cert.C_H)
    return {"p": pp["p"], "q": q, "T": cfg["model"]["period"], "c_H": cert.c_H,
            "C_H": cert.C_H, "threshold": thr}


def cmd_norms(cfg, args):
    basis, V, extra = cfg.build()
    cert = certify_gaps(basis)
    pp = cfg["pipeline"]
    p, g, n_grid = pp["p"], basis.gamma, pp["n_grid"]
    q = pp["q"] if pp["q"] is not None else default_q(p)
    thr = epsilon_threshold(p, q, V.period, cert.c_H, cert.C_H)
    norm = family_class_norm(V, (p, g), n_grid)
    if pp["strict"] and norm > thr:
        raise SmallnessViolated(
            f"||V||_(p,gamma) = {norm:.6e} exceeds the threshold {thr:.6e}", norm, thr)
    sh, comm = [], []
    grid = V.grid(n_grid) if V.K else [0.0]
    for t in grid:
        Vt = V.evaluate(t)
        sh.append(schur_chain_checks(Vt, ClassParams(p, g)))
        comm.append(commutator_bound_check(Vt, ClassParams(p, g), cert.C_H))
    worst = lambda cs: max(cs, key=lambda c: c.measured - c.bound)
    sh_checks = [worst([s[0] for s in sh]), worst([s[1] for s in sh])]
    checks = settle(sh_checks + [worst(comm), BoundCheck("epsilon_threshold", norm, thr)],
                    pp["strict"])
    sh_checks = checks[:2]
    return {"c_H": cert.c_H, "C_H": cert.C_H,
            "norm_p_gamma": {"p": p, "delta": g, "value": norm},
            "norm_p_plus_1_zero": {"p": p + 1, "delta": 0.0,
                                   "value": family_class_norm(V, (p + 1, 0.0), n_grid)},
            "threshold": thr, "q": q,
            "sh_bound_ok": all(c.passed for c in sh_checks),
            "bound_checks": _checks(checks), "model": _model_meta(extra)}


def cmd_antiadiabatic(cfg, args):
    basis, V, extra = cfg.build()
    pp = cfg["pipeline"]
    Y = BlockOperator.zeros(basis)
    if pp["commuting"]:
        res = anti_adiabatic_commuting(Y, V, pp["p"] + 1, tol=pp["tol"], strict=pp["strict"],
                                       n_grid=pp["n_grid"])
    else:
        res = anti_adiabatic_transform(Y, V, pp["p"], 1, tol=pp["tol"], strict=pp["strict"],
                                       n_grid=pp["n_grid"])
    return {"result": res.to_dict(), "commuting": pp["commuting"],
            "model": _model_meta(extra)}


def cmd_diagonalize(cfg, args):
    basis, V, extra = cfg.build()
    pp = cfg["pipeline"]
    Zbar = V.evaluate(pp["t0"])
    U, A, state = progressive_diagonalize(BlockOperator.zeros(basis), Zbar, pp["p"], 1,
                                          tol=pp["tol"], strict=pp["strict"])
    return {"t0": pp["t0"], "state": state.to_dict(),
            "norm_A": class_norm(A, (math.inf, basis.gamma)),
            "model": _model_meta(extra)}


def cmd_reduce(cfg, args):
    basis, V, extra = cfg.build()
    pp = cfg["pipeline"]
    res = reduce_floquet(V, pp["p"], pp["q"], tol=pp["tol"], strict=pp["strict"],
                         n_grid=pp["n_grid"])
    out = args.out
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "A.json").write_text(dumps(res.A.to_dict()))
        (out / "B.json").write_text(dumps(res.B.to_dict()))
    return {"pipeline": res.to_dict(), "model": _model_meta(extra)}


def _trace_sigma(cfg, basis):
    m, pp = cfg["model"], cfg["pipeline"]
    out = {"theoretical_sigma": None, "howland_sigma": None}
    try:
        out["theoretical_sigma"] = float(theoretical_sigma(m["alpha"], pp["p"]))
    except ValidationError:
        pass
    if m["model"] == "howland":
        try:
            out["howland_sigma"] = float(howland_sigma(m["alpha"], m["k_smooth"]))
        except ValidationError:
            pass
    return out


def cmd_evolve(cfg, args):
    basis, V, extra = cfg.build()
    ev = cfg["evolution"]
    psi_spec = dict(ev["psi0"])
    kind = psi_spec.pop("kind")
    psi0 = initial_state(basis, kind, seed=args.seed if args.seed is not None else ev["seed"],
                         **psi_spec)
    trace = propagate(basis, V, psi0, ev["n_periods"], ev["steps_per_period"],
                      ev["sample_phase"], config_ref=cfg.to_dict())
    fit_times = trace.times
    if extra.get("model") == "discrete":
        # map the reparametrized clock back to the original time axis
        fit_times = extra["reparam"].b_inv(trace.times * V.period) / cfg["model"]["period"]
    fit = fit_exponent((fit_times, trace.values), ev["fit_window"], ev["fit_method"])
    bound = trivial_bound(basis, V, psi0)
    tb = trivial_bound_check(trace, bound)
    slope = linear_slope(trace, ev["fit_window"])
    sig = _trace_sigma(cfg, basis)
    theory = sig["theoretical_sigma"]
    sigma_check = (BoundCheck("sigma_fit", fit.sigma_fit, theory + 0.10)
                   if theory is not None else None)
    slope_check = BoundCheck("trace_slope", slope, 0.5 * bound.slope) if bound.slope > 0 \
        else BoundCheck("trace_slope", abs(slope), 1e-9, slack=0.0)
    checks = [tb, slope_check] + ([sigma_check] if sigma_check else [])
    report = {"sigma_fit": fit.sigma_fit, "ci": fit.ci_halfwidth, "fit": fit.to_dict(),
              "sigma_theory": theory, "howland_sigma": sig["howland_sigma"],
              "trivial_slope": bound.slope, "trace_slope": slope,
              "trivial_bound": bound.to_dict(), "trace": trace.to_dict(),
              "bound_checks": _checks(checks),
              "pass": "pass" if all(c.passed for c in checks) else "fail",
              "model": _model_meta(extra)}
    report["trace"].pop("config", None)
    report["config"] = cfg.to_dict()
    out = args.out
    if out:
        out.mkdir(parents=True, exist_ok=True)
        csv = trace.to_csv()
        if extra.get("model") == "discrete":
            rows = csv.splitlines()
            rows[0] += ",t_original"
            rows[1:] = [f"{r},{t!r}" for r, t in zip(rows[1:], fit_times.tolist())]
            csv = "\n".join(rows) + "\n"
        (out / "trace.csv").write_text(csv)
        if args.emit_gnuplot:
            (out / "trace.gp").write_text(
                "set datafile separator ','\nset logscale xy\nset key top left\n"
                "plot 'trace.csv' using 1:2 skip 1 with lines title '<H>'\n")
    return report


def cmd_fit(cfg, args):
    if args.trace is None:
        raise ValidationError("fit needs --trace CSV")
    data = np.genfromtxt(args.trace, delimiter=",", names=True)
    ev = cfg["evolution"] if cfg else {"fit_window": 0.9, "fit_method": "envelope_lsq"}
    times = data["t_original"] if "t_original" in data.dtype.names else data["t"]
    fit = fit_exponent((times, data["energy"]), ev["fit_window"], ev["fit_method"])
    return {"fit": fit.to_dict(), "sigma_fit": fit.sigma_fit, "ci": fit.ci_halfwidth}


COMMANDS = {
    "norms": cmd_norms, "certify-gaps": cmd_certify_gaps,
    "antiadiabatic": cmd_antiadiabatic, "diagonalize": cmd_diagonalize,
    "reduce": cmd_reduce, "evolve": cmd_evolve, "fit": cmd_fit,
    "threshold": cmd_threshold,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shrinkgap",
        description="Operator-class calculus and energy-growth experiments for "
                    "periodically driven Hamiltonians with shrinking gaps.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, required=name != "fit")
        mode = sp.add_mutually_exclusive_group()
        mode.add_argument("--strict", dest="strict", action="store_true", default=None)
        mode.add_argument("--permissive", dest="strict", action="store_false")
        sp.add_argument("--out", type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--sweep", action="append", default=[], metavar="K=V1,V2,...")
        sp.add_argument("--emit-gnuplot", action="store_true")
        if name == "fit":
            sp.add_argument("--trace", type=Path)
    return parser


def _exit_code(exc):
    if isinstance(exc, (BoundViolation, SmallnessViolated, GapConditionViolated)):
        return EXIT_BOUND
    if isinstance(exc, ValidationError):
        return EXIT_INVALID
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def _error_report(exc):
    rep = {"error": type(exc).__name__, "message": str(exc)}
    if hasattr(exc, "field"):
        rep["field"] = exc.field
    if hasattr(exc, "step"):
        rep["step"] = exc.step
    if isinstance(exc, SmallnessViolated) and exc.threshold is not None:
        rep["measured"], rep["threshold"] = exc.measured, exc.threshold
    if isinstance(exc, StepUnstable):
        rep["period"] = exc.period
    if isinstance(exc, BoundViolation):
        rep["bound_checks"] = _checks(exc.checks)
    return rep


def _sweep_configs(cfg, sweeps):
    configs = [({}, cfg)]
    for spec in sweeps:
        if "=" not in spec:
            raise ValidationError(f"--sweep expects K=V1,V2,..., got {spec!r}")
        key, vals = spec.split("=", 1)
        values = [parse_scalar(v) for v in vals.split(",") if v]
        configs = [(dict(lbl, **{key: v}), c.with_override(key, v))
                   for lbl, c in configs for v in values]
    return configs


def _run_one(func, cfg, args):
    try:
        report = func(cfg, args)
    except ShrinkGapError as exc:
        return _error_report(exc), _exit_code(exc)
    statuses = _statuses(report)
    if "fail" in statuses or "warn" in statuses:
        return report, EXIT_BOUND
    return report, EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command]
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None and args.strict is not None:
            cfg = cfg.with_override("pipeline.strict", args.strict)
        if cfg is not None and args.out is None and cfg["output"]["dir"]:
            args.out = Path(cfg["output"]["dir"])
        runs = _sweep_configs(cfg, args.sweep) if args.sweep else [({}, cfg)]
    except ShrinkGapError as exc:
        print(dumps(_error_report(exc)))
        return _exit_code(exc)

    if len(runs) == 1:
        report, code = _run_one(func, runs[0][1], args)
    else:
        base_out = args.out

        def work(item):
            idx, (label, c) = item
            sub = argparse.Namespace(**vars(args))
            sub.out = base_out / f"run{idx:03d}" if base_out else None
            rep, code = _run_one(func, c, sub)
            return {"parameters": label, "report": rep, "exit_code": code}, code

        with ThreadPoolExecutor() as pool:
            results = list(pool.map(work, enumerate(runs)))
        report = {"sweep": [r for r, _ in results]}
        code = max(c for _, c in results)
    text = dumps(report)
    print(text)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{args.command}.json").write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
