"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 infeasible prior set,
3 numerical failure.  Each command writes its outputs atomically and a
manifest ``<out>.manifest.json`` recording version, seed and config hash.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import io as rio
from .errors import (
    ConfigurationError,
    InfeasibleProblemError,
    NumericalError,
    RafError,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*args, **kw)

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def _manifest_path(out) -> str:
    return os.fspath(out) + ".manifest.json"


def _emit_manifest(command, config, seed, outputs):
    outputs = [o for o in outputs if o]
    doc = rio.manifest(command, config, seed, outputs)
    rio.write_json(_manifest_path(outputs[0]), doc)


def _load_config(path) -> dict:
    if path is None:
        return {}
    doc = rio.read_json(path)
    doc.pop("format_version", None)
    return doc


def _constraints_from(cfg):
    from .solver import ConstraintSet

    if isinstance(cfg, list):
        return ConstraintSet.from_list(cfg)
    return ConstraintSet.from_list(cfg.get("priors") or [])


def _region_from(doc):
    from .sampling import PoleRegion

    doc = doc.get("region", doc)
    return PoleRegion.from_dict({k: v for k, v in doc.items() if k not in ("format_version", "kind")})


def _parse_complex_list(text):
    if text is None:
        return []
    out = []
    for tok in text.split(","):
        tok = tok.strip().replace(" ", "")
        if tok:
            out.append(complex(tok.replace("i", "j")))
    return out


# ---------------------------------------------------------------- commands
def cmd_sample(a):
    from .sampling import sample_poles

    doc = rio.read_json(a.region)
    region = _region_from(doc)
    ps = sample_poles(region, a.M, a.seed)
    rio.write_poleset(a.out, ps)
    _emit_manifest("sample", {"region": region.to_dict(), "M": a.M}, a.seed, [a.out])
    print(f"sampled {ps.n_groups} groups ({len(ps)} poles) -> {a.out}", file=sys.stderr)


def cmd_fit(a):
    from .dictionary import build_design
    from .solver import compile_problem, prune, solve

    data = rio.read_timeseries_csv(a.data)
    ps = rio.read_poleset(a.dict)
    cfg = _load_config(a.config) if a.config else {}
    cs = _constraints_from(cfg)
    solver = dict(cfg.get("solver") or {}) if isinstance(cfg, dict) else {}
    lam1 = a.lambda1 if a.lambda1 is not None else float(solver.pop("lambda1", 0.0))
    solver.pop("lambda1", None)
    lam2 = a.lambda2 if a.lambda2 is not None else solver.pop("lambda2", None)
    solver.pop("lambda2", None)
    fit_D = a.fit_D or bool(solver.pop("fit_D", False))
    solver.pop("fit_D", None)
    reweighted = bool(solver.pop("reweighted", False))
    from .pipeline import _SOLVER_KEYS

    extra = set(solver) - _SOLVER_KEYS
    if extra:
        raise ConfigurationError(f"unknown solver settings {sorted(extra)}")
    d = build_design(ps, data.u)
    cp = compile_problem(d, data, lam1, lam2, cs, fit_D)
    model = solve(cp, **solver)
    if reweighted and lam1 > 0:
        wn = d.group_norms(d.residues_to_coefficients(model.residues))
        cp = compile_problem(d, data, lam1, lam2, cs, fit_D, group_weights=1.0 / (wn + 1e-4))
        model = solve(cp, **solver)
        model.diagnostics["reweighted"] = True
    if a.prune is not None:
        model, _ = prune(model, cp, a.prune, **solver)
    from .pipeline import constraint_residuals
    from .solver import budgets

    rio.write_model(a.out, model, {"cone_summary": cp.cone_summary(),
                                   "budgets": budgets(model),
                                   "constraint_residuals": constraint_residuals(model, cs, data)})
    config = {"dict": ps.n_groups, "priors": cs.to_list(), "lambda1": lam1, "lambda2": lam2,
              "fit_D": fit_D, "solver": solver, "prune": a.prune}
    _emit_manifest("fit", config, ps.seed, [a.out])
    diag = model.diagnostics
    print(f"{diag.get('status')} in {diag.get('iterations')} iterations, residual "
          f"{diag.get('residual_norm', float('nan')):.4g} -> {a.out}", file=sys.stderr)


def cmd_diagnose(a):
    from .geometry import coherence_report

    if (a.dict is None) == (a.model is None):
        raise ConfigurationError("diagnose needs exactly one of --dict or --model")
    if a.dict is not None:
        poles = rio.read_poleset(a.dict).representatives
    else:
        m = rio.read_model(a.model)
        poles = m.active().poles.representatives
    supports = None
    if a.support:
        supports = [np.array([int(v) for v in a.support.split(",")])]
    rep = coherence_report(poles, a.T, supports)
    rio.write_json(a.out, dict(rep.to_dict(), kind="coherence_report"))
    outputs = [a.out]
    if a.csv:
        rio.write_csv(a.csv, ["i", "j", "mu_T", "mu_inf"], rep.table_rows())
        outputs.append(a.csv)
    _emit_manifest("diagnose", {"T": a.T, "n_poles": len(poles), "support": a.support}, None,
                   outputs)
    print(f"max coherence {rep.mu_max:.4g} over {len(poles)} poles -> {a.out}", file=sys.stderr)


def cmd_kernel(a):
    from . import kernel_lab as kl
    from .sampling import PoleRegion

    region = (_region_from(rio.read_json(a.region)) if a.region
              else PoleRegion.disk(a.rho, include_real_axis=False, radial_law="uniform-in-area"))
    out = a.out or f"kernel_{a.experiment}.csv"
    config = {"experiment": a.experiment, "M": a.M, "T": a.T, "trials": a.trials,
              "region": region.to_dict()}
    if a.experiment == "hoeffding":
        rep = kl.hoeffding_experiment(region, a.M, a.T, a.trials, seed=a.seed)
        rio.write_csv(out, ["eps", "empirical_rate", "rate_sigma", "bound"], rep.curve_rows())
        outputs = [out]
        if a.json:
            rio.write_json(a.json, dict(rep.to_dict(), kind="hoeffding_report"))
            outputs.append(a.json)
        msg = f"mean max deviation {rep.mean_deviation:.4g}"
    elif a.experiment == "psd":
        rng = np.random.Generator(np.random.PCG64(a.seed))
        rows = []
        for k in range(a.trials):
            from .sampling import draw_iid

            p = draw_iid(region, a.M, rng)
            mu = kl.AtomicMeasure(p, rng.random(a.M))
            K = kl.kernel_atomic(mu, a.T)
            _, dmin = kl.radius_defect(K, mu.rho)
            rows.append({"trial": k, "trace": K.trace, "min_eig": K.min_eig(),
                         "defect_min_eig": dmin, "rho": mu.rho})
        rio.write_csv(out, ["trial", "trace", "min_eig", "defect_min_eig", "rho"], rows)
        outputs = [out]
        worst = min(r["min_eig"] / r["trace"] for r in rows)
        msg = f"worst min_eig/trace {worst:.3g}"
    elif a.experiment == "counterexample":
        rep = kl.counterexample_check(T=a.T)
        rio.write_json(out, dict(rep.to_dict(), kind="counterexample_report"))
        outputs = [out]
        msg = f"counterexample {'confirmed' if rep.passed else 'NOT confirmed'}"
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown experiment {a.experiment}")
    _emit_manifest("kernel", config, a.seed, outputs)
    print(f"{msg} -> {out}", file=sys.stderr)


def cmd_pick(a):
    from .kernel_lab import PickData, blaschke, pick_matrix

    if a.data:
        doc = rio.read_json(a.data)
        nodes = [complex(*z) for z in doc["nodes"]]
        values = [complex(*w) for w in doc["values"]]
    else:
        nodes = _parse_complex_list(a.nodes)
        if a.blaschke is not None:
            values = list(blaschke(_parse_complex_list(a.blaschke), np.array(nodes)))
        else:
            values = _parse_complex_list(a.values)
    P, psd = pick_matrix(PickData(nodes, values))
    lam = float(np.linalg.eigvalsh(P).min())
    rio.write_json(a.out, {"kind": "pick_report", "psd": psd, "min_eig": lam,
                           "nodes": [[z.real, z.imag] for z in np.asarray(nodes, complex)],
                           "values": [[w.real, w.imag] for w in np.asarray(values, complex)],
                           "matrix_real": P.real.tolist(), "matrix_imag": P.imag.tolist()})
    _emit_manifest("pick", {"n": len(nodes)}, None, [a.out])
    print(f"Pick matrix {'PSD' if psd else 'not PSD'} (min eig {lam:.4g}) -> {a.out}",
          file=sys.stderr)


def _read_signal(path):
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    head = [c.strip() for c in rows[0]]
    if "h" not in head:
        raise ConfigurationError(f"{path}: needs a column named 'h'")
    k = head.index("h")
    return np.array([float(r[k]) for r in rows[1:]])


def cmd_gauge(a):
    from .dictionary import atomic_gauge, build_impulse

    ps = rio.read_poleset(a.dict)
    h = _read_signal(a.signal)
    d = build_impulse(ps, len(h))
    res = atomic_gauge(h, d, tol=a.tol)
    doc = {"kind": "gauge_report", "value": res.value, "in_span": res.in_span,
           "relative_residual": res.residual, "info": res.info}
    if res.coefficients is not None:
        doc["coefficients"] = [[c.real, c.imag] for c in res.coefficients]
    rio.write_json(a.out, doc)
    _emit_manifest("gauge", {"tol": a.tol, "T": len(h)}, ps.seed, [a.out])
    print(f"gauge {res.value:.6g} (in span: {res.in_span}) -> {a.out}", file=sys.stderr)


def cmd_simulate(a):
    from .dictionary import TimeSeries
    from .solver import simulate

    model = rio.read_model(a.model)
    sources = [a.input is not None, a.impulse is not None, a.step is not None]
    if sum(sources) != 1:
        raise ConfigurationError("simulate needs exactly one of --input, --impulse, --step")
    if a.input is not None:
        u = rio.read_timeseries_csv(a.input).u
    elif a.impulse is not None:
        u = np.zeros(a.impulse)
        u[0] = 1.0
    else:
        u = np.ones(a.step)
    y = simulate(model, u)
    rio.write_timeseries_csv(a.out, TimeSeries(u, y))
    _emit_manifest("simulate", {"N": len(u)}, None, [a.out])
    print(f"simulated {len(u)} samples -> {a.out}", file=sys.stderr)


def cmd_scenario(a):
    from .pipeline import ScenarioParams, make_scenario, scenario_priors

    cfg = _load_config(a.config)
    params = ScenarioParams.from_dict(cfg.get("scenario") or {}) if cfg else ScenarioParams()
    over = {"N": a.N, "snr_db": a.snr, "bandwidth": a.bandwidth, "seed": a.seed}
    sc = make_scenario(params, **over)
    rio.write_timeseries_csv(a.out, sc.data)
    outputs = [a.out]
    if a.truth:
        rio.write_model(a.truth, sc.truth, {"scenario": sc.params.to_dict()})
        outputs.append(a.truth)
    if a.priors:
        region, cs = scenario_priors(sc.truth, a.prior_kind)
        rio.write_json(a.priors, {"region": region.to_dict(), "priors": cs.to_list()})
        outputs.append(a.priors)
    _emit_manifest("scenario", sc.params.to_dict(), sc.params.seed, outputs)
    print(f"scenario with {sc.params.N} samples -> {a.out}", file=sys.stderr)


def cmd_pipeline(a):
    from dataclasses import replace

    from .pipeline import PipelineConfig, run

    cfg = PipelineConfig.from_dict(_load_config(a.config))
    data = rio.read_timeseries_csv(a.data) if a.data else None
    if a.rounds is not None:
        cfg = replace(cfg, rounds=a.rounds)
    seeds = [cfg.seed + k for k in range(a.seeds)]
    reports = []
    last = None
    for s in seeds:
        c = replace(cfg, seed=s)
        if c.scenario is not None and data is None and a.seeds > 1:
            c = replace(c, scenario=replace(c.scenario, seed=c.scenario.seed + (s - cfg.seed)))
        res = run(c, data=data)
        reports.append(res.report)
        last = res
    doc = reports[0] if len(reports) == 1 else {"seeds": seeds, "runs": reports}
    rio.write_json(a.out, dict(doc, kind="pipeline_report"))
    outputs = [a.out]
    if a.model:
        rio.write_model(a.model, last.model)
        outputs.append(a.model)
    _emit_manifest("pipeline", cfg.to_dict(), cfg.seed, outputs)
    rounds = reports[-1]["rounds"]
    print(f"{len(rounds)} round(s), final objective {rounds[-1]['objective']:.6g} -> {a.out}",
          file=sys.stderr)


# ---------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rafid", description="Randomized atomic feature identification toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="sample a pole dictionary from a region")
    s.add_argument("--region", required=True, help="JSON file with a region object")
    s.add_argument("--M", type=int, required=True, help="number of pole groups")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("fit", help="fit residues over a dictionary")
    s.add_argument("--data", required=True, help="CSV with header t,u,y")
    s.add_argument("--dict", required=True, help="dictionary JSON from 'sample'")
    s.add_argument("--config", help="JSON with 'priors' and 'solver' sections")
    s.add_argument("--lambda1", type=float)
    s.add_argument("--lambda2", type=float)
    s.add_argument("--fit-D", dest="fit_D", action="store_true", help="fit the feedthrough")
    s.add_argument("--prune", type=float, help="prune with this relative tolerance and refit")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("diagnose", help="coherence and Gershgorin report")
    s.add_argument("--dict")
    s.add_argument("--model", help="use the active poles of a model")
    s.add_argument("--T", type=int, required=True, help="horizon")
    s.add_argument("--support", help="comma-separated group indices for the Gershgorin check")
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="pairwise coherence table")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("kernel", help="kernel experiments")
    s.add_argument("--experiment", choices=["hoeffding", "psd", "counterexample"],
                   required=True)
    s.add_argument("--M", type=int, default=1000)
    s.add_argument("--T", type=int, default=20)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rho", type=float, default=0.9, help="disk radius when no region is given")
    s.add_argument("--region", help="JSON region (default: uniform disk of radius --rho)")
    s.add_argument("--out", help="CSV (or JSON for counterexample); default kernel_<exp>.csv")
    s.add_argument("--json", help="also write the full report as JSON")
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("pick", help="Pick matrix PSD test")
    s.add_argument("--data", help="JSON with 'nodes' and 'values' as [re, im] pairs")
    s.add_argument("--nodes", help="comma-separated complex nodes, e.g. 0,0.5+0.1i")
    s.add_argument("--values", help="comma-separated complex values")
    s.add_argument("--blaschke", help="zeros of a Blaschke product generating the values")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pick)

    s = sub.add_parser("gauge", help="finite atomic gauge of an impulse response")
    s.add_argument("--dict", required=True)
    s.add_argument("--signal", required=True, help="CSV with a column 'h'")
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gauge)

    s = sub.add_parser("simulate", help="simulate a model")
    s.add_argument("--model", required=True)
    s.add_argument("--input", help="CSV t,u,y (y ignored)")
    s.add_argument("--impulse", type=int, help="impulse input of this length")
    s.add_argument("--step", type=int, help="step input of this length")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pipeline", help="run the full identification loop")
    s.add_argument("--config", required=True)
    s.add_argument("--data", help="CSV t,u,y (overrides config data sources)")
    s.add_argument("--rounds", type=int)
    s.add_argument("--seeds", type=int, default=1, help="run this many consecutive seeds")
    s.add_argument("--out", required=True, help="round report JSON")
    s.add_argument("--model", help="final model JSON")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("scenario", help="generate the two-mode synthetic data set")
    s.add_argument("--config", help="JSON with a 'scenario' section")
    s.add_argument("--N", type=int)
    s.add_argument("--snr", type=float, help="SNR in dB (inf for noiseless)")
    s.add_argument("--bandwidth", type=float, help="input cutoff in rad/sample")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="CSV t,u,y")
    s.add_argument("--truth", help="ground-truth model JSON")
    s.add_argument("--priors", help="write region and priors config for the scenario")
    s.add_argument("--prior-kind", dest="prior_kind", default="full",
                   choices=["full", "sector", "stability"])
    s.set_defaults(func=cmd_scenario)
    return p


def _version():
    from . import __version__

    return __version__


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
        return EXIT_OK
    except InfeasibleProblemError as exc:
        rep = dict(exc.report or {})
        blocks = rep.pop("blocks", None)
        if blocks:
            names = sorted({b.split("[")[0] for b in blocks})
            rep["blocks"] = ", ".join(names)
        print(f"rafid: infeasible: {exc} {rep}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"rafid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RafError, ValueError, KeyError, OSError) as exc:
        print(f"rafid: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
