"""End-to-end identification: sample, fit, prune, localize, resample, refit.

Also hosts the synthetic two-mode scenario and the scoring used to compare
prior configurations on it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .dictionary import TimeSeries, build_design
from .errors import ConfigurationError
from .geometry import cluster_active, pseudo_hyperbolic
from .sampling import REAL_SNAP, PoleRegion, PoleSet, sample_poles
from .solver import (
    Bibo,
    ConstraintSet,
    DcBound,
    FreqMask,
    RafModel,
    budgets,
    compile_problem,
    default_lambda2,
    frequency_response,
    prune,
    simulate,
    solve,
)
from .solver.constraints import (
    DcEqual,
    L1Tail,
    Monotone,
    RelativeDegree,
    Settling,
    TimeBox,
    WindowRMS,
)

#: merged dictionaries drop new poles this close (pseudo-hyperbolic) to existing ones
DEDUP_DISTANCE = 1e-3

DEFAULT_TRUTH_POLES = (0.9 * np.exp(0.4j), 0.88 * np.exp(0.8j))
DEFAULT_TRUTH_RESIDUES = (0.5, 0.5)


# ---------------------------------------------------------------- scenario
@dataclass(frozen=True)
class ScenarioParams:
    """Two-mode ground truth plus the data-generation settings.

    ``poles`` holds upper-half-plane representatives; each mode is a
    conjugate pair with residue ``residues[k]`` on the upper pole.
    ``bandwidth`` is the cutoff (rad/sample) of the order-4 Butterworth
    filter applied to white noise; ``bandwidth >= pi`` leaves it white.
    """

    poles: tuple = DEFAULT_TRUTH_POLES
    residues: tuple = DEFAULT_TRUTH_RESIDUES
    D: float = 0.0
    N: int = 100
    snr_db: float = 30.0
    bandwidth: float = 0.25
    seed: int = 0

    def truth(self) -> RafModel:
        ps = PoleSet.from_representatives(np.asarray(self.poles, dtype=complex))
        return RafModel(ps, np.asarray(self.residues, dtype=complex), self.D)

    def to_dict(self) -> dict:
        return {
            "poles": [[float(np.real(p)), float(np.imag(p))] for p in self.poles],
            "residues": [[float(np.real(c)), float(np.imag(c))] for c in self.residues],
            "D": self.D, "N": self.N, "snr_db": self.snr_db,
            "bandwidth": self.bandwidth, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioParams":
        d = dict(d)
        extra = set(d) - {"poles", "residues", "D", "N", "snr_db", "bandwidth", "seed"}
        if extra:
            raise ConfigurationError(f"unknown scenario keys {sorted(extra)}")
        if "poles" in d:
            d["poles"] = tuple(complex(*p) if isinstance(p, (list, tuple)) else complex(p)
                               for p in d["poles"])
        if "residues" in d:
            d["residues"] = tuple(complex(*c) if isinstance(c, (list, tuple)) else complex(c)
                                  for c in d["residues"])
        if "snr_db" in d:
            d["snr_db"] = float("inf") if d["snr_db"] is None else float(d["snr_db"])
        return cls(**d)


@dataclass
class Scenario:
    data: TimeSeries
    truth: RafModel
    clean: np.ndarray
    noise: np.ndarray
    params: ScenarioParams


def make_scenario(params: ScenarioParams | None = None, N: int | None = None,
                  snr_db: float | None = None, bandwidth: float | None = None,
                  seed: int | None = None) -> Scenario:
    """Simulate the two-mode system under low-pass noise input.

    Keyword arguments override the corresponding fields of ``params``.
    The system starts at rest at ``t = 0``; the input filter is run over a
    burn-in so the input itself is stationary.  The noise realization is
    rescaled so that ``var(clean) / var(noise)`` equals the requested SNR
    exactly; ``snr_db = inf`` gives noiseless data.
    """
    params = params or ScenarioParams()
    over = {k: v for k, v in dict(N=N, snr_db=snr_db, bandwidth=bandwidth, seed=seed).items()
            if v is not None}
    params = replace(params, **over)
    if params.N < 1:
        raise ConfigurationError("N must be >= 1")
    if not params.bandwidth > 0:
        raise ConfigurationError("bandwidth must be positive")
    truth = params.truth()
    if np.any(np.abs(truth.poles.poles) >= 1.0):
        raise ConfigurationError("scenario poles must lie strictly inside the unit disk")
    rng = np.random.Generator(np.random.PCG64(params.seed))
    burn = 200
    white = rng.standard_normal(params.N + burn)
    if params.bandwidth < np.pi:
        b, a = signal.butter(4, params.bandwidth / np.pi)
        u = signal.lfilter(b, a, white)[burn:]
    else:
        u = white[burn:]
    u = u / np.std(u)
    clean = simulate(truth, u)
    e = rng.standard_normal(params.N)
    if np.isfinite(params.snr_db):
        e = (e - e.mean()) / np.std(e) * np.std(clean) * 10 ** (-params.snr_db / 20.0)
    else:
        e = np.zeros(params.N)
    return Scenario(TimeSeries(u, clean + e), truth, clean, e, params)


def scenario_priors(truth: RafModel, kind: str = "full", n_grid: int = 32):
    """Region and constraint set for the two-mode scenario.

    ``"stability"`` uses the disk of radius 0.95 and no constraints;
    ``"sector"`` the sector radii [0.85, 0.95], angles [0.3, 1];
    ``"full"`` adds a BIBO budget of 55, ``|G(1)| <= 4`` and a gain mask
    ``1.3 |G_true| + 0.2`` on an ``n_grid`` frequency grid.
    """
    if kind == "stability":
        return PoleRegion.disk(0.95), ConstraintSet()
    sector = PoleRegion.sector(0.85, 0.95, 0.3, 1.0)
    if kind == "sector":
        return sector, ConstraintSet()
    if kind != "full":
        raise ConfigurationError(f"unknown prior kind {kind!r}")
    omega = np.linspace(0.0, np.pi, n_grid)
    gamma = 1.3 * np.abs(frequency_response(truth, omega)) + 0.2
    return sector, ConstraintSet([Bibo(55.0), DcBound(4.0), FreqMask(tuple(omega), tuple(gamma))])


# ---------------------------------------------------------------- scoring
def constraint_residuals(model: RafModel, constraints, data: TimeSeries | None = None) -> dict:
    """Amount by which ``model`` exceeds each constraint (0 when satisfied).

    Keys are the constraint type names; repeated types keep the largest
    violation.  Data-dependent records are skipped when ``data`` is None.
    """
    out = {}

    def put(name, v):
        out[name] = max(out.get(name, 0.0), float(max(v, 0.0)))

    p, c = model.expanded()
    r, a = np.abs(p), np.abs(c)
    yhat = simulate(model, data.u) if data is not None else None
    for rec in ConstraintSet(constraints or ()):
        if isinstance(rec, Bibo):
            put("bibo", np.sum(a / (1 - r)) - rec.h_max)
        elif isinstance(rec, Settling):
            put("settling", np.sum(a * r**rec.T_s) - rec.eps_h)
        elif isinstance(rec, L1Tail):
            put("l1_tail", np.sum(a * r**rec.T_s / (1 - r)) - rec.budget)
        elif isinstance(rec, DcBound):
            put("dc_bound", abs(budgets(model)["dc"]) - rec.G_max)
        elif isinstance(rec, DcEqual):
            put("dc_equal", abs(budgets(model)["dc"] - rec.g0))
        elif isinstance(rec, FreqMask):
            g = np.abs(frequency_response(model, rec.omega))
            put("freq_mask", np.max(g - np.asarray(rec.gamma)))
        elif isinstance(rec, RelativeDegree):
            h = model.impulse_response(max(rec.r_d, 1))
            h[0] += model.D
            put("relative_degree", np.abs(h[: rec.r_d]).max(initial=0.0))
        elif isinstance(rec, Monotone):
            put("monotone", -np.min(c.real, initial=0.0))
        elif isinstance(rec, TimeBox) and yhat is not None:
            eps = np.broadcast_to(np.asarray(rec.eps, dtype=float), yhat.shape)
            put("time_box", np.max(np.abs(data.y - yhat) - eps))
        elif isinstance(rec, WindowRMS) and yhat is not None:
            W = rec.weights(len(yhat))
            put("window_rms", np.linalg.norm(W * (data.y - yhat)) - rec.eta)
    return out


def score(model: RafModel, truth: RafModel, horizon: int, u=None, constraints=None) -> dict:
    """Impulse-response RMSE and simulation fit of ``model`` against ``truth``.

    The impulse response includes the feedthrough at ``t = 0``.  The fit
    is ``100 (1 - ||y_true - y_model|| / ||y_true - mean(y_true)||)`` on
    input ``u`` (a unit step of length ``horizon`` by default).
    """
    def impulse(m):
        h = m.impulse_response(horizon)
        h[0] += m.D
        return h

    err = impulse(model) - impulse(truth)
    u = np.ones(horizon) if u is None else np.asarray(u, dtype=float)
    yt, ym = simulate(truth, u), simulate(model, u)
    den = np.linalg.norm(yt - yt.mean())
    fit = 100.0 * (1.0 - np.linalg.norm(yt - ym) / den) if den > 0 else float("nan")
    out = {"impulse_rmse": float(np.sqrt(np.mean(err**2))), "fit_percent": float(fit)}
    if constraints is not None:
        out["constraint_residuals"] = constraint_residuals(model, constraints)
    return out


# ---------------------------------------------------------------- pipeline
@dataclass
class PipelineConfig:
    """Settings of :func:`run`.

    Data come from ``data`` (a :class:`TimeSeries` given to :func:`run`),
    from ``data_path`` (CSV) or from ``scenario``, in that order.
    """

    region: PoleRegion = field(default_factory=lambda: PoleRegion.sector(0.85, 0.95, 0.3, 1.0))
    M: int = 100
    seed: int = 0
    lambdas: tuple = (0.05,)
    lambda2: float | None = None
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    fit_D: bool = False
    rounds: int = 0
    local_radius: float = 0.1
    M_local: int = 20
    cluster_radius: float = 0.05
    prune_tol: float = 1e-3
    validation_fraction: float = 0.0
    data_path: str | None = None
    scenario: ScenarioParams | None = None
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        self.constraints = ConstraintSet(self.constraints)
        self.lambdas = tuple(float(v) for v in np.atleast_1d(self.lambdas))
        if self.rounds < 0:
            raise ConfigurationError("rounds must be >= 0")
        if not 0.0 < self.local_radius < 1.0:
            raise ConfigurationError("local_radius must lie in (0, 1)")
        if self.M < 1 or self.M_local < 0:
            raise ConfigurationError("need M >= 1 and M_local >= 0")
        if not self.lambdas or min(self.lambdas) < 0:
            raise ConfigurationError("lambda grid must be non-empty and nonnegative")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "region": self.region.to_dict(),
            "priors": self.constraints.to_list(),
            "solver": dict(self.solver, lambda2=self.lambda2, fit_D=self.fit_D),
            "pipeline": {
                "M": self.M, "seed": self.seed, "lambdas": list(self.lambdas),
                "rounds": self.rounds, "local_radius": self.local_radius,
                "M_local": self.M_local, "cluster_radius": self.cluster_radius,
                "prune_tol": self.prune_tol, "validation_fraction": self.validation_fraction,
                "data_path": self.data_path,
            },
            "scenario": self.scenario.to_dict() if self.scenario is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d.pop("format_version", None)
        extra = set(d) - {"region", "priors", "solver", "pipeline", "scenario"}
        if extra:
            raise ConfigurationError(f"unknown config sections {sorted(extra)}")
        kw = {}
        if d.get("region") is not None:
            kw["region"] = PoleRegion.from_dict(d["region"])
        kw["constraints"] = ConstraintSet.from_list(d.get("priors") or [])
        solver = dict(d.get("solver") or {})
        kw["lambda2"] = solver.pop("lambda2", None)
        kw["fit_D"] = bool(solver.pop("fit_D", False))
        if "lambda1" in solver:
            kw["lambdas"] = solver.pop("lambda1")
        kw["solver"] = solver
        pipe = dict(d.get("pipeline") or {})
        allowed = {"M", "seed", "lambdas", "rounds", "local_radius", "M_local",
                   "cluster_radius", "prune_tol", "validation_fraction", "data_path"}
        extra = set(pipe) - allowed
        if extra:
            raise ConfigurationError(f"unknown pipeline keys {sorted(extra)}")
        kw.update(pipe)
        if d.get("scenario") is not None:
            kw["scenario"] = ScenarioParams.from_dict(d["scenario"])
        return cls(**kw)


@dataclass
class PipelineResult:
    model: RafModel
    report: dict
    pole_set: PoleSet
    truth: RafModel | None = None


_SOLVER_KEYS = {"eps_abs", "eps_rel", "max_iter", "alpha", "sigma", "rho", "adaptive_rho",
                "check_every", "equilibrate", "eps_infeas"}


def _solver_settings(cfg: PipelineConfig) -> dict:
    extra = set(cfg.solver) - _SOLVER_KEYS
    if extra:
        raise ConfigurationError(f"unknown solver settings {sorted(extra)}")
    return dict(cfg.solver)


def _embed(cp, model: RafModel) -> np.ndarray:
    """Solution vector of ``cp`` reproducing ``model`` (residues padded with zeros)."""
    d = cp.dictionary
    c = np.zeros(d.n_groups, dtype=complex)
    c[: model.poles.n_groups] = model.residues
    x = np.zeros(cp.n)
    x[: cp.n_w] = d.residues_to_coefficients(c)
    if cp.fit_D:
        x[cp.n_w] = model.D
    if cp.n_a:
        lo, hi = cp.layout["a"]
        x[lo:hi] = np.abs(c)
    return x


def _model_objective(cp, model: RafModel) -> float:
    return cp.objective(_embed(cp, model))


def _local_draws(reps, clusters, region: PoleRegion, existing, n_new: int, radius: float,
                 rng: np.random.Generator, max_tries: int = 200):
    """Draw ``n_new`` representatives near cluster centers, inside ``region``.

    Around center ``a`` a point ``w`` uniform in the Euclidean disk of
    radius ``radius`` maps to ``(a + w) / (1 + conj(a) w)``, whose
    pseudo-hyperbolic distance to ``a`` is ``|w|``.  Candidates outside the
    region or within :data:`DEDUP_DISTANCE` of a known pole are rejected.
    """
    if n_new == 0 or not clusters:
        return np.zeros(0, dtype=complex), 0
    wts = np.array([max(cl.weight, 0.0) for cl in clusters])
    wts = wts / wts.sum() if wts.sum() > 0 else np.full(len(clusters), 1.0 / len(clusters))
    quota = np.floor(wts * n_new).astype(int)
    rem = n_new - quota.sum()
    order = np.argsort(-(wts * n_new - quota), kind="stable")
    quota[order[:rem]] += 1

    known = list(existing) + [np.conj(p) for p in existing]
    known = np.asarray(known, dtype=complex)
    out = []
    rejected = 0
    for cl, k in zip(clusters, quota):
        a = complex(cl.representative)
        real_center = a.imag == 0.0 and region.include_real_axis
        got = 0
        for _ in range(max_tries * max(k, 1)):
            if got >= k:
                break
            if real_center and (not region.angle_bands or rng.random() < region.p_real):
                w = radius * (2.0 * rng.random() - 1.0)
            else:
                w = radius * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())
            q = (a + w) / (1.0 + np.conj(a) * w)
            if abs(q.imag) < REAL_SNAP:
                q = complex(q.real, 0.0)
            elif q.imag < 0:
                q = np.conj(q)
            if not region.contains(q, tol=0.0):
                rejected += 1
                continue
            cand = np.concatenate([known, np.asarray(out, dtype=complex),
                                   np.conj(np.asarray(out, dtype=complex))])
            if len(cand) and np.min(pseudo_hyperbolic(q, cand)) < DEDUP_DISTANCE:
                rejected += 1
                continue
            out.append(q)
            got += 1
    return np.asarray(out, dtype=complex), rejected


def _round_record(k, cp, model, lam1, n_new=0, clusters=(), kept_previous=False) -> dict:
    d = cp.dictionary
    active = np.flatnonzero(np.abs(model.residues) > 0)
    reps = model.poles.representatives
    rec = {
        "round": k,
        "lambda1": lam1,
        "objective": _model_objective(cp, model),
        "residual_norm": float(model.diagnostics.get("residual_norm", np.nan)),
        "status": model.diagnostics.get("status"),
        "iterations": model.diagnostics.get("iterations"),
        "n_groups": d.n_groups,
        "n_new": int(n_new),
        "kept_previous": bool(kept_previous),
        "active_groups": active.tolist(),
        "active_poles": [[float(reps[g].real), float(reps[g].imag)] for g in active],
        "clusters": [
            {"representative": [cl.representative.real, cl.representative.imag],
             "size": int(len(cl.members)), "weight": cl.weight}
            for cl in clusters
        ],
        "budgets": budgets(model),
    }
    return rec


def _load_data(cfg: PipelineConfig, data):
    truth = None
    if data is None and cfg.data_path is not None:
        from .io import read_timeseries_csv

        data = read_timeseries_csv(cfg.data_path)
    if data is None and cfg.scenario is not None:
        sc = make_scenario(cfg.scenario)
        data, truth = sc.data, sc.truth
    if data is None:
        raise ConfigurationError("no data: pass a time series, data_path or scenario")
    return data, truth


def run(cfg: PipelineConfig, data: TimeSeries | None = None, truth: RafModel | None = None
        ) -> PipelineResult:
    """Run the sampling / convex fit / local refinement loop.

    Round 0 samples ``cfg.M`` pole groups and solves the master problem for
    each value of the lambda grid, keeping the best held-out simulation
    error (or the first value without a validation split).  Each further
    round prunes, clusters the surviving poles, draws ``cfg.M_local`` new
    poles near the cluster centers, merges them into the dictionary and
    re-solves from the previous solution.  If the re-solve does not lower
    the master objective, the previous solution (padded with zeros) is kept.
    """
    data, scen_truth = _load_data(cfg, data)
    truth = truth if truth is not None else scen_truth
    settings = _solver_settings(cfg)
    N = len(data)
    n_train = N - int(round(cfg.validation_fraction * N))
    if n_train < 2:
        raise ConfigurationError("training split too short")
    train, valid = data.split(n_train)

    ps = sample_poles(cfg.region, cfg.M, cfg.seed)
    d = build_design(ps, train.u)
    lam2 = default_lambda2(d) if cfg.lambda2 is None else float(cfg.lambda2)

    def val_error(m):
        if len(valid) == 0:
            return None
        yhat = simulate(m, data.u)[n_train:]
        return float(np.sqrt(np.mean((valid.y - yhat) ** 2)))

    best = None
    grid = []
    for lam1 in cfg.lambdas:
        cp_l = compile_problem(d, train, lam1, lam2, cfg.constraints, cfg.fit_D)
        m = solve(cp_l, **settings)
        err = val_error(m)
        grid.append({"lambda1": lam1, "validation_rmse": err,
                     "objective": _model_objective(cp_l, m)})
        if best is None or (err is not None and err < best[0]):
            best = (err, lam1, cp_l, m)
    _, lam1, cp, model = best

    rounds = [_round_record(0, cp, model, lam1)]
    stop_reason = None
    for k in range(1, cfg.rounds + 1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pruned, keep = prune(model, cp, cfg.prune_tol, **settings)
        if len(keep) == 0:
            stop_reason = "empty_active_set"
            break
        reps = cp.dictionary.group_poles
        clusters = cluster_active(reps[keep], np.abs(pruned.residues), cfg.cluster_radius)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, k])))
        new, _ = _local_draws(reps, clusters, cfg.region, reps, cfg.M_local, cfg.local_radius, rng)
        ps = PoleSet.from_representatives(np.concatenate([reps, new]), seed=cfg.seed,
                                          region=cfg.region)
        d = build_design(ps, train.u)
        cp_new = compile_problem(d, train, lam1, lam2, cfg.constraints, cfg.fit_D)
        x0 = _embed(cp_new, model)
        cand = solve(cp_new, warm_start={"x": x0}, **settings)
        prev = RafModel(ps, np.concatenate([model.residues, np.zeros(len(new), complex)]),
                        model.D, dict(model.diagnostics))
        kept_previous = _model_objective(cp_new, cand) > _model_objective(cp_new, prev)
        model = prev if kept_previous else cand
        cp = cp_new
        rounds.append(_round_record(k, cp, model, lam1, len(new), clusters, kept_previous))

    report = {
        "config": cfg.to_dict(),
        "n_train": n_train,
        "n_validation": N - n_train,
        "lambda_grid": grid,
        "lambda1": lam1,
        "lambda2": lam2,
        "rounds": rounds,
        "stop_reason": stop_reason,
        "final": {
            "n_groups": cp.dictionary.n_groups,
            "active_groups": int(np.count_nonzero(np.abs(model.residues))),
            "budgets": budgets(model),
            "validation_rmse": val_error(model),
            "constraint_residuals": constraint_residuals(model, cfg.constraints, train),
            "model": model.to_dict(),
        },
    }
    if truth is not None:
        report["score"] = score(model, truth, N, u=data.u)
    return PipelineResult(model, report, ps, truth)
