"""Compile the master identification problem into conic form.

Variable layout ``x = [w, D, a]``:

* ``w``: dictionary coefficients (normalized columns), one or two per group;
* ``D``: feedthrough, present only when fitted;
* ``a``: epigraph variables ``a_g >= |c_g|``, present only when a budget
  constraint (settling, l1 tail, BIBO) needs them.

Constraints are written on physical residues ``c = w / eta``; the
de-normalization is folded into every constraint row.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..dictionary import Dictionary, TimeSeries
from ..errors import ConfigurationError, InfeasibleProblemError
from .admm import ConeBlock, solve_conic
from .constraints import (
    Bibo,
    ConstraintSet,
    DcBound,
    DcEqual,
    FreqMask,
    L1Tail,
    Monotone,
    RelativeDegree,
    Settling,
    StepTail,
    TimeBox,
    WindowRMS,
)
from .model import RafModel


@dataclass
class ConicProblem:
    P: np.ndarray
    q: np.ndarray
    const: float
    blocks: list
    dictionary: Dictionary
    data: TimeSeries
    lambda1: float
    lambda2: float
    constraints: ConstraintSet
    fit_D: bool
    D_fixed: float
    group_weights: np.ndarray
    n_w: int
    n_a: int
    layout: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.q)

    def cone_summary(self) -> dict:
        kinds = [b.kind for b in self.blocks]
        return {
            "zero_rows": sum(b.size for b in self.blocks if b.kind == "zero"),
            "nonneg_rows": sum(b.size for b in self.blocks if b.kind == "nonneg"),
            "soc_blocks": kinds.count("soc"),
            "group_blocks": kinds.count("group"),
            "variables": self.n,
        }

    def split(self, x):
        x = np.asarray(x, dtype=float)
        w = x[: self.n_w]
        D = x[self.n_w] if self.fit_D else self.D_fixed
        return w, float(D)

    def objective(self, x) -> float:
        """Master objective (including the constant ``||y||^2 / 2``)."""
        w, D = self.split(x)
        r = self.data.y - self.dictionary.columns @ w - D * self.data.u
        pen = sum(self.group_weights[g] * np.linalg.norm(w[c])
                  for g, c in enumerate(self.dictionary.groups))
        return float(0.5 * r @ r + self.lambda2 * w @ w + self.lambda1 * pen)


def _pole_rows(d: Dictionary, f) -> np.ndarray:
    """Complex row mapping coefficients ``w`` to ``sum_m c_m f(p_m)``.

    For a pair the two members contribute ``c f(p) + conj(c) f(conj p)``.
    """
    row = np.zeros(d.n_columns, dtype=complex)
    reps = d.group_poles
    for g, cols in enumerate(d.groups):
        p = reps[g]
        s = 1.0 / d.norms[g]
        if len(cols) == 2:
            fp, fq = f(p), f(np.conj(p))
            row[cols[0]] = (fp + fq) * s
            row[cols[1]] = 1j * (fp - fq) * s
        else:
            row[cols[0]] = f(p) * s
    return row


def default_lambda2(d: Dictionary) -> float:
    if d.n_columns == 0:
        return 0.0
    return 1e-8 * float(np.sum(d.columns**2)) / d.n_columns


def compile_problem(
    dictionary: Dictionary,
    data: TimeSeries,
    lambda1: float = 0.0,
    lambda2: float | None = None,
    constraints: ConstraintSet | None = None,
    fit_D: bool = False,
    D_fixed: float = 0.0,
    group_weights=None,
) -> ConicProblem:
    """Build the conic form of::

        min 1/2||y - Zw - Du||^2 + lambda2 ||w||^2 + lambda1 sum_g gw_g ||w_g||
        s.t. prior constraints

    ``dictionary`` must be built on ``data.u`` (same horizon).
    """
    cs = ConstraintSet(constraints or ())
    Z = dictionary.columns
    N = len(data)
    if dictionary.horizon != N:
        raise ConfigurationError(f"dictionary horizon {dictionary.horizon} != data length {N}")
    if lambda1 < 0:
        raise ConfigurationError("lambda1 must be >= 0")
    lam2 = default_lambda2(dictionary) if lambda2 is None else float(lambda2)
    if lam2 < 0:
        raise ConfigurationError("lambda2 must be >= 0")
    n_w = dictionary.n_columns
    n_g = dictionary.n_groups
    gw = np.ones(n_g) if group_weights is None else np.asarray(group_weights, dtype=float)

    needs_epi = any(isinstance(r, (Settling, L1Tail, Bibo)) for r in cs)
    n_d = 1 if fit_D else 0
    n_a = n_g if needs_epi else 0
    n = n_w + n_d + n_a
    iw = slice(0, n_w)
    iD = n_w
    ia = slice(n_w + n_d, n)

    u, y = data.u, data.y
    y_eff = y if fit_D else y - D_fixed * u
    M = np.zeros((N, n))  # model output = M x (+ D_fixed u)
    M[:, iw] = Z
    if fit_D:
        M[:, iD] = u

    P = M.T @ M
    P[iw, iw] += 2.0 * lam2 * np.eye(n_w)
    q = -M.T @ y_eff
    const = 0.5 * float(y_eff @ y_eff)

    reps = dictionary.group_poles
    scale = dictionary.column_scale()
    blocks = []

    def g_row(f):
        """Real/imag rows of an affine functional in (c, D), plus the D_fixed offset."""
        row = np.zeros(n, dtype=complex)
        row[iw] = _pole_rows(dictionary, f)
        if fit_D:
            row[iD] = 1.0
            return row, 0.0
        return row, D_fixed

    for rec in cs:
        if isinstance(rec, TimeBox):
            eps = np.broadcast_to(np.asarray(rec.eps, dtype=float), (N,))
            blocks.append(ConeBlock("nonneg", -M, eps - y_eff, name="time_box_upper"))
            blocks.append(ConeBlock("nonneg", M, eps + y_eff, name="time_box_lower"))
        elif isinstance(rec, WindowRMS):
            W = rec.weights(N)
            A = np.vstack([np.zeros((1, n)), W[:, None] * M])
            blocks.append(ConeBlock("soc", A, np.concatenate([[rec.eta], W * y_eff]),
                                    name="window_rms"))
        elif isinstance(rec, FreqMask):
            for om, ga in zip(rec.omega, rec.gamma):
                zinv = np.exp(-1j * om)
                row, g0 = g_row(lambda p, zinv=zinv: 1.0 / (1.0 - p * zinv))
                A = np.vstack([np.zeros(n), -row.real, -row.imag])
                b = np.array([ga, np.real(g0), np.imag(g0)])
                blocks.append(ConeBlock("soc", A, b, name=f"freq_mask[{om:.6g}]"))
        elif isinstance(rec, (Settling, L1Tail, Bibo)):
            r = np.abs(reps)
            mult = np.where(dictionary.group_is_pair, 2.0, 1.0)
            if isinstance(rec, Settling):
                coef, budget, nm = mult * r**rec.T_s, rec.eps_h, "settling"
            elif isinstance(rec, L1Tail):
                coef, budget, nm = mult * r**rec.T_s / (1.0 - r), rec.budget, "l1_tail"
            else:
                coef, budget, nm = mult / (1.0 - r), rec.h_max, "bibo"
            A = np.zeros((1, n))
            A[0, ia] = coef
            blocks.append(ConeBlock("nonneg", A, [budget], name=nm))
        elif isinstance(rec, RelativeDegree):
            if rec.r_d >= N:
                raise ConfigurationError(f"relative degree {rec.r_d} >= horizon {N}")
            for k in range(rec.r_d):
                # h(0) includes the feedthrough, later samples do not
                row, off = g_row(lambda p, k=k: p**k) if k == 0 else (
                    np.concatenate([_pole_rows(dictionary, lambda p, k=k: p**k),
                                    np.zeros(n - n_w)]), 0.0)
                blocks.append(ConeBlock("zero", row.real[None, :], [-np.real(off)],
                                        name=f"relative_degree[{k}]"))
        elif isinstance(rec, DcEqual):
            row, g0 = g_row(lambda p: 1.0 / (1.0 - p))
            blocks.append(ConeBlock("zero", row.real[None, :], [rec.g0 - np.real(g0)],
                                    name="dc_equal"))
        elif isinstance(rec, DcBound):
            row, g0 = g_row(lambda p: 1.0 / (1.0 - p))
            A = np.vstack([np.zeros(n), -row.real])
            blocks.append(ConeBlock("soc", A, [rec.G_max, np.real(g0)], name="dc_bound"))
        elif isinstance(rec, Monotone):
            if np.any(reps.imag != 0.0) or np.any(reps.real <= 0.0) or np.any(reps.real >= 1.0):
                raise ConfigurationError("monotone prior needs a dictionary of real poles in (0, 1)")
            A = np.zeros((n_w, n))
            A[:, iw] = -np.eye(n_w)
            blocks.append(ConeBlock("nonneg", A, np.zeros(n_w), name="monotone"))
        elif isinstance(rec, StepTail):
            continue

    if needs_epi:
        for g, cols in enumerate(dictionary.groups):
            A = np.zeros((1 + len(cols), n))
            A[0, n_w + n_d + g] = -1.0
            for k, c in enumerate(cols):
                A[1 + k, c] = -scale[c]
            blocks.append(ConeBlock("soc", A, np.zeros(1 + len(cols)), name=f"epigraph[{g}]"))

    if lambda1 > 0:
        for g, cols in enumerate(dictionary.groups):
            A = np.zeros((len(cols), n))
            A[np.arange(len(cols)), cols] = 1.0
            blocks.append(ConeBlock("group", A, np.zeros(len(cols)), weight=lambda1 * gw[g],
                                    name=f"group[{g}]"))

    return ConicProblem(P, q, const, blocks, dictionary, data, float(lambda1), lam2, cs,
                        bool(fit_D), float(D_fixed), gw, n_w, n_a,
                        layout={"w": (0, n_w), "D": iD if fit_D else None, "a": (ia.start, ia.stop)})


def solve(cp: ConicProblem, warm_start: dict | None = None, **settings) -> RafModel:
    """Solve a compiled problem; returns the de-normalized model.

    Raises :class:`InfeasibleProblemError` when the solver finds a primal
    infeasibility certificate.  Hitting the iteration limit returns the
    last iterate with ``diagnostics["warning"] == "max_iter"``.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = solve_conic(cp.P, cp.q, cp.blocks, warm_start=warm_start, **settings)
    if res.status == "infeasible":
        raise InfeasibleProblemError(
            "constraint set is infeasible",
            report={"iterations": res.iterations, "certificate": res.certificate,
                    "blocks": [b.name for b in cp.blocks if b.kind != "group"]},
        )
    x = res.x.copy()
    w = x[: cp.n_w]
    active = np.ones(cp.dictionary.n_groups, dtype=bool)
    if cp.lambda1 > 0:
        # the split variable of each group is exactly sparse; use it as the support
        zg = _group_values(cp, res.z)
        active = np.array([np.any(v != 0.0) for v in zg])
        for g, cols in enumerate(cp.dictionary.groups):
            if not active[g]:
                w[cols] = 0.0
    _, D = cp.split(x)
    residues = cp.dictionary.coefficients_to_residues(w)
    r = cp.data.y - cp.dictionary.columns @ w - D * cp.data.u
    diag = {
        "status": res.status,
        "iterations": res.iterations,
        "primal_residual": res.primal_residual,
        "dual_residual": res.dual_residual,
        "objective": cp.objective(x),
        "residual_norm": float(np.linalg.norm(r)),
        "active_groups": np.flatnonzero(active).tolist(),
        "lambda1": cp.lambda1,
        "lambda2": cp.lambda2,
    }
    if res.status == "max_iter":
        diag["warning"] = "max_iter"
        warnings.warn("solver stopped at the iteration limit", RuntimeWarning, stacklevel=2)
    model = RafModel(cp.dictionary.pole_set, residues, D, diag)
    object.__setattr__(model, "_solution", {"x": res.x, "z": res.z, "y": res.y})
    return model


def _group_values(cp: ConicProblem, z):
    out, k = [], 0
    for b in cp.blocks:
        if b.kind == "group":
            out.append(z[k:k + b.size])
        k += b.size
    return out


def coefficients(cp: ConicProblem, model: RafModel) -> np.ndarray:
    """Solver-space vector ``x`` reproducing ``model`` in ``cp`` (epigraph tight)."""
    w = cp.dictionary.residues_to_coefficients(model.residues)
    x = np.zeros(cp.n)
    x[: cp.n_w] = w
    if cp.fit_D:
        x[cp.n_w] = model.D
    if cp.n_a:
        start = cp.layout["a"][0]
        x[start:start + cp.n_a] = np.abs(model.residues)
    return x


def fit(dictionary, data, lambda1=0.0, lambda2=None, constraints=None, fit_D=False,
        D_fixed=0.0, reweighted=False, delta=1e-4, **settings) -> RafModel:
    """Compile and solve in one call.

    With ``reweighted=True`` one extra solve uses group weights
    ``1 / (||w_g|| + delta)`` (heuristic bias reduction).
    """
    cp = compile_problem(dictionary, data, lambda1, lambda2, constraints, fit_D, D_fixed)
    model = solve(cp, **settings)
    if reweighted and lambda1 > 0:
        wn = dictionary.group_norms(dictionary.residues_to_coefficients(model.residues))
        cp = compile_problem(dictionary, data, lambda1, lambda2, constraints, fit_D, D_fixed,
                             group_weights=1.0 / (wn + delta))
        model = solve(cp, **settings)
        model.diagnostics["reweighted"] = True
    return model


def prune(model: RafModel, cp: ConicProblem, rel_tol: float = 1e-3, **settings):
    """Drop weak groups and refit the survivors without the sparsity penalty.

    A group is dropped when the norm of its (normalized) coefficient block
    is below ``rel_tol`` times the largest one.  The refit keeps the same
    constraint set and ridge weight.  Returns ``(model, kept_group_ids)``.
    """
    d = cp.dictionary
    gn = d.group_norms(d.residues_to_coefficients(model.residues))
    top = gn.max(initial=0.0)
    keep = np.flatnonzero(~(gn < rel_tol * top)) if top > 0 else np.zeros(0, dtype=int)
    if len(keep) == 0:
        warnings.warn("all groups pruned; returning empty model", RuntimeWarning, stacklevel=2)
        empty = RafModel.zero(d.pole_set.subset([]), model.D)
        empty.diagnostics["warning"] = "empty_model"
        return empty, keep
    sub = d.subset(keep)
    cp2 = compile_problem(sub, cp.data, 0.0, cp.lambda2, cp.constraints, cp.fit_D, cp.D_fixed)
    refit = solve(cp2, **settings)
    refit.diagnostics["kept_groups"] = keep.tolist()
    return refit, keep
