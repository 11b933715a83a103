import warnings

import numpy as np
import pytest

from oracles import (
    brute_convolve,
    fista,
    impulse_from_poles,
    project_affine,
    project_weighted_simplex,
    quadratic_value,
    ridge,
)
from problems import dc_row, problem, real_poles_problem
from rafid.dictionary import TimeSeries, build_design
from rafid.errors import ConfigurationError, InfeasibleProblemError
from rafid.pipeline import constraint_residuals
from rafid.sampling import PoleRegion, PoleSet, sample_poles
from rafid.solver import (
    Bibo,
    ConeBlock,
    ConstraintSet,
    DcBound,
    DcEqual,
    FreqMask,
    L1Tail,
    Monotone,
    RafModel,
    RelativeDegree,
    Settling,
    StepTail,
    TimeBox,
    WindowRMS,
    budgets,
    compile_problem,
    dc_gain,
    fit,
    frequency_response,
    prune,
    simulate,
    solve,
    solve_conic,
)


# -- compile ---------------------------------------------------------------------------
def test_empty_constraints_give_ridge_problem():
    d, data = problem(0)
    cp = compile_problem(d, data, 0.0, 1e-3)
    assert cp.blocks == []
    Z = d.columns
    assert np.allclose(cp.P, Z.T @ Z + 2e-3 * np.eye(d.n_columns), rtol=0, atol=1e-13)
    assert np.allclose(cp.q, -Z.T @ data.y, rtol=0, atol=1e-13)


def test_ridge_matches_normal_equations():
    for seed in range(5):
        d, data = problem(seed)
        lam2 = 10.0 ** (-seed - 1)
        m = fit(d, data, 0.0, lam2)
        w = d.residues_to_coefficients(m.residues)
        ref = ridge(d.columns, data.y, lam2)
        assert np.linalg.norm(w - ref) <= 1e-8 * np.linalg.norm(ref)


def test_dc_equal_single_real_pole():
    p, g0 = 0.5, 3.0
    ps = PoleSet.from_representatives([p])
    u = np.random.default_rng(0).standard_normal(30)
    data = TimeSeries(u, np.random.default_rng(1).standard_normal(30))
    cp = compile_problem(build_design(ps, u), data, 0.0, 1e-6, [DcEqual(g0)])
    zero = [b for b in cp.blocks if b.kind == "zero"]
    assert len(zero) == 1 and zero[0].size == 1
    m = solve(cp)
    assert m.residues[0].real == pytest.approx(g0 * (1 - p), abs=1e-6)


def test_scenario_configuration_cone_count():
    ps = sample_poles(PoleRegion.sector(0.85, 0.95, 0.3, 1.0), 50, seed=0)
    u = np.random.default_rng(0).standard_normal(100)
    om = np.linspace(0, np.pi, 32)
    cs = [Bibo(55.0), DcBound(4.0), FreqMask(tuple(om), tuple(np.full(32, 5.0)))]
    cp = compile_problem(build_design(ps, u), TimeSeries(u, u), 0.05, None, cs)
    n_pairs = int(ps.group_is_pair.sum())
    cones = [b for b in cp.blocks if b.kind in ("soc", "nonneg")]
    assert len(cones) == 0 + 32 + 2 + n_pairs
    assert sum(b.kind == "group" for b in cp.blocks) == ps.n_groups


def test_compile_errors():
    d, data = problem(1)
    with pytest.raises(ConfigurationError):
        compile_problem(d, data, 0.0, None, [Monotone()])
    with pytest.raises(ConfigurationError):
        compile_problem(d, data, 0.0, None, [RelativeDegree(len(data))])
    with pytest.raises(ConfigurationError):
        compile_problem(d, TimeSeries(data.u[:-1], data.y[:-1]), 0.0)
    with pytest.raises(ConfigurationError):
        compile_problem(d, data, -1.0)


# -- solve --------------------------------------------------------------------------------
def test_single_atom_dominates():
    # well-separated atoms: the group penalty cannot undercut the true atom
    ps = PoleSet.from_representatives([0.9 * np.exp(0.4j), 0.5, -0.6, 0.7 * np.exp(2j),
                                       0.3 * np.exp(1.2j), 0.8 * np.exp(1.0j)])
    u = np.random.default_rng(3).standard_normal(100)
    d = build_design(ps, u)
    for g in range(d.n_groups):
        w = np.zeros(d.n_columns)
        w[d.groups[g]] = 1.0
        m = fit(d, TimeSeries(u, d.columns @ w), lambda1=1e-3)
        energy = d.group_norms(d.residues_to_coefficients(m.residues)) ** 2
        assert energy[g] >= 0.99 * energy.sum()


def test_infeasible_priors_reported():
    ps = PoleSet.from_representatives([0.5])
    u = np.random.default_rng(0).standard_normal(30)
    data = TimeSeries(u, u)
    with pytest.raises(InfeasibleProblemError) as exc:
        fit(build_design(ps, u), data, 0.0, None, [DcEqual(10.0), Bibo(1.0)])
    assert exc.value.report["iterations"] > 0
    assert "certificate" in exc.value.report


def test_max_iter_returns_flagged_model():
    d, data = problem(2)
    with pytest.warns(RuntimeWarning):
        m = fit(d, data, 0.05, None, [Bibo(3.0)], max_iter=20, anderson=0)
    assert m.diagnostics["warning"] == "max_iter"


def test_group_lasso_optimality_conditions():
    worst = 0.0
    for seed in range(100):
        d, data = problem(seed, M=8, N=50)
        lam1 = float(np.random.default_rng(seed).uniform(0.05, 1.0))
        m = fit(d, data, lam1, 1e-6)
        w = d.residues_to_coefficients(m.residues)
        r = data.y - d.columns @ w
        for cols in d.groups:
            gz = d.columns[:, cols].T @ r
            wg = w[cols]
            if np.linalg.norm(wg) == 0:
                worst = max(worst, np.linalg.norm(gz) - lam1)
            else:
                stat = gz - 2e-6 * wg - lam1 * wg / np.linalg.norm(wg)
                worst = max(worst, np.linalg.norm(stat))
    assert worst <= 1e-5


@pytest.mark.parametrize("case", ["monotone", "equalities", "monotone_dc", "pairs_dc"])
def test_projected_gradient_oracle(case):
    lam2 = 1e-3
    if case == "monotone":
        d, data = real_poles_problem(10, 5)
        cs = [Monotone()]
        proj = lambda v: np.maximum(v, 0.0)  # noqa: E731
    elif case == "equalities":
        d, data = real_poles_problem(11, 6)
        cs = [DcEqual(1.5), RelativeDegree(1)]
        A = np.vstack([dc_row(d), 1 / d.norms])
        b = np.array([1.5, 0.0])
        proj = lambda v: project_affine(v, A, b)  # noqa: E731
    elif case == "monotone_dc":
        d, data = real_poles_problem(12, 7)
        cs = [Monotone(), DcEqual(2.0)]
        a = dc_row(d)
        proj = lambda v: project_weighted_simplex(v, a, 2.0)  # noqa: E731
    else:
        ps = PoleSet.from_representatives([0.8 * np.exp(0.5j), 0.7 * np.exp(1.2j), 0.6,
                                           0.9 * np.exp(0.2j), -0.3])
        rng = np.random.default_rng(13)
        u = rng.standard_normal(40)
        d = build_design(ps, u)
        data = TimeSeries(u, rng.standard_normal(40))
        cs = [DcEqual(-1.0)]
        A, b = dc_row(d)[None, :], np.array([-1.0])
        proj = lambda v: project_affine(v, A, b)  # noqa: E731
    assert d.n_columns <= 8
    Z = d.columns
    P = Z.T @ Z + 2 * lam2 * np.eye(d.n_columns)
    q = -Z.T @ data.y
    const = 0.5 * data.y @ data.y
    w_ref = fista(P, q, proj, iters=100_000)
    f_ref = quadratic_value(P, q, const, w_ref)
    m = fit(d, data, 0.0, lam2, cs)
    w = d.residues_to_coefficients(m.residues)
    assert quadratic_value(P, q, const, w) == pytest.approx(f_ref, rel=1e-6)
    assert np.linalg.norm(w - w_ref) <= 1e-4 * max(np.linalg.norm(w_ref), 1.0)


# -- cross-check against a generic conic modelling tool -------------------------------------
def _cvx_reference(d, data, lam1, lam2, cs, fit_D=False):
    cp = pytest.importorskip("cvxpy")
    reps = d.group_poles
    w = cp.Variable(d.n_columns)
    D = cp.Variable() if fit_D else 0.0
    pred = d.columns @ w + D * data.u
    resid = data.y - pred
    # physical residue parts per group
    re, im, mult, r = [], [], [], []
    for g, cols in enumerate(d.groups):
        re.append(w[cols[0]] / d.norms[g])
        im.append(w[cols[1]] / d.norms[g] if len(cols) == 2 else 0.0)
        mult.append(2.0 if len(cols) == 2 else 1.0)
        r.append(abs(reps[g]))
    absc = [cp.norm(cp.hstack([a, b])) if not isinstance(b, float) else cp.abs(a)
            for a, b in zip(re, im)]

    def G(om):
        zinv = np.exp(-1j * om)
        gr, gi = D, 0.0
        for g in range(d.n_groups):
            s = 1 / (1 - reps[g] * zinv)
            if mult[g] == 2:
                s2 = 1 / (1 - np.conj(reps[g]) * zinv)
                # (a + ib) s + (a - ib) s2
                gr = gr + re[g] * (s + s2).real - im[g] * (s - s2).imag
                gi = gi + re[g] * (s + s2).imag + im[g] * (s - s2).real
            else:
                gr = gr + re[g] * s.real
                gi = gi + re[g] * s.imag
        return gr, gi

    cons = []
    for rec in cs:
        if isinstance(rec, Bibo):
            cons.append(sum(mult[g] * absc[g] / (1 - r[g]) for g in range(d.n_groups)) <= rec.h_max)
        elif isinstance(rec, Settling):
            cons.append(sum(mult[g] * absc[g] * r[g] ** rec.T_s for g in range(d.n_groups))
                        <= rec.eps_h)
        elif isinstance(rec, L1Tail):
            cons.append(sum(mult[g] * absc[g] * r[g] ** rec.T_s / (1 - r[g])
                            for g in range(d.n_groups)) <= rec.budget)
        elif isinstance(rec, DcBound):
            cons.append(cp.abs(G(0.0)[0]) <= rec.G_max)
        elif isinstance(rec, FreqMask):
            for om, ga in zip(rec.omega, rec.gamma):
                gr, gi = G(om)
                cons.append(cp.norm(cp.hstack([gr, gi])) <= ga)
        elif isinstance(rec, TimeBox):
            cons.append(cp.abs(resid) <= rec.eps)
        elif isinstance(rec, WindowRMS):
            cons.append(cp.norm(cp.multiply(rec.weights(len(data)), resid)) <= rec.eta)
    obj = 0.5 * cp.sum_squares(resid) + lam2 * cp.sum_squares(w)
    if lam1 > 0:
        obj = obj + lam1 * sum(cp.norm(w[c]) for c in d.groups)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value


CROSS_CASES = {
    "bibo": [Bibo(2.0)],
    "freq_mask": [FreqMask(tuple(np.linspace(0, np.pi, 8)), tuple(np.full(8, 0.8)))],
    "dc_bound": [DcBound(0.2)],
    "settling": [Settling(5, 0.3)],
    "l1_tail": [L1Tail(3, 0.8)],
    "time_box": [TimeBox(0.15)],
    "window_rms": [WindowRMS((10, 30), 0.25)],
    "mixed": [Bibo(4.0), DcBound(1.0), FreqMask((0.0, 0.5, 1.5), (1.5, 1.5, 1.0))],
}


@pytest.mark.parametrize("name", sorted(CROSS_CASES))
@pytest.mark.parametrize("lam1", [0.0, 0.3])
def test_cross_check_conic_reference(name, lam1):
    d, data = problem(21, M=6, N=40, noise=0.1)
    cs = ConstraintSet(CROSS_CASES[name])
    lam2 = 1e-4
    ref = _cvx_reference(d, data, lam1, lam2, cs)
    m = fit(d, data, lam1, lam2, cs)
    assert m.diagnostics["status"] == "solved"
    assert m.diagnostics["objective"] == pytest.approx(ref, rel=1e-6)
    viol = constraint_residuals(m, cs, data)
    assert max(viol.values()) <= 1e-6


def test_feedthrough_fit_with_priors():
    d, data = problem(22, M=5, N=40)
    data = TimeSeries(data.u, data.y + 0.7 * data.u)
    cs = ConstraintSet([DcBound(2.0), RelativeDegree(1)])
    m = fit(d, data, 0.1, 1e-4, cs, fit_D=True)
    ref = pytest.importorskip("cvxpy")
    assert max(constraint_residuals(m, cs).values()) <= 1e-6
    h = m.impulse_response(3)
    assert abs(h[0] + m.D) <= 1e-6
    assert ref is not None


def test_scaling_consistency():
    d, data = problem(23, M=6, N=40)
    cs = ConstraintSet([Bibo(3.0), DcBound(3.0), TimeBox(0.5), Settling(4, 1.0),
                        FreqMask((0.0, 1.0), (2.0, 2.0)), WindowRMS((0, 20), 1.0)])
    lam1, alpha = 0.2, 3.7
    # the default 1e-8 KKT stop leaves ~1e-6 slack in x at ridge 1e-4
    tight = dict(eps_rel=1e-11, eps_abs=1e-13)
    m1 = fit(d, data, lam1, 1e-4, cs, **tight)
    data2 = TimeSeries(data.u, alpha * data.y)
    m2 = fit(d, data2, alpha * lam1, 1e-4, cs.scaled(alpha), **tight)
    assert np.allclose(m2.residues, alpha * m1.residues, rtol=1e-6,
                       atol=1e-6 * np.abs(alpha * m1.residues).max())
    assert m2.diagnostics["objective"] == pytest.approx(alpha**2 * m1.diagnostics["objective"],
                                                        rel=1e-6)


def test_reweighted_variant_flagged():
    d, data = problem(24)
    m = fit(d, data, 0.2, None, reweighted=True)
    assert m.diagnostics.get("reweighted") is True


def test_solve_conic_rejects_bad_blocks():
    with pytest.raises(ValueError):
        ConeBlock("psd", np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        ConeBlock("soc", np.eye(2), np.zeros(3))


def test_solve_conic_small_soc_example():
    # min ||x - (2, 2)||^2 / 2 s.t. ||x|| <= 1  ->  x = (1, 1)/sqrt(2)
    blocks = [ConeBlock("soc", np.vstack([np.zeros(2), -np.eye(2)]), [1.0, 0.0, 0.0])]
    res = solve_conic(np.eye(2), -np.array([2.0, 2.0]), blocks)
    assert res.status == "solved"
    assert np.allclose(res.x, [2**-0.5, 2**-0.5], atol=1e-7)


# -- prune ---------------------------------------------------------------------------------
def test_prune_single_active_group_unchanged():
    ps = PoleSet.from_representatives([0.6])
    u = np.random.default_rng(0).standard_normal(30)
    d = build_design(ps, u)
    data = TimeSeries(u, simulate(RafModel(ps, [0.5]), u))
    cp = compile_problem(d, data, 0.0, 1e-10)
    m = solve(cp)
    m2, keep = prune(m, cp, 1e-3)
    assert list(keep) == [0]
    assert m2.residues[0] == pytest.approx(m.residues[0], abs=1e-8)


def test_prune_duplicate_atoms():
    ps = PoleSet.from_representatives([0.5, 0.5, 0.8 * np.exp(1j)])
    u = np.random.default_rng(1).standard_normal(50)
    d = build_design(ps, u)
    y = simulate(RafModel(PoleSet.from_representatives([0.5]), [1.0]), u)
    data = TimeSeries(u, y)
    cp = compile_problem(d, data, 0.0, 1e-8)
    m = solve(cp)
    m2, keep = prune(m, cp, 1e-3)
    assert len(keep) >= 1
    r1 = m.diagnostics["residual_norm"]
    r2 = m2.diagnostics["residual_norm"]
    assert abs(r2 - r1) <= 1e-6


def test_prune_zero_tolerance_keeps_everything():
    d, data = problem(5)
    cp = compile_problem(d, data, 0.0, 1e-4)
    m = solve(cp)
    _, keep = prune(m, cp, 0.0)
    assert len(keep) == d.n_groups


def test_prune_all_zero_model_warns():
    d, data = problem(6)
    cp = compile_problem(d, data, 0.0, 1e-4)
    with pytest.warns(RuntimeWarning):
        m2, keep = prune(RafModel.zero(d.pole_set), cp, 1e-3)
    assert len(keep) == 0 and m2.diagnostics["warning"] == "empty_model"


# -- model evaluation ---------------------------------------------------------------------------
def test_frequency_response_examples():
    empty = RafModel.zero(D=1.0)
    assert np.array_equal(frequency_response(empty, [0.0, 1.0, np.pi]), [1, 1, 1])
    m = RafModel(PoleSet.from_representatives([0.5]), [1.0])
    assert frequency_response(m, 0.0)[0] == pytest.approx(2.0, abs=1e-15)
    assert frequency_response(m, np.pi)[0] == pytest.approx(2 / 3, abs=1e-15)


def test_frequency_response_real_at_dc_for_pairs():
    m = RafModel(PoleSet.from_representatives([0.8 * np.exp(0.4j), 0.3]), [0.3 - 0.7j, 0.2], 0.1)
    g = frequency_response(m, [0.0, np.pi])
    assert abs(g[0].imag) < 1e-15 and abs(g[1].imag) < 1e-15
    # against the z-transform of a long impulse response
    h = impulse_from_poles([0.8 * np.exp(0.4j), 0.3], [0.3 - 0.7j, 0.2], 400, D=0.1)
    om = 0.9
    ref = np.sum(h * np.exp(-1j * om * np.arange(400)))
    assert frequency_response(m, om)[0] == pytest.approx(ref, abs=1e-12)
    assert dc_gain(m) == pytest.approx(h.sum(), abs=1e-12)


def test_budgets_examples():
    m = RafModel(PoleSet.from_representatives([0.5]), [1.0])
    b = budgets(m, T_s=0)
    assert b["bibo"] == pytest.approx(2.0, abs=1e-15)
    assert b["settling"] == pytest.approx(1.0, abs=1e-15)
    assert b["dc"] == pytest.approx(2.0, abs=1e-15)
    z = RafModel(PoleSet.from_representatives([0.5, 0.3j]), [0.0, 0.0], 0.4)
    bz = budgets(z, 3, 2)
    assert bz["dc"] == pytest.approx(0.4) and bz["bibo"] == bz["settling"] == bz["step_tail"] == 0


def _random_model(rng):
    k = int(rng.integers(1, 5))
    reps = rng.uniform(0.05, 0.95, k) * np.exp(1j * rng.uniform(0, np.pi, k))
    reps[rng.random(k) < 0.3] = rng.uniform(-0.95, 0.95)
    ps = PoleSet.from_representatives(reps)
    c = rng.standard_normal(ps.n_groups) + 1j * rng.standard_normal(ps.n_groups)
    c[~ps.group_is_pair] = c[~ps.group_is_pair].real
    return RafModel(ps, c, float(rng.standard_normal()))


def test_step_tail_bounds_simulated_step():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = _random_model(rng)
        t = int(rng.integers(0, 40))
        s = simulate(m, np.ones(t + 1))
        gap = abs(dc_gain(m) - s[t])
        assert gap <= budgets(m, t_step=t)["step_tail"] * (1 + 1e-9) + 1e-12


def test_settling_and_tail_envelopes_hold():
    rng = np.random.default_rng(8)
    for _ in range(300):
        m = _random_model(rng)
        Ts = int(rng.integers(0, 30))
        h = m.impulse_response(Ts + 600)
        b = budgets(m, T_s=Ts)
        assert np.abs(h[Ts:]).max() <= b["settling"] * (1 + 1e-9) + 1e-14
        assert np.abs(h[Ts:]).sum() <= b["l1_tail"] * (1 + 1e-9) + 1e-12


def test_simulate_examples():
    m = _random_model(np.random.default_rng(9))
    u = np.zeros(30)
    u[0] = 1
    h = m.impulse_response(30)
    h[0] += m.D
    assert np.allclose(simulate(m, u), h, rtol=0, atol=1e-13)
    p = 0.7
    single = RafModel(PoleSet.from_representatives([p]), [1.0])
    t = np.arange(20)
    assert np.allclose(simulate(single, np.ones(20)), (1 - p ** (t + 1)) / (1 - p), atol=1e-14)
    assert np.array_equal(simulate(RafModel.zero(), np.ones(5)), np.zeros(5))


def test_simulate_matches_brute_convolution():
    rng = np.random.default_rng(10)
    m = _random_model(rng)
    u = rng.standard_normal(60)
    p, c = m.expanded()
    ref = m.D * u + sum((ci * brute_convolve(pi, u)) for pi, ci in zip(p, c)).real
    assert np.allclose(simulate(m, u), ref, rtol=0, atol=1e-12)


# -- records and models ---------------------------------------------------------------------
def test_constraint_set_round_trip_and_errors():
    cs = ConstraintSet([TimeBox(0.1), WindowRMS((0, 10), 0.5), FreqMask((0.0, 1.0), (1.0, 2.0)),
                        Settling(3, 0.2), L1Tail(2, 0.4), Bibo(5.0), StepTail(4, 0.1),
                        RelativeDegree(1), DcEqual(1.0), DcBound(2.0), Monotone()])
    again = ConstraintSet.from_list(cs.to_list())
    assert again.to_list() == cs.to_list()
    with pytest.raises(ConfigurationError):
        ConstraintSet.from_list([{"type": "nope"}])
    with pytest.raises(ConfigurationError):
        ConstraintSet.from_list([{"type": "bibo", "h_max": 1.0, "extra": 2}])
    with pytest.raises(ConfigurationError):
        Bibo(-1.0)
    with pytest.raises(ConfigurationError):
        FreqMask((4.0,), (1.0,))


def test_model_dict_round_trip_is_exact():
    m = _random_model(np.random.default_rng(11))
    again = RafModel.from_dict(m.to_dict())
    om = np.linspace(0, np.pi, 17)
    assert frequency_response(again, om).tobytes() == frequency_response(m, om).tobytes()


def test_model_rejects_complex_residue_on_real_pole():
    with pytest.raises(ValueError):
        RafModel(PoleSet.from_representatives([0.5]), [1 + 1j])


def test_no_warnings_on_normal_fit():
    d, data = problem(12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit(d, data, 0.1, None, [Bibo(10.0)])
