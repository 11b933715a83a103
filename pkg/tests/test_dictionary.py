import numpy as np
import pytest

from oracles import brute_convolve
from rafid.dictionary import (
    Dictionary,
    TimeSeries,
    atomic_gauge,
    build_impulse,
    convolve_poles,
    convolved_design,
    normalize_columns,
    real_split,
    vandermonde,
)
from rafid.errors import ConfigurationError, DegenerateInputError, PairingError
from rafid.sampling import PoleRegion, PoleSet, sample_poles


def _ps(*reps):
    return PoleSet.from_representatives(reps)


# -- vandermonde -------------------------------------------------------------
def test_vandermonde_examples():
    assert np.array_equal(vandermonde(_ps(0.0), 3)[:, 0], [1, 0, 0])
    assert np.allclose(vandermonde(_ps(0.5), 3)[:, 0], [1, 0.5, 0.25], rtol=0, atol=1e-15)
    col = vandermonde(_ps(0.9j), 4)[:, 0]
    assert np.allclose(col, [1, 0.9j, -0.81, -0.729j], rtol=0, atol=1e-15)


def test_vandermonde_first_row_ones():
    ps = sample_poles(PoleRegion.disk(0.9), 20, seed=0)
    assert np.all(vandermonde(ps, 5)[0] == 1)
    with pytest.raises(ConfigurationError):
        vandermonde(ps, 0)


# -- real split ----------------------------------------------------------------
def test_real_split_real_pole():
    d = real_split(_ps(0.5), 4)
    assert d.columns.shape == (4, 1)
    assert np.allclose(d.columns[:, 0], [1, 0.5, 0.25, 0.125], rtol=0, atol=1e-15)


def test_real_split_pair_matches_brute_force():
    p = 0.9 * np.exp(0.5j)
    d = real_split(_ps(p), 30)
    t = np.arange(30)
    expect = 2 * 0.9**t * np.cos(0.5 * t)  # 2 Re(c p^t) with c = 1
    assert np.allclose(d.columns @ [1.0, 0.0], expect, rtol=0, atol=1e-13)
    # imaginary residue part: 2 Re(i p^t) = -2 Im(p^t)
    assert np.allclose(d.columns @ [0.0, 1.0], -2 * 0.9**t * np.sin(0.5 * t), atol=1e-13)
    assert np.array_equal(d.columns @ [0.0, 0.0], np.zeros(30))


def test_real_split_column_count_and_groups():
    ps = sample_poles(PoleRegion.disk(0.9, real_fraction=0.4), 25, seed=2)
    d = real_split(ps, 10)
    n_pairs = int(ps.group_is_pair.sum())
    assert d.n_columns == 2 * n_pairs + (ps.n_groups - n_pairs)
    flat = np.sort(np.concatenate(d.groups))
    assert np.array_equal(flat, np.arange(d.n_columns))


def test_real_split_orphan_raises():
    ps = PoleSet.from_poles([0.3 + 0.4j])
    with pytest.raises(PairingError):
        real_split(ps, 5)


# -- convolved design --------------------------------------------------------------
def test_convolved_design_impulse_equals_vandermonde():
    ps = sample_poles(PoleRegion.disk(0.9), 10, seed=1)
    u = np.zeros(12)
    u[0] = 1
    assert np.allclose(convolved_design(ps, u).columns, real_split(ps, 12).columns,
                       rtol=0, atol=1e-14)


def test_convolved_design_step_example():
    d = convolved_design(_ps(0.5), np.ones(4))
    assert np.allclose(d.columns[:, 0], [1, 1.5, 1.75, 1.875], rtol=0, atol=1e-15)


def test_zero_pole_passes_input_through():
    u = np.random.default_rng(0).standard_normal(20)
    assert np.array_equal(convolved_design(_ps(0.0), u).columns[:, 0], u)


def test_recursion_matches_brute_convolution_property():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        r = rng.uniform(0, 0.99)
        p = r * np.exp(1j * rng.uniform(-np.pi, np.pi))
        u = rng.standard_normal(rng.integers(1, 80))
        rec = convolve_poles([p], u)[:, 0]
        ref = brute_convolve(p, u)
        worst = max(worst, np.linalg.norm(rec - ref) / max(np.linalg.norm(ref), 1e-300))
    assert worst < 1e-10


# -- normalization --------------------------------------------------------------------
def test_normalize_unit_column_unchanged():
    u = np.zeros(6)
    u[0] = 1
    d = normalize_columns(convolved_design(_ps(0.0), u))
    assert d.norms[0] == 1.0
    assert np.array_equal(d.columns[:, 0], u)


def test_normalize_three_four_column():
    d = normalize_columns(convolved_design(_ps(0.0), [3.0, 4.0, 0.0]))
    assert d.norms[0] == pytest.approx(5.0, abs=1e-15)
    assert np.allclose(d.columns[:, 0], [0.6, 0.8, 0.0], rtol=0, atol=1e-15)


def test_zero_input_is_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize_columns(convolved_design(_ps(0.5), np.zeros(10)))


def test_normalized_norms():
    ps = sample_poles(PoleRegion.disk(0.95, real_fraction=0.5), 60, seed=4)
    u = np.random.default_rng(1).standard_normal(80)
    d = normalize_columns(convolved_design(ps, u))
    for g, cols in enumerate(d.groups):
        blk = d.columns[:, cols]
        if len(cols) == 1:
            assert abs(np.linalg.norm(blk) - 1) <= 1e-12
        else:
            # a pair shares one scale factor: unit RMS column norm
            assert abs(np.linalg.norm(blk) - np.sqrt(2)) <= 1e-12
    # physical residues survive the round trip through coefficients
    c = np.random.default_rng(2).standard_normal(d.n_groups) + 0j
    c[d.group_is_pair] += 1j * np.random.default_rng(3).standard_normal(d.group_is_pair.sum())
    assert np.allclose(d.coefficients_to_residues(d.residues_to_coefficients(c)), c,
                       rtol=1e-14, atol=1e-15)


def test_pair_normalization_is_phase_invariant():
    p = 0.8 * np.exp(0.7j)
    d = build_impulse(_ps(p), 40)
    norms = []
    for phase in np.linspace(0, 2 * np.pi, 9):
        w = np.array([np.cos(phase), np.sin(phase)])
        norms.append(np.linalg.norm(w))
    # same group norm for every phase, and the design scale is shared
    assert np.ptp(norms) < 1e-15
    assert d.column_scale()[0] == d.column_scale()[1]


def test_normalized_design_reproduces_physical_response():
    ps = _ps(0.7, 0.9 * np.exp(0.3j))
    u = np.random.default_rng(5).standard_normal(50)
    d = normalize_columns(convolved_design(ps, u))
    c = np.array([0.4 + 0j, 0.2 - 0.3j])
    y = d.columns @ d.residues_to_coefficients(c)
    ref = 0.4 * brute_convolve(0.7, u).real + 2 * ((0.2 - 0.3j) * brute_convolve(ps.poles[1], u)).real
    assert np.allclose(y, ref, rtol=0, atol=1e-12)


def test_timeseries_validation():
    with pytest.raises(ConfigurationError):
        TimeSeries([1, 2], [1])
    with pytest.raises(ConfigurationError):
        TimeSeries([1, np.nan], [1, 2])


# -- atomic gauge ------------------------------------------------------------------
@pytest.fixture(scope="module")
def real_dict():
    ps = PoleSet.from_representatives([0.2, -0.5, 0.7, 0.9])
    return build_impulse(ps, 12)


def test_gauge_single_atom(real_dict):
    h = real_dict.columns[:, 0]
    g = atomic_gauge(h, real_dict)
    assert g.in_span
    assert g.value == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(g.coefficients, [1, 0, 0, 0], atol=1e-6)
    assert atomic_gauge(2 * h, real_dict).value == pytest.approx(2.0, abs=1e-6)


def test_gauge_out_of_span(real_dict):
    rng = np.random.default_rng(0)
    h = rng.standard_normal(12)
    # remove the span component (projection oracle via SVD)
    U, s, _ = np.linalg.svd(real_dict.columns, full_matrices=False)
    h -= U @ (U.T @ h)
    g = atomic_gauge(h, real_dict)
    assert not g.in_span and g.value == np.inf and g.coefficients is None


def test_gauge_zero_signal(real_dict):
    g = atomic_gauge(np.zeros(12), real_dict)
    assert g.value == 0.0 and g.in_span


def test_gauge_length_mismatch(real_dict):
    with pytest.raises(ConfigurationError):
        atomic_gauge(np.ones(5), real_dict)


@pytest.fixture(scope="module")
def pair_dict():
    ps = sample_poles(PoleRegion.disk(0.9, real_fraction=0.3), 10, seed=9)
    return build_impulse(ps, 40)


def _span_signal(d, rng):
    return d.columns @ rng.standard_normal(d.n_columns)


def test_gauge_axioms(pair_dict):
    rng = np.random.default_rng(3)
    for _ in range(5):
        h1, h2 = _span_signal(pair_dict, rng), _span_signal(pair_dict, rng)
        g1 = atomic_gauge(h1, pair_dict).value
        g2 = atomic_gauge(h2, pair_dict).value
        g12 = atomic_gauge(h1 + h2, pair_dict).value
        assert g12 <= g1 + g2 + 1e-6
        alpha = rng.uniform(-3, 3)
        assert atomic_gauge(alpha * h1, pair_dict).value == pytest.approx(abs(alpha) * g1,
                                                                         rel=1e-6)
        assert g1 > 0


def test_gauge_matches_conic_oracle(pair_dict):
    cp = pytest.importorskip("cvxpy")
    h = _span_signal(pair_dict, np.random.default_rng(8))
    w = cp.Variable(pair_dict.n_columns)
    obj = sum(cp.norm(w[c]) for c in pair_dict.groups)
    prob = cp.Problem(cp.Minimize(obj), [pair_dict.columns @ w == h])
    prob.solve(solver=cp.CLARABEL)
    assert atomic_gauge(h, pair_dict).value == pytest.approx(prob.value, rel=1e-6)


def test_gauge_monotone_in_atoms():
    rng = np.random.default_rng(4)
    reg = PoleRegion.disk(0.9, real_fraction=0.3)
    base = sample_poles(reg, 8, seed=1).representatives
    extra = sample_poles(reg, 6, seed=2).representatives
    d_small = build_impulse(PoleSet.from_representatives(base), 30)
    d_big = build_impulse(PoleSet.from_representatives(np.concatenate([base, extra])), 30)
    for _ in range(3):
        h = _span_signal(d_small, rng)
        assert atomic_gauge(h, d_big).value <= atomic_gauge(h, d_small).value + 1e-6


def test_dictionary_subset_keeps_scaling(pair_dict):
    sub = pair_dict.subset([2, 0])
    assert isinstance(sub, Dictionary)
    assert np.array_equal(sub.norms, pair_dict.norms[[2, 0]])
    cols = np.concatenate([pair_dict.groups[2], pair_dict.groups[0]])
    assert np.array_equal(sub.columns, pair_dict.columns[:, cols])
