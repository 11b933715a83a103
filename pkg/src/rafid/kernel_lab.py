"""Disk-supported kernels and numerical checks of their structural properties.

A positive measure ``mu`` on the closed disk of radius ``rho`` defines the
moment kernel ``K(s, t) = E_mu[p**s * conj(p)**t]``.  The functions here
build such kernels (from atoms, from samples, from a quadrature of a
sampling law, or from an operator realization) and test PSD-ness, the
radius defect, the l1 embedding, Monte Carlo convergence, the Pick
criterion and the radius normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError, DomainError, MeasureError, NumericalError
from .sampling import PoleRegion, PoleSet, draw_iid

#: relative eigenvalue tolerance (scaled by the kernel trace)
EIG_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite measure ``sum_j w_j * delta(p_j)`` on the disk."""

    poles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.poles, dtype=complex).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if p.shape != w.shape:
            raise MeasureError("poles and weights differ in length")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("atomic weights must be finite and nonnegative")
        object.__setattr__(self, "poles", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, poles) -> "AtomicMeasure":
        p = np.asarray(poles, dtype=complex).reshape(-1)
        return cls(p, np.full(len(p), 1.0 / len(p)))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def rho(self) -> float:
        return float(np.abs(self.poles).max(initial=0.0))


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Hermitian kernel on time indices ``0..T`` with its origin.

    ``provenance`` is ``"atomic"``, ``"empirical"``, ``"quadrature"``,
    ``"operator"`` or ``"counterexample"``; ``source`` holds the measure,
    poles or operator it came from.
    """

    entries: np.ndarray
    provenance: str
    source: object = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())

    def hermitian_error(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())

    def is_psd(self, rtol: float = EIG_RTOL) -> bool:
        return self.min_eig() >= -rtol * max(self.trace, 0.0)


def _moments(poles, weights, T):
    V = np.power(np.asarray(poles, dtype=complex)[:, None], np.arange(T + 1)[None, :])
    # K[s, t] = sum_j w_j p_j^s conj(p_j)^t
    K = V.T @ (weights[:, None] * V.conj())
    return 0.5 * (K + K.conj().T)


def kernel_atomic(mu: AtomicMeasure, T: int) -> KernelMatrix:
    """``K(s, t) = sum_j w_j p_j**s conj(p_j)**t`` for ``0 <= s, t <= T``."""
    if T < 0:
        raise ConfigurationError("horizon must be >= 0")
    return KernelMatrix(_moments(mu.poles, mu.weights, T), "atomic", mu)


def kernel_empirical(ps, T: int) -> KernelMatrix:
    """Empirical kernel of sampled poles (uniform weights ``1/M``).

    Accepts a :class:`PoleSet` or a plain array of poles; the result is the
    atomic kernel of :meth:`AtomicMeasure.uniform` bit for bit.
    """
    poles = ps.poles if isinstance(ps, PoleSet) else np.asarray(ps, dtype=complex)
    mu = AtomicMeasure.uniform(poles)
    return KernelMatrix(kernel_atomic(mu, T).entries, "empirical", ps)


def kernel_quadrature(region: PoleRegion, T: int, nodes: int = 256) -> KernelMatrix:
    """Target kernel of the i.i.d. law of :func:`draw_iid` by quadrature.

    The law factorizes into a radial part (pushed forward from a uniform
    variable, integrated by Gauss-Legendre in that variable) and an angular
    part symmetric under conjugation, so
    ``K(s, t) = E[r**(s+t)] * E[cos((s - t) * theta)]`` on the band part,
    plus the real-axis part.
    """
    x, wq = np.polynomial.legendre.leggauss(nodes)
    u, wq = 0.5 * (x + 1.0), 0.5 * wq
    r = region.draw_radii(u)
    k = np.arange(2 * T + 1)
    radial = (wq[:, None] * r[:, None] ** k[None, :]).sum(axis=0)  # E[r^k]
    s = np.arange(T + 1)
    S, Tt = np.meshgrid(s, s, indexing="ij")
    K = np.zeros((T + 1, T + 1))
    p_real = region.p_real
    if region.angle_bands and p_real < 1.0:
        bands = np.asarray(region.angle_bands)
        lengths = bands[:, 1] - bands[:, 0]
        diff = np.arange(T + 1)
        if lengths.sum() == 0.0:
            ang = np.mean(np.cos(diff[:, None] * bands[None, :, 0]), axis=1)
        else:
            ang = np.zeros(T + 1)
            for (lo, hi), ln in zip(bands, lengths):
                if ln == 0.0:
                    continue
                xa, wa = np.polynomial.legendre.leggauss(nodes)
                th = lo + 0.5 * (xa + 1.0) * ln
                ang += (0.5 * ln * wa[None, :] * np.cos(diff[:, None] * th[None, :])).sum(axis=1)
            ang /= lengths.sum()
        K += (1.0 - p_real) * radial[S + Tt] * ang[np.abs(S - Tt)]
    if p_real > 0.0:
        sign = np.ones_like(S, dtype=float)
        if region.real_sign == "both":
            sign = np.where((S + Tt) % 2 == 0, 1.0, 0.0)
        K += p_real * radial[S + Tt] * sign
    return KernelMatrix(K.astype(complex), "quadrature", region)


def kernel_operator(A, b, T: int) -> KernelMatrix:
    """``K(s, t) = <A^s b, A^t b>`` (inner product linear in the first slot)."""
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex).reshape(-1)
    X = np.empty((T + 1, len(b)), dtype=complex)
    x = b
    for t in range(T + 1):
        X[t] = x
        x = A @ x
    return KernelMatrix(X @ X.conj().T, "operator", (A, b))


def normal_to_atomic(A, b, tol: float = 1e-10) -> AtomicMeasure:
    """Atomic measure realizing the kernel of a normal pair ``(A, b)``.

    A normal ``A = V diag(p) V*`` gives weights ``|(V* b)_j|**2`` at the
    eigenvalues.  Raises :class:`DomainError` if ``A`` is not normal.
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex).reshape(-1)
    comm = np.linalg.norm(A @ A.conj().T - A.conj().T @ A)
    if comm > tol * max(1.0, np.linalg.norm(A) ** 2):
        raise DomainError(f"operator is not normal (commutator norm {comm:.3g})")
    # Schur form of a normal matrix is diagonal with a unitary factor
    from scipy.linalg import schur

    Tm, Q = schur(A, output="complex")
    return AtomicMeasure(np.diag(Tm).copy(), np.abs(Q.conj().T @ b) ** 2)


def radius_defect(K: KernelMatrix, rho: float):
    """``D(s, t) = rho**2 K(s, t) - K(s+1, t+1)`` on ``0..T-1`` and its min eigenvalue."""
    E = K.entries
    if E.shape[0] < 2:
        raise ConfigurationError("radius defect needs horizon >= 1")
    D = rho**2 * E[:-1, :-1] - E[1:, 1:]
    D = 0.5 * (D + D.conj().T)
    return D, float(np.linalg.eigvalsh(D).min())


def shift_contractivity_check(K: KernelMatrix, rho: float, rtol: float = EIG_RTOL) -> bool:
    """True iff the radius defect is PSD, i.e. the shift has norm ``<= rho``."""
    _, lam = radius_defect(K, rho)
    return lam >= -rtol * max(K.trace, 0.0)


@dataclass
class EmbeddingCheck:
    lhs: float
    rhs: float
    head: float
    tail: float
    n_terms: int

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def embedding_bound_check(mu: AtomicMeasure, a, rho: float | None = None,
                          n_terms: int | None = None) -> EmbeddingCheck:
    """Compare ``sum_t |h(t)|`` with ``sqrt(||mu||)/(1-rho) * ||h||_H``.

    ``h = sum_s a_s K(., s)``, i.e. ``h(t) = sum_j w_j beta_j p_j**t`` with
    ``beta_j = sum_s a_s conj(p_j)**s``.  The left side sums the first
    ``n_terms`` samples exactly and adds the certified geometric tail
    ``sum_j w_j |beta_j| r_j**n / (1 - r_j)``.
    """
    rho = mu.rho if rho is None else float(rho)
    if rho >= 1.0:
        raise DomainError("embedding bound needs rho < 1")
    if mu.rho > rho + 1e-15:
        raise DomainError(f"measure support radius {mu.rho} exceeds rho={rho}")
    a = np.asarray(a, dtype=complex).reshape(-1)
    S = len(a) - 1
    p, w = mu.poles, mu.weights
    beta = np.power(p.conj()[:, None], np.arange(S + 1)[None, :]) @ a
    if n_terms is None:
        n_terms = S + 1 + (int(np.ceil(np.log(1e-18) / np.log(rho))) if rho > 0 else 1)
    t = np.arange(n_terms)
    h = np.power(p[None, :], t[:, None]) @ (w * beta)
    head = float(np.abs(h).sum())
    r = np.abs(p)
    tail = float(np.sum(w * np.abs(beta) * r**n_terms / (1.0 - r)))
    K = _moments(p, w, S)
    norm2 = max(float(np.real(a.conj() @ K @ a)), 0.0)
    rhs = np.sqrt(mu.total_mass) / (1.0 - rho) * np.sqrt(norm2)
    return EmbeddingCheck(head + tail, float(rhs), head, tail, n_terms)


def hoeffding_bound(M: int, T: int, eps) -> np.ndarray:
    """``4 (T+1)**2 exp(-M eps**2 / 8)``."""
    return 4.0 * (T + 1) ** 2 * np.exp(-M * np.asarray(eps, dtype=float) ** 2 / 8.0)


@dataclass
class HoeffdingReport:
    """Deviation statistics of the empirical kernel over Monte Carlo trials."""

    M: int
    T: int
    trials: int
    eps: np.ndarray
    empirical_rate: np.ndarray
    rate_sigma: np.ndarray
    bound: np.ndarray
    deviations: np.ndarray
    seed: int
    region: dict

    @property
    def mean_deviation(self) -> float:
        return float(self.deviations.mean())

    def to_dict(self) -> dict:
        return {
            "M": self.M, "T": self.T, "trials": self.trials, "seed": self.seed,
            "region": self.region,
            "eps": self.eps.tolist(),
            "empirical_rate": self.empirical_rate.tolist(),
            "rate_sigma": self.rate_sigma.tolist(),
            "bound": self.bound.tolist(),
            "mean_deviation": self.mean_deviation,
            "deviations": self.deviations.tolist(),
        }

    def curve_rows(self):
        return [{"eps": float(e), "empirical_rate": float(r), "rate_sigma": float(s),
                 "bound": float(b)}
                for e, r, s, b in zip(self.eps, self.empirical_rate, self.rate_sigma, self.bound)]


def hoeffding_experiment(region: PoleRegion, M: int, T: int, trials: int, seed: int = 0,
                         eps=None, target: KernelMatrix | None = None) -> HoeffdingReport:
    """Monte Carlo tail of ``max_{s,t} |K_hat_M - K|`` against the Hoeffding envelope.

    Each trial draws ``M`` i.i.d. poles with its own child seed.  The target
    defaults to :func:`kernel_quadrature` of the region.
    """
    if trials < 1 or M < 1:
        raise ConfigurationError("need trials >= 1 and M >= 1")
    target = kernel_quadrature(region, T) if target is None else target
    eps = np.linspace(0.0, 0.5, 51) if eps is None else np.asarray(eps, dtype=float)
    dev = np.empty(trials)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        p = draw_iid(region, M, np.random.Generator(np.random.PCG64(child)))
        dev[i] = np.abs(kernel_empirical(p, T).entries - target.entries).max()
    rate = (dev[None, :] > eps[:, None]).mean(axis=1)
    sigma = np.sqrt(rate * (1.0 - rate) / trials)
    return HoeffdingReport(M, T, trials, eps, rate, sigma, hoeffding_bound(M, T, eps), dev,
                           seed, region.to_dict())


def amls_transform(p):
    """``(alpha, omega) = (-log|p|, arg p)``; ``p = 0`` maps to ``alpha = inf``."""
    p = np.asarray(p, dtype=complex)
    r = np.abs(p)
    with np.errstate(divide="ignore"):
        alpha = -np.log(r)
    return alpha, np.angle(p)


def amls_inverse(alpha, omega):
    return np.exp(-np.asarray(alpha, dtype=float) + 1j * np.asarray(omega, dtype=float))


def amls_kernel_entry(alpha, omega, s, t):
    """``exp(-alpha (s+t)) exp(i omega (s-t))``, equal to ``p**s conj(p)**t``."""
    return np.exp(-alpha * (s + t)) * np.exp(1j * omega * (s - t))


@dataclass
class CounterexampleReport:
    kernel: KernelMatrix
    diagonal: np.ndarray
    kernel_min_eig: float
    defect_min_eig: float
    moments_required: tuple
    arithmetic_contradiction: bool
    lp_status: int
    lp_message: str
    radii: np.ndarray

    @property
    def lp_infeasible(self) -> bool:
        return self.lp_status == 2

    @property
    def passed(self) -> bool:
        tr = self.kernel.trace
        return (self.kernel_min_eig >= -1e-12 * tr and self.defect_min_eig >= -1e-12
                and self.arithmetic_contradiction and self.lp_infeasible)

    def to_dict(self) -> dict:
        return {
            "diagonal": self.diagonal.real.tolist(),
            "kernel_min_eig": self.kernel_min_eig,
            "defect_min_eig": self.defect_min_eig,
            "moments_required": list(self.moments_required),
            "arithmetic_contradiction": self.arithmetic_contradiction,
            "lp_status": self.lp_status,
            "lp_message": self.lp_message,
            "lp_infeasible": self.lp_infeasible,
            "passed": self.passed,
        }


def counterexample_check(T: int = 6, grid_step: float = 0.05) -> CounterexampleReport:
    """Shift-contractive kernel that no disk measure represents.

    Uses the nilpotent ``A = [[0, 1], [0, 0]]`` with ``b = (0, 1)``: the
    kernel is PSD and its unit-radius defect is PSD, yet the diagonal
    moments ``(1, 1, 0)`` would need ``int |p|**4 dmu = 0`` together with
    ``int |p|**2 dmu = 1``.
    """
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([0.0, 1.0])
    K = kernel_operator(A, b, T)
    K = KernelMatrix(K.entries, "counterexample", (A, b))
    diag = np.diag(K.entries).copy()
    _, dmin = radius_defect(K, 1.0)
    m0, m2, m4 = (float(diag[k].real) for k in range(3))
    # m4 = 0 forces mu to live on {0}; then m2 = 0, contradicting m2 = 1
    contradiction = m4 == 0.0 and m2 > 0.0
    radii = np.round(np.arange(0.0, 1.0 + grid_step / 2, grid_step), 12)
    A_eq = np.vstack([np.ones_like(radii), radii**2, radii**4])
    lp = linprog(np.zeros_like(radii), A_eq=A_eq, b_eq=[m0, m2, m4],
                 bounds=[(0, None)] * len(radii), method="highs")
    return CounterexampleReport(K, diag, K.min_eig(), dmin, (m0, m2, m4), contradiction,
                                int(lp.status), str(lp.message), radii)


@dataclass(frozen=True)
class PickData:
    """Scalar interpolation data ``F(zeta_i) = W_i``."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.nodes, dtype=complex).reshape(-1)
        w = np.asarray(self.values, dtype=complex).reshape(-1)
        if z.shape != w.shape:
            raise ConfigurationError("nodes and values differ in length")
        if np.any(np.abs(z) >= 1.0):
            raise DomainError("interpolation nodes must lie in the open unit disk")
        if len(np.unique(z)) != len(z):
            raise ConfigurationError("interpolation nodes must be distinct")
        object.__setattr__(self, "nodes", z)
        object.__setattr__(self, "values", w)


def pick_matrix(data: PickData, rtol: float = EIG_RTOL):
    """Pick matrix ``(1 - W_i conj W_j) / (1 - z_i conj z_j)`` and its PSD flag."""
    z, w = data.nodes, data.values
    P = (1.0 - w[:, None] * w.conj()[None, :]) / (1.0 - z[:, None] * z.conj()[None, :])
    P = 0.5 * (P + P.conj().T)
    lam = np.linalg.eigvalsh(P).min()
    return P, bool(lam >= -rtol * abs(np.trace(P).real))


def blaschke(zeros, zeta, phase: float = 0.0):
    """Finite Blaschke product ``e^{i phase} prod (zeta - a)/(1 - conj(a) zeta)``."""
    zeta = np.asarray(zeta, dtype=complex)
    out = np.full(zeta.shape, np.exp(1j * phase), dtype=complex)
    for a in np.atleast_1d(np.asarray(zeros, dtype=complex)):
        out = out * (zeta - a) / (1.0 - np.conj(a) * zeta)
    return out


def normalized_kernel(K: KernelMatrix, rho: float, gamma: float = 1.0,
                      rtol: float = 1e-10) -> KernelMatrix:
    """``K(s, t) / (gamma**2 rho**(s+t))`` with the defect identity verified.

    Raises :class:`NumericalError` if
    ``Kn(s,t) - Kn(s+1,t+1) = (rho**2 K(s,t) - K(s+1,t+1)) / (gamma**2 rho**(s+t+2))``
    fails beyond ``rtol`` relative to the largest entry involved.
    """
    if not 0.0 < rho <= 1.0:
        raise DomainError("rho must lie in (0, 1]")
    if not gamma > 0.0:
        raise DomainError("gamma must be positive")
    E = K.entries
    s = np.arange(E.shape[0])
    scale = gamma**2 * rho ** (s[:, None] + s[None, :])
    Kn = E / scale
    err = normalized_defect_error(K, Kn, rho, gamma)
    if err > rtol:
        raise NumericalError(f"normalized defect identity off by {err:.3g}")
    return KernelMatrix(Kn, K.provenance, K.source)


def normalized_defect_error(K: KernelMatrix, Kn: np.ndarray, rho: float, gamma: float) -> float:
    E = K.entries
    n = E.shape[0] - 1
    if n < 1:
        return 0.0
    s = np.arange(n)
    lhs = Kn[:-1, :-1] - Kn[1:, 1:]
    rhs = (rho**2 * E[:-1, :-1] - E[1:, 1:]) / (gamma**2 * rho ** (s[:, None] + s[None, :] + 2))
    ref = max(np.abs(Kn).max(), 1e-300)
    return float(np.abs(lhs - rhs).max() / ref)
