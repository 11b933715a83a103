"""Design matrices built from sampled poles.

Two flavours share one container:

* impulse dictionaries, whose columns are the disk-Vandermonde atoms
  ``p**t`` split into real columns;
* input-output dictionaries, whose columns are the same atoms convolved
  with a measured input.

A conjugate pair ``(p, conj(p))`` with residue ``c`` on ``p`` contributes
the real signal ``2*Re(c * x_p(t))``, represented by the two columns
``2*Re(x_p)`` and ``-2*Im(x_p)`` with coefficients ``(Re c, Im c)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, PairingError
from .sampling import PoleSet, validate_pairing


@dataclass(frozen=True)
class TimeSeries:
    """Sampled input/output record starting at ``t = 0``."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if u.shape != y.shape:
            raise ConfigurationError(f"u and y lengths differ ({len(u)} vs {len(y)})")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ConfigurationError("time series contains non-finite values")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.u)

    def split(self, n_train: int):
        return (TimeSeries(self.u[:n_train], self.y[:n_train]),
                TimeSeries(self.u[n_train:], self.y[n_train:]))


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Real design matrix over pole groups.

    Attributes
    ----------
    pole_set : PoleSet
    horizon : int
        Number of rows ``T``.
    columns : ndarray, shape (T, n_real)
    norms : ndarray, shape (n_groups,)
        Normalization scalars; a column block of group ``g`` equals the raw
        block divided by ``norms[g]``.
    groups : tuple of ndarray
        Column indices per pole group (partition of the columns).
    kind : str
        ``"impulse"`` or ``"convolved"``.
    """

    pole_set: PoleSet
    horizon: int
    columns: np.ndarray
    norms: np.ndarray
    groups: tuple
    kind: str = "impulse"
    normalized: bool = False
    raw: np.ndarray = field(default=None, repr=False)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_columns(self) -> int:
        return self.columns.shape[1]

    @property
    def group_poles(self) -> np.ndarray:
        return self.pole_set.representatives

    @property
    def group_is_pair(self) -> np.ndarray:
        return np.array([len(g) == 2 for g in self.groups], dtype=bool)

    def column_scale(self) -> np.ndarray:
        """Per-column ``1/eta`` mapping coefficients to physical residue parts."""
        s = np.empty(self.n_columns)
        for g, cols in enumerate(self.groups):
            s[cols] = 1.0 / self.norms[g]
        return s

    def coefficients_to_residues(self, w) -> np.ndarray:
        """Complex residue per group (on the upper-half-plane pole)."""
        w = np.asarray(w, dtype=float)
        out = np.empty(self.n_groups, dtype=complex)
        for g, cols in enumerate(self.groups):
            if len(cols) == 2:
                out[g] = complex(w[cols[0]], w[cols[1]]) / self.norms[g]
            else:
                out[g] = w[cols[0]] / self.norms[g]
        return out

    def residues_to_coefficients(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        w = np.zeros(self.n_columns)
        for g, cols in enumerate(self.groups):
            if len(cols) == 2:
                w[cols[0]] = c[g].real * self.norms[g]
                w[cols[1]] = c[g].imag * self.norms[g]
            else:
                w[cols[0]] = c[g].real * self.norms[g]
        return w

    def group_norms(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.array([np.linalg.norm(w[cols]) for cols in self.groups])

    def subset(self, group_ids) -> "Dictionary":
        """Dictionary restricted to some groups, keeping their normalization."""
        group_ids = np.asarray(group_ids, dtype=int).reshape(-1)
        cols = [self.groups[g] for g in group_ids]
        flat = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        new_groups, k = [], 0
        for c in cols:
            new_groups.append(np.arange(k, k + len(c)))
            k += len(c)
        raw = self.raw[:, flat] if self.raw is not None else None
        return Dictionary(self.pole_set.subset(group_ids), self.horizon, self.columns[:, flat],
                          self.norms[group_ids].copy(), tuple(new_groups), self.kind,
                          self.normalized, raw)


def vandermonde(ps: PoleSet, T: int) -> np.ndarray:
    """Complex matrix ``V[t, m] = p_m**t`` for ``t < T`` (``0**0 = 1``)."""
    if T < 1:
        raise ConfigurationError("horizon T must be >= 1")
    t = np.arange(T)[:, None]
    return np.power(ps.poles[None, :], t)


def _check_pairs(ps: PoleSet):
    report = validate_pairing(ps)
    if not report.valid:
        raise PairingError(f"complex poles without conjugate partner at indices {report.orphans}")


def _split(ps: PoleSet, complex_cols: np.ndarray):
    cols, groups = [], []
    k = 0
    for g in ps.groups:
        x = complex_cols[:, g[0]]
        if len(g) == 2:
            cols.append(2.0 * x.real)
            cols.append(-2.0 * x.imag)
            groups.append(np.array([k, k + 1]))
            k += 2
        else:
            cols.append(x.real.copy())
            groups.append(np.array([k]))
            k += 1
    mat = np.column_stack(cols) if cols else np.zeros((complex_cols.shape[0], 0))
    return mat, tuple(groups)


def real_split(ps: PoleSet, T: int) -> Dictionary:
    """Unnormalized real impulse dictionary over horizon ``T``."""
    _check_pairs(ps)
    mat, groups = _split(ps, vandermonde(ps, T))
    return Dictionary(ps, T, mat, np.ones(len(groups)), groups, kind="impulse", raw=mat)


def convolve_poles(poles, u) -> np.ndarray:
    """Causal convolution of each ``p**t`` with ``u`` by state recursion.

    ``x(0) = u(0)`` and ``x(t+1) = p*x(t) + u(t+1)``, i.e. zero state
    before ``t = 0``.
    """
    poles = np.asarray(poles, dtype=complex).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    out = np.empty((len(u), len(poles)), dtype=complex)
    x = np.zeros(len(poles), dtype=complex)
    for t in range(len(u)):
        x = poles * x + u[t]
        out[t] = x
    return out


def convolved_design(ps: PoleSet, u) -> Dictionary:
    """Unnormalized input-output dictionary: atoms convolved with ``u``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if len(u) < 1:
        raise ConfigurationError("input sequence must be non-empty")
    _check_pairs(ps)
    mat, groups = _split(ps, convolve_poles(ps.poles, u))
    return Dictionary(ps, len(u), mat, np.ones(len(groups)), groups, kind="convolved", raw=mat)


def normalize_columns(d: Dictionary) -> Dictionary:
    """Scale each group to unit RMS column norm.

    A real pole's column gets unit norm; both columns of a conjugate pair
    are divided by the same ``eta`` (joint Frobenius norm over sqrt(2)),
    which keeps the group penalty invariant to the residue phase.
    """
    raw = d.raw if d.raw is not None else d.columns
    norms = np.empty(d.n_groups)
    for g, cols in enumerate(d.groups):
        nrm = np.linalg.norm(raw[:, cols])
        if not nrm > 0.0:
            raise DegenerateInputError(
                f"group {g} has an all-zero column block (zero excitation?)"
            )
        norms[g] = nrm / np.sqrt(len(cols))
    cols = raw / np.repeat(norms, [len(c) for c in d.groups])[None, :]
    return replace(d, columns=cols, norms=norms, normalized=True, raw=raw)


def build_design(ps: PoleSet, u, normalize: bool = True) -> Dictionary:
    d = convolved_design(ps, u)
    return normalize_columns(d) if normalize else d


def build_impulse(ps: PoleSet, T: int, normalize: bool = True) -> Dictionary:
    d = real_split(ps, T)
    return normalize_columns(d) if normalize else d


@dataclass
class GaugeResult:
    value: float
    coefficients: np.ndarray | None
    in_span: bool
    residual: float
    info: dict = field(default_factory=dict)


def atomic_gauge(h, d: Dictionary, tol: float = 1e-8, **solver_kw) -> GaugeResult:
    """Finite atomic gauge of ``h`` over the normalized atoms of ``d``.

    Minimizes ``sum_g ||w_g||_2`` subject to ``columns @ w = h``.  The
    signal counts as in the span when its least-squares residual is below
    ``tol * ||h||_2``; otherwise the result is out-of-span (value ``inf``).
    Coefficients are complex per group, ``w_re + 1j*w_im``.

    Notes
    -----
    Feasible coefficients are parametrized as ``w0 + N z`` with ``w0`` the
    minimum-norm solution and ``N`` an orthonormal basis of the numerical
    null space (singular values below ``1e-10 * s_max``).  With full column
    rank the gauge is read off ``w0`` directly; otherwise the group problem
    over ``z`` goes to the conic solver.
    """
    from .solver.admm import ConeBlock, solve_conic

    h = np.asarray(h, dtype=float).reshape(-1)
    if len(h) != d.horizon:
        raise ConfigurationError(f"h has length {len(h)}, dictionary horizon is {d.horizon}")
    hn = np.linalg.norm(h)
    if hn == 0.0:
        return GaugeResult(0.0, np.zeros(d.n_groups, dtype=complex), True, 0.0)
    A = d.columns
    n = d.n_columns
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * s.max())) if len(s) else 0
    hu = h / hn
    w0 = Vt[:rank].T @ ((U[:, :rank].T @ hu) / s[:rank])
    proj_res = np.linalg.norm(hu - A @ w0)
    if proj_res > tol:
        return GaugeResult(np.inf, None, False, float(proj_res))

    info = {"rank": rank}
    if rank == n:
        w = w0
        info["status"] = "closed_form"
    else:
        # variables (z, tau) with tau pinned to 1 by one equality row
        Nb = Vt[rank:].T
        k = Nb.shape[1]
        blocks = [ConeBlock("zero", np.eye(1, k + 1, k), [1.0], name="tau")]
        blocks += [ConeBlock("group", np.hstack([Nb[cols], w0[cols, None]]),
                             np.zeros(len(cols)), weight=1.0) for cols in d.groups]
        res = solve_conic(np.zeros((k + 1, k + 1)), np.zeros(k + 1), blocks, **solver_kw)
        w = w0 + Nb @ res.x[:k]
        info.update(status=res.status, iterations=res.iterations)
    w = w * hn
    coef = np.array([complex(w[c[0]], w[c[1]]) if len(c) == 2 else complex(w[c[0]], 0.0)
                     for c in d.groups])
    value = float(sum(np.linalg.norm(w[c]) for c in d.groups))
    return GaugeResult(value, coef, True, float(np.linalg.norm(h - A @ w) / hn), info=info)
