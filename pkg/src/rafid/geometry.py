"""Conditioning of disk-Vandermonde dictionaries.

Columns ``a_T(p) = (1, p, ..., p**(T-1))`` have the closed-form Gram
``G_ij = (1 - (conj(p_i) p_j)**T) / (1 - conj(p_i) p_j)``.  Coherence,
its infinite-horizon limit and the pseudo-hyperbolic distance quantify how
distinguishable two atoms are; clustering under that distance localizes
active poles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

#: below this ``|1 - conj(p_i) p_j|`` the Gram entry is summed directly
SERIES_SWITCH = 1e-8


def _check_inside(*ps):
    for p in ps:
        if np.any(np.abs(p) >= 1.0):
            raise DomainError("poles must lie strictly inside the unit disk")


def gram_closed_form(p_i, p_j, T: int):
    """``sum_{t<T} (conj(p_i) p_j)**t`` via the geometric-series closed form.

    Broadcasts over array arguments.  Near ``conj(p_i) p_j = 1`` the
    finite sum is evaluated as ``T + x T(T-1)/2 + ...`` in powers of
    ``x = conj(p_i) p_j - 1``, which is exact to rounding there.
    """
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    z = np.conj(np.asarray(p_i, dtype=complex)) * np.asarray(p_j, dtype=complex)
    d = 1.0 - z
    near = np.abs(d) < SERIES_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(near, 0.0, (1.0 - z**T) / np.where(near, 1.0, d))
    if np.any(near):
        x = -d[near] if np.ndim(d) else -d
        series = _binomial_series(x, T)
        if np.ndim(out):
            out = out.astype(complex)
            out[near] = series
        else:
            out = series
    return out if np.ndim(out) else complex(out)


def _binomial_series(x, T):
    # sum_{t<T} (1+x)^t = sum_k C(T, k+1) x^k
    term = np.full(np.shape(x), float(T), dtype=complex)
    total = term.copy()
    for k in range(min(T - 1, 200)):
        term = term * x * (T - k - 1) / (k + 2)
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def gram_matrix(poles, T: int) -> np.ndarray:
    p = np.asarray(poles, dtype=complex).reshape(-1)
    return gram_closed_form(p[:, None], p[None, :], T)


def coherence_finite(p_i, p_j, T: int):
    """``|G_ij| / sqrt(G_ii G_jj)``, in ``[0, 1]``."""
    gij = gram_closed_form(p_i, p_j, T)
    gii = gram_closed_form(p_i, p_i, T).real
    gjj = gram_closed_form(p_j, p_j, T).real
    return np.minimum(np.abs(gij) / np.sqrt(gii * gjj), 1.0)


def coherence_infinite(p_i, p_j):
    """``sqrt((1-|p_i|^2)(1-|p_j|^2)) / |1 - conj(p_i) p_j|``."""
    p_i = np.asarray(p_i, dtype=complex)
    p_j = np.asarray(p_j, dtype=complex)
    _check_inside(p_i, p_j)
    num = np.sqrt((1.0 - np.abs(p_i) ** 2) * (1.0 - np.abs(p_j) ** 2))
    return np.minimum(num / np.abs(1.0 - np.conj(p_i) * p_j), 1.0)


def pseudo_hyperbolic(p, q):
    """``|p - q| / |1 - conj(p) q|`` for points of the open unit disk."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    _check_inside(p, q)
    return np.abs(p - q) / np.abs(1.0 - np.conj(p) * q)


def normalized_gram(poles, T: int) -> np.ndarray:
    G = gram_matrix(poles, T)
    d = np.sqrt(np.diag(G).real)
    N = G / (d[:, None] * d[None, :])
    return 0.5 * (N + N.conj().T)


@dataclass
class GershgorinResult:
    mu_s: float
    bound: float
    min_eig: float

    @property
    def holds(self) -> bool:
        return self.min_eig >= self.bound - 1e-10


def gershgorin_check(poles, T: int) -> GershgorinResult:
    """``lambda_min(G_S) >= 1 - (s-1) mu_s`` on the normalized sub-Gram."""
    p = np.asarray(poles, dtype=complex).reshape(-1)
    s = len(p)
    if s < 2:
        raise ConfigurationError("support needs at least two poles")
    N = normalized_gram(p, T)
    off = np.abs(N - np.diag(np.diag(N)))
    mu_s = float(min(off.max(), 1.0))
    return GershgorinResult(mu_s, 1.0 - (s - 1) * mu_s, float(np.linalg.eigvalsh(N).min()))


@dataclass
class CoherenceReport:
    """Pairwise coherence of a pole set plus Gershgorin data per support."""

    poles: np.ndarray
    horizon: int
    mu_T: np.ndarray
    mu_inf: np.ndarray
    supports: list
    checks: list

    @property
    def mu_max(self) -> float:
        n = len(self.poles)
        if n < 2:
            return 0.0
        return float(self.mu_T[~np.eye(n, dtype=bool)].max())

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "poles": [[float(p.real), float(p.imag)] for p in self.poles],
            "mu_T": self.mu_T.tolist(),
            "mu_inf": self.mu_inf.tolist(),
            "mu_max": self.mu_max,
            "supports": [
                {"indices": list(map(int, s)), "mu_s": c.mu_s, "gershgorin_bound": c.bound,
                 "min_eig": c.min_eig, "holds": c.holds}
                for s, c in zip(self.supports, self.checks)
            ],
        }

    def table_rows(self):
        n = len(self.poles)
        return [{"i": i, "j": j, "mu_T": float(self.mu_T[i, j]), "mu_inf": float(self.mu_inf[i, j])}
                for i in range(n) for j in range(n)]


def coherence_report(poles, T: int, supports=None) -> CoherenceReport:
    """Coherence matrices of ``poles`` and Gershgorin checks on ``supports``.

    ``supports`` defaults to the whole set (when it has two or more poles).
    """
    p = np.asarray(poles, dtype=complex).reshape(-1)
    mu_T = coherence_finite(p[:, None], p[None, :], T)
    mu_inf = coherence_infinite(p[:, None], p[None, :])
    if supports is None:
        supports = [np.arange(len(p))] if len(p) >= 2 else []
    checks = [gershgorin_check(p[np.asarray(s)], T) for s in supports]
    return CoherenceReport(p, T, mu_T, mu_inf, [np.asarray(s) for s in supports], checks)


@dataclass
class Cluster:
    members: np.ndarray
    representative: complex
    weight: float


def cluster_active(poles, weights, radius_threshold: float) -> list:
    """Single-linkage clusters under the pseudo-hyperbolic distance.

    Two poles are linked when their distance is strictly below
    ``radius_threshold``.  Each representative is the weighted arithmetic
    mean of its members (plain mean if all weights vanish); by convexity it
    stays inside the disk.  Clusters are ordered by their
    lowest member index, members ascending.
    """
    p = np.asarray(poles, dtype=complex).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if p.shape != w.shape:
        raise ConfigurationError("poles and weights differ in length")
    if np.any(w < 0):
        raise ConfigurationError("cluster weights must be nonnegative")
    n = len(p)
    if n == 0:
        return []
    from scipy.sparse.csgraph import connected_components

    adj = pseudo_hyperbolic(p[:, None], p[None, :]) < radius_threshold
    _, labels = connected_components(adj, directed=False)
    out = []
    seen = {}
    for i in range(n):
        seen.setdefault(labels[i], []).append(i)
    for members in sorted(seen.values(), key=lambda m: m[0]):
        idx = np.array(members)
        ww = w[idx]
        rep = np.average(p[idx], weights=ww) if ww.sum() > 0 else p[idx].mean()
        out.append(Cluster(idx, complex(rep), float(ww.sum())))
    return out
