"""Reference computations used by the tests.

Each oracle is written from the defining formula, without calling the
routine it checks, so agreement is evidence rather than tautology.
"""

import numpy as np
from scipy.optimize import brentq


def brute_convolve(p, u):
    """``sum_{k<=t} p**(t-k) u(k)`` by ``np.convolve`` on the truncated kernel."""
    u = np.asarray(u, dtype=float)
    N = len(u)
    kern = np.power(complex(p), np.arange(N))
    return np.convolve(kern, u)[:N]


def direct_gram(p_i, p_j, T):
    z = np.conj(complex(p_i)) * complex(p_j)
    total = 0j
    term = 1 + 0j
    for _ in range(T):
        total += term
        term *= z
    return total


def impulse_from_poles(poles, residues, T, D=0.0):
    """``h(t) = sum c p**t`` with each complex pole's conjugate carrying ``conj(c)``."""
    t = np.arange(T)
    h = np.zeros(T)
    for p, c in zip(poles, residues):
        term = c * np.power(complex(p), t)
        h += 2 * term.real if complex(p).imag != 0 else term.real
    h[0] += D
    return h


def ridge(Z, y, lam2):
    """Minimizer of ``1/2||y - Zw||^2 + lam2 ||w||^2``."""
    n = Z.shape[1]
    return np.linalg.solve(Z.T @ Z + 2 * lam2 * np.eye(n), Z.T @ y)


def project_weighted_simplex(v, a, b):
    """Euclidean projection onto ``{x >= 0, a.x = b}`` for ``a > 0``, ``b >= 0``."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)

    def g(tau):
        return a @ np.maximum(v - tau * a, 0.0) - b

    lo, hi = -1.0, 1.0
    while g(lo) < 0:
        lo *= 2
    while g(hi) > 0:
        hi *= 2
    tau = brentq(g, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=500)
    return np.maximum(v - tau * a, 0.0)


def project_affine(v, A, b):
    """Projection onto ``{x : A x = b}`` (``A`` with full row rank)."""
    A = np.atleast_2d(A)
    return v - A.T @ np.linalg.solve(A @ A.T, A @ v - b)


def fista(P, q, project, iters=100_000, x0=None):
    """Accelerated projected gradient on ``1/2 x'Px + q'x`` over a convex set."""
    L = np.linalg.eigvalsh(P).max()
    x = project(np.zeros(len(q)) if x0 is None else x0)
    yk, tk = x.copy(), 1.0
    for _ in range(iters):
        x_new = project(yk - (P @ yk + q) / L)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        yk = x_new + (tk - 1) / t_new * (x_new - x)
        x, tk = x_new, t_new
    return x


def quadratic_value(P, q, const, x):
    return 0.5 * x @ P @ x + q @ x + const
