"""Operator-splitting solver for quadratic objectives over conic constraints.

Problem form::

    minimize    1/2 x'Px + q'x + sum_g w_g ||A_g x||_2
    subject to  b_i - A_i x in K_i          (K_i zero, nonneg or SOC)

The group-norm terms enter through their proximal map (block soft
threshold); the cone constraints through Euclidean projections.  The
iteration follows the OSQP splitting (x-step with one cached Cholesky
factorization, over-relaxed z-step, scaled dual update) on a
row-equilibrated copy of the data, with safeguarded Anderson mixing of
the iterates.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ..errors import NumericalError

log = logging.getLogger(__name__)

CONE_KINDS = ("zero", "nonneg", "soc", "group")


@dataclass
class ConeBlock:
    """Rows ``A`` (m x n) and offset ``b`` with ``b - A x`` in the cone.

    For ``kind == "group"`` the block is not a constraint but the penalty
    ``weight * ||A x||_2`` (``b`` is ignored).
    """

    kind: str
    A: np.ndarray
    b: np.ndarray
    weight: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != len(self.b):
            raise ValueError(f"block {self.name!r}: A has {self.A.shape[0]} rows, b has {len(self.b)}")
        if self.kind == "soc" and len(self.b) < 1:
            raise ValueError("second-order cone block needs at least one row")

    @property
    def size(self) -> int:
        return len(self.b)


@dataclass
class ConicResult:
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    rho: float
    certificate: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "solved"


def project_soc(v: np.ndarray) -> np.ndarray:
    """Project rows of ``v`` (k x d, first entry the cone 'height') onto SOC."""
    t = v[:, 0]
    x = v[:, 1:]
    nx = np.linalg.norm(x, axis=1)
    out = v.copy()
    below = nx <= -t
    out[below] = 0.0
    mid = (nx > np.abs(t)) & ~below
    if np.any(mid):
        s = 0.5 * (t[mid] + nx[mid])
        out[mid, 0] = s
        out[mid, 1:] = (s / nx[mid])[:, None] * x[mid]
    return out


class _Layout:
    """Row bookkeeping so that projections run vectorized per cone family."""

    def __init__(self, blocks):
        self.blocks = list(blocks)
        starts = np.cumsum([0] + [blk.size for blk in self.blocks])
        self.m = int(starts[-1])
        self.slices = [slice(int(starts[i]), int(starts[i + 1])) for i in range(len(self.blocks))]
        zero, nonneg = [], []
        soc, grp, grp_w = {}, {}, {}
        for blk, sl in zip(self.blocks, self.slices):
            idx = np.arange(sl.start, sl.stop)
            if blk.kind == "zero":
                zero.append(idx)
            elif blk.kind == "nonneg":
                nonneg.append(idx)
            elif blk.kind == "soc":
                soc.setdefault(blk.size, []).append(idx)
            else:
                grp.setdefault(blk.size, []).append(idx)
                grp_w.setdefault(blk.size, []).append(blk.weight)
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=int)  # noqa: E731
        self.zero = cat(zero)
        self.nonneg = cat(nonneg)
        self.soc = {d: np.vstack(v) for d, v in soc.items()}
        self.grp = {d: np.vstack(v) for d, v in grp.items()}
        self.grp_w = {d: np.asarray(v, dtype=float) for d, v in grp_w.items()}
        self.cone_blocks = [np.arange(sl.start, sl.stop)
                            for blk, sl in zip(self.blocks, self.slices)
                            if blk.kind in ("soc", "group")]

    def stack(self, n):
        if not self.blocks:
            return np.zeros((0, n)), np.zeros(0)
        A = np.vstack([blk.A for blk in self.blocks])
        b = np.concatenate([blk.b for blk in self.blocks])
        return A, b


def _equilibrate(P, A, q, layout, mode="rows", iters=10):
    """Diagonal scaling ``P -> c D P D``, ``A -> E A D``, ``q -> c D q``.

    ``mode="rows"`` normalizes the rows of the affine map only (``D = I``);
    ``mode="kkt"`` runs modified Ruiz iterations on ``[[P, A'], [A, 0]]``.
    Cone blocks share one row scale (their largest row norm), so cones and
    group norms are preserved.  Factors are confined to ``[1e-4, 1e4]``.
    """
    n, m = P.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    lo, hi = 1e-4, 1e4

    def row_norms(As):
        rn = np.abs(As).max(axis=1)
        for idx in layout.cone_blocks:
            rn[idx] = rn[idx].max()
        rn[rn == 0.0] = 1.0
        return rn

    if mode == "rows" and m:
        E = np.clip(1.0 / row_norms(A), lo, hi)
    elif mode == "kkt":
        for _ in range(iters):
            Ps = D[:, None] * P * D[None, :]
            As = E[:, None] * A * D[None, :]
            dn = np.maximum(np.abs(Ps).max(axis=0, initial=0.0),
                            np.abs(As).max(axis=0, initial=0.0))
            dn[dn == 0.0] = 1.0
            D = np.clip(D / np.sqrt(np.clip(dn, lo, hi)), lo, hi)
            if m:
                E = np.clip(E / np.sqrt(np.clip(row_norms(As), lo, hi)), lo, hi)
    elif mode is not None and mode != "rows":
        raise ValueError(f"unknown equilibration mode {mode!r}")
    Ps = D[:, None] * P * D[None, :]
    As = E[:, None] * A * D[None, :]
    qs = D * q
    ref = max(np.abs(Ps).max(axis=0).mean() if n else 0.0, np.abs(qs).max(initial=0.0))
    c = 1.0 / np.clip(ref, lo, hi) if ref > 0 else 1.0
    return c * Ps, As, c * qs, D, E, c


def _support_ok(layout, dy, b, tol):
    """Support function of the constraint set at ``dy`` (inf if outside dual cone)."""
    scale = np.abs(dy).max()
    val = 0.0
    if layout.zero.size:
        val += b[layout.zero] @ dy[layout.zero]
    if layout.nonneg.size:
        d = dy[layout.nonneg]
        if np.any(d < -tol * scale):
            return np.inf
        val += b[layout.nonneg] @ d
    for idx in layout.soc.values():
        d = dy[idx]
        if np.any(d[:, 0] < np.linalg.norm(d[:, 1:], axis=1) - tol * scale):
            return np.inf
        val += np.sum(b[idx] * d)
    for idx in layout.grp.values():
        if np.any(np.abs(dy[idx]) > tol * scale):
            return np.inf
    return val


def _dual_cone_project(layout, v):
    out = v.copy()
    if layout.nonneg.size:
        out[layout.nonneg] = np.maximum(v[layout.nonneg], 0.0)
    for idx in layout.soc.values():
        out[idx] = project_soc(v[idx])
    for idx in layout.grp.values():
        out[idx] = 0.0
    return out


def _polish_certificate(layout, A0, b, dy, iters=5000):
    """Alternating projections from ``dy`` toward ``{A'v = 0, v in K*, b'v <= -1}``.

    Returns ``(|A'v|/|v|, b'v/|v|)`` for the final ``v``, which lies exactly
    in the dual cone, or None when ``dy`` has no negative support to start from.
    """
    supp = _support_ok(layout, dy, b, 1e-6)
    if not np.isfinite(supp) or supp >= 0:
        return None
    # group rows carry a zero dual-cone component, so work on the constraint rows
    keep = np.ones(len(b), dtype=bool)
    for idx in layout.grp.values():
        keep[idx.ravel()] = False
    Ac, bc = A0[keep], b[keep]
    if bc @ bc == 0:
        return None
    sub = _Layout([blk for blk in layout.blocks if blk.kind != "group"])
    U, s, _ = np.linalg.svd(Ac, full_matrices=False)
    Q = U[:, s > 1e-12 * s.max(initial=0.0)]
    v = dy[keep] / -supp
    best = np.inf
    for k in range(1, iters + 1):
        v = v - Q @ (Q.T @ v)
        v = _dual_cone_project(sub, v)
        gap = bc @ v + 1.0
        if gap > 0:
            v = v - gap / (bc @ bc) * bc
        if k % 250 == 0:
            # linear convergence when the certificate set is nonempty; stop on a stall
            r = np.abs(Ac.T @ v).max() / max(np.abs(v).max(), 1e-300)
            if r < 1e-13 or r > 0.5 * best:
                break
            best = r
    v = _dual_cone_project(sub, v)
    nv = np.abs(v).max(initial=0.0)
    if nv == 0:
        return None
    return float(np.abs(Ac.T @ v).max() / nv), float(bc @ v / nv)

class _Anderson:
    """Type-II Anderson mixing for a fixed-point map ``s -> f(s)``."""

    def __init__(self, memory: int):
        self.memory = memory
        self.reset()

    def reset(self):
        self.last = None
        self.dF, self.dG = [], []

    def step(self, f, g):
        """Record ``(f, g = f - s)`` and return the mixed point (or None)."""
        if self.last is not None:
            self.dF.append(f - self.last[0])
            self.dG.append(g - self.last[1])
            if len(self.dF) > self.memory:
                self.dF.pop(0)
                self.dG.pop(0)
        self.last = (f, g)
        if not self.dG:
            return None
        dG = np.column_stack(self.dG)
        H = dG.T @ dG
        reg = 1e-10 * np.trace(H) + 1e-300
        try:
            gamma = linalg.solve(H + reg * np.eye(len(H)), dG.T @ g, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            self.reset()
            return None
        out = f - np.column_stack(self.dF) @ gamma
        return out if np.all(np.isfinite(out)) else None


def solve_conic(
    P,
    q,
    blocks,
    *,
    eps_abs: float = 1e-10,
    eps_rel: float = 1e-8,
    max_iter: int = 50_000,
    alpha: float = 1.6,
    sigma: float = 1e-6,
    rho: float = 0.1,
    adaptive_rho: bool = True,
    check_every: int = 10,
    equilibrate: str | None = "rows",
    eps_infeas: float = 1e-7,
    anderson: int = 10,
    warm_start: dict | None = None,
) -> ConicResult:
    """Solve the conic program described in the module docstring.

    Returns a :class:`ConicResult` whose ``status`` is ``"solved"``,
    ``"max_iter"`` or ``"infeasible"``.  Residuals are reported in the
    original (unscaled) data.  ``anderson`` is the memory of the
    safeguarded Anderson acceleration applied to the iteration map
    (0 turns it off).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float).reshape(-1)
    n = len(q)
    layout = _Layout(blocks)
    A0, b0 = layout.stack(n)
    m = layout.m

    def objective(x):
        val = 0.5 * x @ P @ x + q @ x
        for blk in layout.blocks:
            if blk.kind == "group":
                val += blk.weight * np.linalg.norm(blk.A @ x)
        return float(val)

    if m == 0:
        try:
            x = linalg.solve(P, -q, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            x = np.linalg.lstsq(P, -q, rcond=None)[0]
        rd = float(np.abs(P @ x + q).max(initial=0.0))
        return ConicResult(x, np.zeros(0), np.zeros(0), "solved", 0, 0.0, rd, objective(x), rho)

    Ps, As, qs, D, E, c = _equilibrate(P, A0, q, layout, equilibrate)
    bs = E * b0
    gw = {d: c * layout.grp_w[d] / E[idx[:, 0]] for d, idx in layout.grp.items()}

    rho_vec = np.full(m, rho)
    if layout.zero.size:
        rho_vec[layout.zero] = 1e3 * rho

    def factor(rv):
        K = Ps + sigma * np.eye(n) + As.T @ (rv[:, None] * As)
        try:
            return linalg.cho_factor(K, lower=False, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError("KKT factorization failed") from exc

    cho = factor(rho_vec)

    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)
    if warm_start:
        if warm_start.get("x") is not None:
            x = np.asarray(warm_start["x"], dtype=float) / D
        if warm_start.get("z") is not None and len(warm_start["z"]) == m:
            z = E * np.asarray(warm_start["z"], dtype=float)
        else:
            z = As @ x
        if warm_start.get("y") is not None and len(warm_start["y"]) == m:
            y = c * np.asarray(warm_start["y"], dtype=float) / E

    def prox(v, rv):
        out = v.copy()
        if layout.zero.size:
            out[layout.zero] = bs[layout.zero]
        if layout.nonneg.size:
            i = layout.nonneg
            out[i] = np.minimum(v[i], bs[i])
        for idx in layout.soc.values():
            out[idx] = bs[idx] - project_soc(bs[idx] - v[idx])
        for d, idx in layout.grp.items():
            vv = v[idx]
            nv = np.linalg.norm(vv, axis=1)
            thr = gw[d] / rv[idx[:, 0]]
            with np.errstate(invalid="ignore", divide="ignore"):
                shrink = np.where(nv > thr, 1.0 - thr / np.where(nv > 0, nv, 1.0), 0.0)
            out[idx] = shrink[:, None] * vv
        return out

    def unscaled_residuals(x, z, y):
        xu = D * x
        zu = z / E
        yu = E * y / c
        Ax = A0 @ xu
        Px = P @ xu
        Aty = A0.T @ yu
        rp = np.abs(Ax - zu).max(initial=0.0)
        rd = np.abs(Px + q + Aty).max(initial=0.0)
        ep = eps_abs + eps_rel * max(np.abs(Ax).max(initial=0.0), np.abs(zu).max(initial=0.0))
        ed = eps_abs + eps_rel * max(np.abs(Px).max(initial=0.0), np.abs(Aty).max(initial=0.0),
                                     np.abs(q).max(initial=0.0))
        return rp, rd, ep, ed, xu, zu, yu

    def admm_map(x, z, y, rv):
        rhs = sigma * x - qs + As.T @ (rv * z - y)
        xt = linalg.cho_solve(cho, rhs, check_finite=False)
        zt = As @ xt
        xn = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        zn = prox(zr + y / rv, rv)
        return xn, zn, y + rv * (zr - zn)

    def pack(x, z, y):
        return np.concatenate([x, z, y])

    def unpack(s):
        return s[:n], s[n:n + m], s[n + m:]

    aa = _Anderson(anderson) if anderson else None
    status = "max_iter"
    cert_hits = 0
    certificate = {}
    y_ref = None
    last_polish = -np.inf
    it = 0
    rp = rd = np.inf
    s_cur = pack(x, z, y)
    g_prev_norm = np.inf
    from_aa = False
    f_prev = None
    g_best, g_best_it = np.inf, 0
    for it in range(1, max_iter + 1):
        f = pack(*admm_map(*unpack(s_cur), rho_vec))
        g = f - s_cur
        g_norm = np.linalg.norm(g)
        if from_aa and g_norm > 2.0 * g_prev_norm:
            # safeguard: fall back to the plain step taken from the last point
            s_cur = f_prev
            f = pack(*admm_map(*unpack(s_cur), rho_vec))
            g = f - s_cur
            g_norm = np.linalg.norm(g)
            aa.reset()
        x, z, y = unpack(f)
        y_prev = unpack(s_cur)[2]
        if aa is not None:
            # an infeasible problem has a nonvanishing fixed-point residual; once
            # it stops shrinking, plain iterations let the dual certificate form
            if g_norm < 0.5 * g_best:
                g_best, g_best_it = g_norm, it
            elif it - g_best_it > 1000:
                aa, from_aa = None, False

        if it % check_every == 0 or it == max_iter:
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise NumericalError(f"non-finite iterate at iteration {it}")
            rp, rd, ep, ed, xu, zu, yu = unscaled_residuals(x, z, y)
            if rp <= ep and rd <= ed:
                status = "solved"
                break

            # primal infeasibility certificate from the dual increment over one
            # check interval (a longer baseline keeps it above rounding noise)
            dy = E * (y - (y_prev if y_ref is None else y_ref)) / c
            y_ref = y.copy()
            ndy = np.abs(dy).max(initial=0.0)
            if ndy > 0:
                atdy = np.abs(A0.T @ dy).max(initial=0.0)
                supp = _support_ok(layout, dy, b0, 1e-6)
                if atdy <= eps_infeas * ndy and supp < -eps_infeas * ndy:
                    cert_hits += 1
                    certificate = {"A_t_dy": float(atdy / ndy), "support": float(supp / ndy)}
                    if cert_hits >= 3:
                        status = "infeasible"
                        break
                else:
                    cert_hits = 0
                    if supp < -1e-3 * ndy and it - last_polish >= 500:
                        # a persistent but noisy increment: try to make it exact.
                        # Farkas: any feasible x has ||x||_1 >= |b'v| / |A'v|
                        last_polish = it
                        pol = _polish_certificate(layout, A0, b0, dy)
                        if pol is not None:
                            atv, sv = pol
                            xscale = max(1.0, np.abs(xu).sum())
                            if sv < -eps_infeas and atv * 1e6 * xscale <= -sv:
                                certificate = {"A_t_dy": atv, "support": sv, "polished": True}
                                status = "infeasible"
                                break

            if adaptive_rho and it % (5 * check_every) == 0:
                Axs = As @ x
                Pxs = Ps @ x
                Atys = As.T @ y
                num = np.abs(Axs - z).max() / max(np.abs(Axs).max(), np.abs(z).max(), 1e-30)
                # |A_ij y_i| does not cancel, so it keeps a scale when P = 0 and A'y -> 0
                den = np.abs(Pxs + qs + Atys).max() / max(np.abs(Pxs).max(), np.abs(Atys).max(),
                                                           np.abs(qs).max(),
                                                           np.abs(As * y[:, None]).max(), 1e-30)
                if den > 0 and num > 0:
                    new_rho = float(np.clip(rho * np.sqrt(num / den), 1e-6, 1e6))
                    if new_rho > 5 * rho or new_rho < rho / 5:
                        rho = new_rho
                        rho_vec = np.full(m, rho)
                        if layout.zero.size:
                            rho_vec[layout.zero] = 1e3 * rho
                        cho = factor(rho_vec)
                        if aa is not None:
                            aa.reset()
                        s_cur, from_aa, g_prev_norm = f, False, np.inf
                        y_ref = None
                        continue

        if aa is not None:
            cand = aa.step(f, g)
            from_aa = cand is not None
            f_prev = f
            g_prev_norm = g_norm
            s_cur = cand if from_aa else f
        else:
            s_cur = f

    rp, rd, ep, ed, xu, zu, yu = unscaled_residuals(x, z, y)
    if status == "max_iter":
        warnings.warn(
            f"conic solver hit max_iter={max_iter} (primal {rp:.2e}, dual {rd:.2e})",
            RuntimeWarning, stacklevel=2,
        )
    log.debug("solve_conic: %s after %d iterations, rp=%.2e rd=%.2e", status, it, rp, rd)
    return ConicResult(xu, zu, yu, status, it, float(rp), float(rd), objective(xu), rho,
                       certificate)
