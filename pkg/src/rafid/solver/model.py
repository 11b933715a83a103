"""Identified RAF models and the quantities evaluated on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dictionary import convolve_poles
from ..errors import DomainError
from ..sampling import PoleSet


@dataclass(frozen=True, eq=False)
class RafModel:
    """Transfer function ``G(z) = D + sum_m c_m / (1 - p_m z^-1)``.

    ``residues`` holds one complex value per pole group of ``poles``; the
    conjugate member of a pair implicitly carries ``conj(c)``.
    """

    poles: PoleSet
    residues: np.ndarray
    D: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.residues, dtype=complex).reshape(-1)
        if len(c) != self.poles.n_groups:
            raise ValueError(f"{len(c)} residues for {self.poles.n_groups} pole groups")
        pair = self.poles.group_is_pair
        if np.any(c[~pair].imag != 0.0):
            raise ValueError("real poles need real residues")
        c.setflags(write=False)
        object.__setattr__(self, "residues", c)
        object.__setattr__(self, "D", float(self.D))

    @classmethod
    def zero(cls, poles: PoleSet | None = None, D: float = 0.0) -> "RafModel":
        poles = poles if poles is not None else PoleSet(np.zeros(0, complex), np.zeros(0, int))
        return cls(poles, np.zeros(poles.n_groups, dtype=complex), D)

    def expanded(self):
        """All poles and their residues (pair members listed separately)."""
        ps = self.poles
        p = np.empty(len(ps), dtype=complex)
        c = np.empty(len(ps), dtype=complex)
        for g, idx in enumerate(ps.groups):
            p[idx[0]] = ps.poles[idx[0]]
            c[idx[0]] = self.residues[g]
            if len(idx) == 2:
                p[idx[1]] = ps.poles[idx[1]]
                c[idx[1]] = np.conj(self.residues[g])
        return p, c

    def active(self, tol: float = 0.0) -> "RafModel":
        """Model restricted to groups with ``|c| > tol``."""
        keep = np.flatnonzero(np.abs(self.residues) > tol)
        return RafModel(self.poles.subset(keep), self.residues[keep], self.D, dict(self.diagnostics))

    def impulse_response(self, T: int) -> np.ndarray:
        p, c = self.expanded()
        t = np.arange(T)[:, None]
        h = (np.power(p[None, :], t) @ c).real if len(p) else np.zeros(T)
        return np.asarray(h, dtype=float)

    def to_dict(self) -> dict:
        return {
            "poles": [[float(p.real), float(p.imag)] for p in self.poles.representatives],
            "residues": [[float(c.real), float(c.imag)] for c in self.residues],
            "D": self.D,
            "diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RafModel":
        reps = np.array([complex(a, b) for a, b in d["poles"]], dtype=complex)
        c = np.array([complex(a, b) for a, b in d["residues"]], dtype=complex)
        return cls(PoleSet.from_representatives(reps), c, d.get("D", 0.0), d.get("diagnostics", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def frequency_response(model: RafModel, omega) -> np.ndarray:
    """``G(e^{i w}) = D + sum c_m / (1 - p_m e^{-i w})`` on a grid."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    p, c = model.expanded()
    zinv = np.exp(-1j * omega)[:, None]
    return model.D + (c[None, :] / (1.0 - p[None, :] * zinv)).sum(axis=1)


def dc_gain(model: RafModel) -> float:
    p, c = model.expanded()
    return float((model.D + np.sum(c / (1.0 - p))).real)


def budgets(model: RafModel, T_s: int = 0, t_step: int = 0) -> dict:
    """Mode-resolved envelopes; each bounds the corresponding simulated quantity.

    Returns a dict with keys ``settling`` (bound on ``sup_{t>=T_s}|h(t)|``),
    ``l1_tail`` (bound on ``sum_{t>=T_s}|h(t)|``), ``bibo`` (the case
    ``T_s = 0``), ``step_tail`` (bound on ``|s_inf - s(t_step)|``) and
    ``dc`` (``G(1)``).
    """
    p, c = model.expanded()
    r = np.abs(p)
    if np.any(r >= 1.0):
        raise DomainError("budgets require all poles strictly inside the unit disk")
    a = np.abs(c)
    return {
        "settling": float(np.sum(a * r**T_s)),
        "l1_tail": float(np.sum(a * r**T_s / (1.0 - r))),
        "bibo": float(np.sum(a / (1.0 - r))),
        "step_tail": float(np.sum(a * r ** (t_step + 1) / np.abs(1.0 - p))),
        "dc": dc_gain(model),
    }


def simulate(model: RafModel, u) -> np.ndarray:
    """Output ``y = h * u + D u`` via per-pole state recursions (zero initial state)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    ps = model.poles
    y = model.D * u
    if ps.n_groups == 0:
        return y
    reps = ps.representatives
    x = convolve_poles(reps, u)
    weight = np.where(ps.group_is_pair, 2.0, 1.0)
    return y + (x * (weight * model.residues)[None, :]).real.sum(axis=1)
