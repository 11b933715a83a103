"""Declarative prior constraints and their JSON schema.

Each record serializes to ``{"type": <name>, ...fields}``; a
:class:`ConstraintSet` is a list of such records.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigurationError


def _nonneg(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigurationError(f"{name} must be finite and >= 0")


@dataclass(frozen=True)
class TimeBox:
    """``|y(t) - y_model(t)| <= eps(t)``; ``eps`` scalar or per-sample."""

    eps: object

    def __post_init__(self):
        _nonneg("time_box.eps", self.eps)


@dataclass(frozen=True)
class WindowRMS:
    """``||W (y - y_model)||_2 <= eta``.

    ``window`` is either ``[start, stop)`` sample indices or a full-length
    vector of diagonal weights.
    """

    window: object
    eta: float

    def __post_init__(self):
        _nonneg("window_rms.eta", self.eta)

    def weights(self, N: int) -> np.ndarray:
        w = np.asarray(self.window, dtype=float)
        if w.shape == (2,) and N != 2:
            start, stop = int(w[0]), int(w[1])
            if not 0 <= start < stop <= N:
                raise ConfigurationError(f"window [{start}, {stop}) outside 0..{N}")
            out = np.zeros(N)
            out[start:stop] = 1.0
            return out
        if w.shape != (N,):
            raise ConfigurationError(f"window weights must have length {N}")
        return w


@dataclass(frozen=True)
class FreqMask:
    """``|G(e^{i w_k})| <= gamma_k`` on a grid in ``[0, pi]``."""

    omega: tuple
    gamma: tuple

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float))
        ga = np.broadcast_to(np.asarray(self.gamma, dtype=float), om.shape)
        if np.any(om < 0) or np.any(om > np.pi + 1e-12):
            raise ConfigurationError("frequency grid must lie in [0, pi]")
        _nonneg("freq_mask.gamma", ga)
        object.__setattr__(self, "omega", tuple(om.tolist()))
        object.__setattr__(self, "gamma", tuple(ga.tolist()))


@dataclass(frozen=True)
class Settling:
    """``sum_m |c_m| |p_m|^T_s <= eps_h``."""

    T_s: int
    eps_h: float

    def __post_init__(self):
        _nonneg("settling.eps_h", self.eps_h)
        if self.T_s < 0:
            raise ConfigurationError("settling.T_s must be >= 0")


@dataclass(frozen=True)
class L1Tail:
    """``sum_m |c_m| |p_m|^T_s / (1 - |p_m|) <= budget``."""

    T_s: int
    budget: float

    def __post_init__(self):
        _nonneg("l1_tail.budget", self.budget)
        if self.T_s < 0:
            raise ConfigurationError("l1_tail.T_s must be >= 0")


@dataclass(frozen=True)
class Bibo:
    """``sum_m |c_m| / (1 - |p_m|) <= h_max``."""

    h_max: float

    def __post_init__(self):
        _nonneg("bibo.h_max", self.h_max)


@dataclass(frozen=True)
class StepTail:
    """Diagnostic only: reported by :func:`budgets`, never compiled."""

    t: int
    budget: float

    def __post_init__(self):
        _nonneg("step_tail.budget", self.budget)


@dataclass(frozen=True)
class RelativeDegree:
    """First ``r_d`` impulse-response samples vanish."""

    r_d: int

    def __post_init__(self):
        if self.r_d < 0:
            raise ConfigurationError("relative_degree.r_d must be >= 0")


@dataclass(frozen=True)
class DcEqual:
    g0: float


@dataclass(frozen=True)
class DcBound:
    G_max: float

    def __post_init__(self):
        _nonneg("dc_bound.G_max", self.G_max)


@dataclass(frozen=True)
class Monotone:
    """Nonnegative residues on real poles in ``(0, 1)`` only."""


_TYPES = {
    "time_box": TimeBox,
    "window_rms": WindowRMS,
    "freq_mask": FreqMask,
    "settling": Settling,
    "l1_tail": L1Tail,
    "bibo": Bibo,
    "step_tail": StepTail,
    "relative_degree": RelativeDegree,
    "dc_equal": DcEqual,
    "dc_bound": DcBound,
    "monotone": Monotone,
}
_NAMES = {cls: name for name, cls in _TYPES.items()}


class ConstraintSet(tuple):
    """Immutable sequence of constraint records."""

    def __new__(cls, records=()):
        records = tuple(records)
        for r in records:
            if type(r) not in _NAMES:
                raise ConfigurationError(f"not a constraint record: {r!r}")
        return super().__new__(cls, records)

    def of_type(self, kind):
        return [r for r in self if isinstance(r, kind)]

    def scaled(self, alpha: float) -> "ConstraintSet":
        """Scale every output-level budget by ``alpha`` (for invariance checks)."""
        out = []
        for r in self:
            if isinstance(r, TimeBox):
                out.append(TimeBox(np.asarray(r.eps, dtype=float) * alpha))
            elif isinstance(r, WindowRMS):
                out.append(WindowRMS(r.window, r.eta * alpha))
            elif isinstance(r, FreqMask):
                out.append(FreqMask(r.omega, np.asarray(r.gamma) * alpha))
            elif isinstance(r, Settling):
                out.append(Settling(r.T_s, r.eps_h * alpha))
            elif isinstance(r, L1Tail):
                out.append(L1Tail(r.T_s, r.budget * alpha))
            elif isinstance(r, Bibo):
                out.append(Bibo(r.h_max * alpha))
            elif isinstance(r, StepTail):
                out.append(StepTail(r.t, r.budget * alpha))
            elif isinstance(r, DcEqual):
                out.append(DcEqual(r.g0 * alpha))
            elif isinstance(r, DcBound):
                out.append(DcBound(r.G_max * alpha))
            else:
                out.append(r)
        return ConstraintSet(out)

    def to_list(self) -> list:
        out = []
        for r in self:
            d = {"type": _NAMES[type(r)]}
            for k, v in asdict(r).items():
                d[k] = np.asarray(v).tolist() if isinstance(v, (np.ndarray, tuple, list)) else v
            out.append(d)
        return out

    @classmethod
    def from_list(cls, items) -> "ConstraintSet":
        records = []
        for item in items or ():
            item = dict(item)
            kind = item.pop("type", None)
            if kind not in _TYPES:
                raise ConfigurationError(f"unknown constraint type {kind!r}")
            rec_cls = _TYPES[kind]
            allowed = {f.name for f in fields(rec_cls)}
            extra = set(item) - allowed
            if extra:
                raise ConfigurationError(f"{kind}: unknown keys {sorted(extra)}")
            try:
                records.append(rec_cls(**item))
            except TypeError as exc:
                raise ConfigurationError(f"{kind}: {exc}") from exc
        return cls(records)
