"""Pole dictionaries drawn from admissible regions of the unit disk.

Complex poles are always emitted together with their conjugates so that
the resulting impulse responses are real.  Angle bands are given on
``[0, pi]``; the lower half plane is obtained by conjugation only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

RNG_ALGORITHM = "numpy.PCG64"
RADIAL_LAWS = ("uniform-in-radius", "uniform-in-area", "log-time-constant")

# |im| below this is snapped to the real axis
REAL_SNAP = 1e-12
# containment slack for floating point round-off in p = r*exp(i*theta)
_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _normalize_bands(bands) -> tuple:
    cleaned = []
    for band in bands:
        lo, hi = float(band[0]), float(band[1])
        if not (0.0 <= lo <= hi <= np.pi + _TOL):
            raise ConfigurationError(f"angle band {band!r} must satisfy 0 <= min <= max <= pi")
        cleaned.append((lo, min(hi, np.pi)))
    cleaned.sort()
    merged = []
    for lo, hi in cleaned:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


@dataclass(frozen=True)
class PoleRegion:
    """Admissible pole region: an annulus intersected with angular bands.

    Parameters
    ----------
    rho_min, rho_max : float
        Radial limits, ``0 <= rho_min <= rho_max < 1``.
    angle_bands : sequence of (theta_min, theta_max)
        Sectors in ``[0, pi]``; overlapping bands are merged.
    include_real_axis : bool
        Whether purely real poles may be drawn.
    radial_law : str
        One of ``RADIAL_LAWS``.
    real_fraction : float
        Probability that a group is a real pole when both bands and the
        real axis are enabled.
    real_sign : str
        ``"both"`` draws real poles of either sign, ``"positive"`` only
        from ``(0, 1)``.
    """

    rho_min: float = 0.0
    rho_max: float = 0.95
    angle_bands: tuple = ((0.0, np.pi),)
    include_real_axis: bool = False
    radial_law: str = "uniform-in-radius"
    real_fraction: float = 0.25
    real_sign: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "rho_min", float(self.rho_min))
        object.__setattr__(self, "rho_max", float(self.rho_max))
        object.__setattr__(self, "angle_bands", _normalize_bands(self.angle_bands))
        if not (0.0 <= self.rho_min <= self.rho_max < 1.0):
            raise ConfigurationError(
                f"need 0 <= rho_min <= rho_max < 1, got [{self.rho_min}, {self.rho_max}]"
            )
        if not self.angle_bands and not self.include_real_axis:
            raise ConfigurationError("region has no angle bands and excludes the real axis")
        if self.radial_law not in RADIAL_LAWS:
            raise ConfigurationError(f"unknown radial law {self.radial_law!r}")
        if self.radial_law == "log-time-constant" and self.rho_min <= 0.0:
            raise ConfigurationError("log-time-constant law needs rho_min > 0")
        if not 0.0 <= self.real_fraction <= 1.0:
            raise ConfigurationError("real_fraction must lie in [0, 1]")
        if self.real_sign not in ("both", "positive"):
            raise ConfigurationError(f"unknown real_sign {self.real_sign!r}")

    @classmethod
    def sector(cls, rho_min, rho_max, theta_min, theta_max, **kw) -> "PoleRegion":
        return cls(rho_min=rho_min, rho_max=rho_max, angle_bands=((theta_min, theta_max),), **kw)

    @classmethod
    def disk(cls, rho: float, **kw) -> "PoleRegion":
        """Full disk of radius ``rho`` including the real axis."""
        kw.setdefault("include_real_axis", True)
        return cls(rho_min=0.0, rho_max=rho, angle_bands=((0.0, np.pi),), **kw)

    # -- probabilities of the group kinds --------------------------------
    @property
    def p_real(self) -> float:
        if not self.angle_bands:
            return 1.0
        if not self.include_real_axis:
            return 0.0
        return self.real_fraction

    def contains(self, p, tol: float = 1e-9) -> np.ndarray:
        """Elementwise membership test (conjugates of band poles included)."""
        p = np.asarray(p, dtype=complex)
        r = np.abs(p)
        ok = (r >= self.rho_min - tol) & (r <= self.rho_max + tol)
        theta = np.abs(np.angle(p))
        in_band = np.zeros(p.shape, dtype=bool)
        for lo, hi in self.angle_bands:
            in_band |= (theta >= lo - tol) & (theta <= hi + tol)
        is_real = p.imag == 0.0
        real_ok = np.zeros(p.shape, dtype=bool)
        if self.include_real_axis:
            real_ok = is_real & ((p.real >= 0) | (self.real_sign == "both"))
        # a zero pole has angle 0 and counts as real
        return ok & (in_band | real_ok)

    def draw_radii(self, u: np.ndarray) -> np.ndarray:
        a, b = self.rho_min, self.rho_max
        if self.radial_law == "uniform-in-radius":
            return a + (b - a) * u
        if self.radial_law == "uniform-in-area":
            return np.sqrt(a * a + (b * b - a * a) * u)
        alpha_lo, alpha_hi = -np.log(b), -np.log(a)
        return np.exp(-(alpha_lo + (alpha_hi - alpha_lo) * u))

    def draw_angles(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms on [0, 1) to angles uniform over the union of bands."""
        bands = np.asarray(self.angle_bands, dtype=float)
        lengths = bands[:, 1] - bands[:, 0]
        total = lengths.sum()
        if total == 0.0:
            # point bands: choose a band uniformly
            idx = np.minimum((u * len(bands)).astype(int), len(bands) - 1)
            return bands[idx, 0]
        edges = np.concatenate([[0.0], np.cumsum(lengths)]) / total
        idx = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(bands) - 1)
        frac = (u - edges[idx]) * total
        return np.minimum(bands[idx, 0] + frac, bands[idx, 1])

    def to_dict(self) -> dict:
        return {
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
            "angle_bands": [list(b) for b in self.angle_bands],
            "include_real_axis": self.include_real_axis,
            "radial_law": self.radial_law,
            "real_fraction": self.real_fraction,
            "real_sign": self.real_sign,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoleRegion":
        known = {"rho_min", "rho_max", "angle_bands", "include_real_axis", "radial_law",
                 "real_fraction", "real_sign"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown region keys: {sorted(unknown)}")
        kw = dict(d)
        if "angle_bands" in kw:
            kw["angle_bands"] = tuple(tuple(b) for b in kw["angle_bands"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class PoleSet:
    """Ordered poles with conjugate bookkeeping.

    ``pair_index[i]`` is the index of the conjugate partner of pole ``i``;
    real poles point to themselves and unmatched complex poles hold -1.
    Within a pair the pole with positive imaginary part comes first.
    """

    poles: np.ndarray
    pair_index: np.ndarray
    seed: int | None = None
    region: PoleRegion | None = None
    rng_algorithm: str = RNG_ALGORITHM
    _groups: tuple = field(default=None, repr=False)

    def __post_init__(self):
        poles = np.array(self.poles, dtype=complex).reshape(-1)
        pair = np.array(self.pair_index, dtype=int).reshape(-1)
        if poles.shape != pair.shape:
            raise ConfigurationError("poles and pair_index must have equal length")
        poles.setflags(write=False)
        pair.setflags(write=False)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "pair_index", pair)
        groups = []
        for i, j in enumerate(pair):
            if j == i or j < 0:
                groups.append((i,))
            elif i < j:
                groups.append((i, j) if poles[i].imag > 0 else (j, i))
        object.__setattr__(self, "_groups", tuple(groups))

    @classmethod
    def from_poles(cls, poles: Sequence[complex], seed=None, region=None) -> "PoleSet":
        """Build a pole set, matching exact conjugates among the given poles."""
        poles = np.asarray(poles, dtype=complex).reshape(-1)
        pair = np.full(len(poles), -1, dtype=int)
        taken = np.zeros(len(poles), dtype=bool)
        for i, p in enumerate(poles):
            if p.imag == 0.0:
                pair[i] = i
                taken[i] = True
                continue
            if taken[i]:
                continue
            for j in range(i + 1, len(poles)):
                if not taken[j] and poles[j] == np.conj(p):
                    pair[i], pair[j] = j, i
                    taken[i] = taken[j] = True
                    break
        return cls(poles, pair, seed=seed, region=region)

    def __len__(self):
        return len(self.poles)

    def __eq__(self, other):
        if not isinstance(other, PoleSet):
            return NotImplemented
        return (
            np.array_equal(self.poles, other.poles)
            and np.array_equal(self.pair_index, other.pair_index)
            and self.seed == other.seed
            and self.region == other.region
        )

    __hash__ = None

    @property
    def groups(self) -> tuple:
        """Pole-index groups: ``(i,)`` for real poles, ``(i, j)`` for pairs."""
        return self._groups

    @property
    def n_groups(self) -> int:
        return len(self._groups)

    @property
    def representatives(self) -> np.ndarray:
        """One pole per group (upper-half-plane member for pairs)."""
        return np.array([self.poles[g[0]] for g in self._groups], dtype=complex)

    @property
    def group_is_pair(self) -> np.ndarray:
        return np.array([len(g) == 2 for g in self._groups], dtype=bool)

    @property
    def n_real_columns(self) -> int:
        return sum(len(g) for g in self._groups)

    @classmethod
    def from_representatives(cls, reps, seed=None, region=None) -> "PoleSet":
        """Expand group representatives into a paired pole list."""
        poles, pair = [], []
        for p in np.asarray(reps, dtype=complex).reshape(-1):
            if abs(p.imag) < REAL_SNAP:
                pair.append(len(poles))
                poles.append(complex(p.real, 0.0))
            else:
                q = complex(p.real, abs(p.imag))
                k = len(poles)
                poles.extend([q, q.conjugate()])
                pair.extend([k + 1, k])
        return cls(np.array(poles, dtype=complex), np.array(pair, dtype=int),
                   seed=seed, region=region)

    def subset(self, group_ids) -> "PoleSet":
        reps = self.representatives[np.asarray(group_ids, dtype=int)]
        return PoleSet.from_representatives(reps, seed=self.seed, region=self.region)


def _draw_groups(region: PoleRegion, M: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``M`` group representatives (upper half plane or real)."""
    u_kind = rng.random(M)
    u_rad = rng.random(M)
    u_ang = rng.random(M)
    u_sign = rng.random(M)
    r = region.draw_radii(u_rad)
    is_real = u_kind < region.p_real
    reps = np.empty(M, dtype=complex)
    sign = np.where((region.real_sign == "both") & (u_sign < 0.5), -1.0, 1.0)
    reps[is_real] = sign[is_real] * r[is_real]
    if region.angle_bands:
        theta = region.draw_angles(u_ang[~is_real])
        reps[~is_real] = r[~is_real] * np.exp(1j * theta)
    snap = np.abs(reps.imag) < REAL_SNAP
    reps[snap] = reps[snap].real
    return reps


def sample_poles(region: PoleRegion, M: int, seed: int) -> PoleSet:
    """Sample ``M`` pole groups from ``region``.

    A conjugate pair counts as one group.  The result is bit-identical for
    a fixed ``(region, M, seed)``.
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    rng = make_rng(seed)
    reps = _draw_groups(region, int(M), rng)
    return PoleSet.from_representatives(reps, seed=seed, region=region)


def draw_iid(region: PoleRegion, n: int, rng: np.random.Generator) -> np.ndarray:
    """Independent draws from the conjugation-symmetric law of ``region``.

    Unlike :func:`sample_poles` the poles are not paired: each complex
    draw lands in the upper or lower half plane with equal probability.
    Used for Monte Carlo kernel experiments where independence matters.
    """
    reps = _draw_groups(region, n, rng)
    flip = rng.random(n) < 0.5
    return np.where(flip, np.conj(reps), reps)


@dataclass
class PairingReport:
    valid: bool
    orphans: list

    def __bool__(self):
        return self.valid


def validate_pairing(ps: PoleSet) -> PairingReport:
    """List complex poles lacking an exact (bit-level) conjugate partner."""
    orphans = []
    for i, p in enumerate(ps.poles):
        if p.imag == 0.0:
            continue
        j = ps.pair_index[i]
        if (
            j < 0
            or j >= len(ps)
            or j == i
            or ps.pair_index[j] != i
            or ps.poles[j].real != p.real
            or ps.poles[j].imag != -p.imag
        ):
            orphans.append(i)
    return PairingReport(valid=not orphans, orphans=orphans)
