"""Convergence envelopes for globally weakly, locally strongly contracting systems.

A :class:`ContractionProfile` records what is known about a system: a norm
in which it is nonexpansive everywhere (global), a norm in which it
contracts at rate ``c_exp`` near the equilibrium (local), and the radius
``r`` of a global-norm ball around the equilibrium inside the strongly
contracting region.  The constructors here turn a profile and an initial
distance into an envelope for ``||x(t) - x*||_G``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linexp import LinExpParams, linexp_eval
from .norms import EquivalencePair, NormSpec, equivalence_coefficients

__all__ = [
    "ContractionProfile",
    "IssProfile",
    "ExponentialDecay",
    "IssEnvelope",
    "same_norm_bound",
    "diff_norm_bound",
    "piecewise_bound_gB",
    "best_rho",
    "iss_envelope",
    "iss_bound",
    "rho_contraction_time",
    "rho_contraction_time_cross_norm",
    "ball_inclusion_radii",
    "contraction_steps",
]


@dataclass(frozen=True, eq=False)
class ContractionProfile:
    """Certificate data for a globally weakly / locally strongly contracting system."""

    global_norm: NormSpec
    local_norm: NormSpec
    c_exp: float
    r: float
    equiv: EquivalencePair = field(default_factory=EquivalencePair.identity)
    x_star: np.ndarray | None = None

    def __post_init__(self):
        if not (self.c_exp > 0 and math.isfinite(self.c_exp)):
            raise ValueError(f"c_exp must be positive, got {self.c_exp}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"r must be positive, got {self.r}")
        if self.equiv.ratio < 1 - 1e-12:
            raise ValueError(f"equivalence ratio must be >= 1, got {self.equiv.ratio}")
        if self.same_norm and self.equiv.ratio != 1.0:
            raise ValueError("equal global and local norms need unit equivalence coefficients")
        if self.x_star is not None:
            x = np.array(self.x_star, dtype=float).reshape(-1)
            x.setflags(write=False)
            object.__setattr__(self, "x_star", x)

    @classmethod
    def single_norm(cls, norm: NormSpec, c_exp: float, r: float, x_star=None) -> ContractionProfile:
        return cls(norm, norm, c_exp, r, EquivalencePair.identity(), x_star)

    @classmethod
    def from_norms(cls, global_norm: NormSpec, local_norm: NormSpec, c_exp: float, r: float,
                   n: int, x_star=None) -> ContractionProfile:
        """Build a profile, computing the local/global equivalence pair on R^n."""
        equiv = equivalence_coefficients(local_norm, global_norm, n)
        return cls(global_norm, local_norm, c_exp, r, equiv, x_star)

    @property
    def same_norm(self) -> bool:
        return self.global_norm == self.local_norm

    @property
    def k(self) -> float:
        """Equivalence ratio between the local and global norms."""
        return self.equiv.ratio

    @property
    def certified(self) -> bool:
        return self.equiv.certified

    def to_json(self) -> dict:
        out = {
            "global_norm": self.global_norm.to_json(),
            "local_norm": self.local_norm.to_json(),
            "c_exp": self.c_exp,
            "r": self.r,
            "equiv": {"k_ab": self.equiv.k_ab, "k_ba": self.equiv.k_ba,
                      "certified": self.equiv.certified},
        }
        if self.x_star is not None:
            out["x_star"] = self.x_star.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict, n: int | None = None) -> ContractionProfile:
        """Read a profile; ``equiv`` is recomputed from the norms when absent."""
        g = NormSpec.from_json(data["global_norm"])
        loc = NormSpec.from_json(data.get("local_norm", data["global_norm"]))
        x_star = data.get("x_star")
        if "equiv" in data:
            e = data["equiv"]
            equiv = EquivalencePair(float(e["k_ab"]), float(e["k_ba"]), bool(e.get("certified", True)))
        elif g == loc:
            equiv = EquivalencePair.identity()
        else:
            dim = n or (len(x_star) if x_star is not None else None) or g.dim or loc.dim
            if dim is None:
                raise ValueError("cannot infer state dimension for equivalence coefficients")
            equiv = equivalence_coefficients(loc, g, dim)
        return cls(g, loc, float(data["c_exp"]), float(data["r"]), equiv, x_star)


@dataclass(frozen=True)
class ExponentialDecay:
    """Envelope ``scale * exp(-c_exp t)``."""

    scale: float
    c_exp: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.scale * np.exp(-self.c_exp * t)
        return float(out) if out.ndim == 0 else out


def same_norm_bound(profile: ContractionProfile, dist0: float) -> ExponentialDecay | LinExpParams:
    """Envelope for a system contracting in a single norm.

    Inside the ball (``dist0 <= r``) the distance decays exponentially.
    Outside it decreases at least linearly with rate ``c_exp r`` until it
    reaches ``r`` and exponentially afterwards.
    """
    if not profile.same_norm:
        raise ValueError("profile uses two norms; use diff_norm_bound")
    if dist0 < 0:
        raise ValueError("dist0 must be nonnegative")
    if dist0 <= profile.r:
        return ExponentialDecay(float(dist0), profile.c_exp)
    c_lin = profile.c_exp * profile.r
    return LinExpParams(float(dist0), c_lin, profile.c_exp, (dist0 - profile.r) / c_lin)


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ValueError(f"contraction factor rho must lie in (0, 1), got {rho}")


def contraction_steps(dist0: float, r: float, rho: float) -> int:
    """Number of rho-contraction rounds needed to bring ``dist0`` into the ball of radius ``r``."""
    _check_rho(rho)
    x = (dist0 - r) / ((1.0 - rho) * r)
    T = math.ceil(x)
    # a quotient that is an integer up to rounding needs no extra round
    if T - x > 1.0 - 1e-12 * max(1.0, abs(x)) and T - 1 >= 1:
        T -= 1
    return max(T, 1)


def diff_norm_bound(profile: ContractionProfile, dist0_G: float,
                    rho: float) -> ExponentialDecay | LinExpParams:
    """Envelope for ``||x(t) - x*||_G`` when local and global norms differ.

    Inside the ball the equivalence ratio ``k`` inflates the exponential
    bound.  Outside, each rho-contraction time ``ln(k / rho) / c_exp``
    shrinks the distance by ``r (1 - rho)``; the returned linear-exponential
    function upper-bounds that staircase (see :func:`piecewise_bound_gB`).
    """
    _check_rho(rho)
    if dist0_G < 0:
        raise ValueError("dist0_G must be nonnegative")
    k, r, c = profile.k, profile.r, profile.c_exp
    if dist0_G <= r:
        return ExponentialDecay(k * float(dist0_G), c)
    log_k = math.log(k)
    log_kr = math.log(k / rho)
    T = contraction_steps(dist0_G, r, rho)
    c_lin = c * r * (1.0 - rho) / log_kr
    q = dist0_G + r * (1.0 - rho) * log_k / log_kr
    t_c = T * log_kr / c + log_k / c
    return LinExpParams(q, c_lin, c, t_c)


def piecewise_bound_gB(t, profile: ContractionProfile, dist0_G: float, rho: float):
    """The staircase bound underlying :func:`diff_norm_bound`.

    On ``[i t_rho, (i+1) t_rho)`` with ``i < T`` it is
    ``min(D_i, D_i - r (1 - k exp(-c (t - i t_rho))))`` where
    ``D_i = dist0 - i r (1 - rho)``; from ``T t_rho`` on it is
    ``min(D_T, k D_T exp(-c (t - T t_rho)))``.
    """
    _check_rho(rho)
    k, r, c = profile.k, profile.r, profile.c_exp
    if dist0_G <= r:
        raise ValueError("the staircase bound applies to dist0_G > r")
    t_arr = np.asarray(t, dtype=float)
    t_rho = math.log(k / rho) / c
    T = contraction_steps(dist0_G, r, rho)
    step = r * (1.0 - rho)

    i = np.floor(t_arr / t_rho)
    # half-open intervals [i t_rho, (i+1) t_rho), robust to rounding of t / t_rho
    i = np.where(t_arr >= (i + 1) * t_rho, i + 1, i)
    i = np.where(t_arr < i * t_rho, i - 1, i)
    i = np.clip(i, 0, T)

    D_i = dist0_G - i * step
    tau = t_arr - i * t_rho
    staircase = np.minimum(D_i, D_i - r * (1.0 - k * np.exp(-c * tau)))
    tail = np.minimum(D_i, k * D_i * np.exp(-c * tau))
    out = np.where(i < T, staircase, tail)
    return float(out) if out.ndim == 0 else out


def best_rho(profile: ContractionProfile, dist0_G: float, grid=None) -> tuple[float, LinExpParams]:
    """Contraction factor on a grid giving the earliest crossing time.

    Any rho in (0, 1) yields a valid bound; this only picks a convenient
    one.  The default grid is 0.01, 0.02, ..., 0.99.
    """
    if dist0_G <= profile.r:
        raise ValueError("rho only matters for dist0_G > r")
    grid = np.linspace(0.01, 0.99, 99) if grid is None else np.asarray(grid, dtype=float)
    best = None
    for rho in grid:
        params = diff_norm_bound(profile, dist0_G, float(rho))
        if best is None or params.t_c < best[1].t_c:
            best = (float(rho), params)
    return best


@dataclass(frozen=True, eq=False)
class IssProfile:
    """Single-norm profile plus input Lipschitz constant and input bound."""

    base: ContractionProfile
    L_u: float
    u_max: float

    def __post_init__(self):
        if not self.base.same_norm:
            raise ValueError("the input-to-state bound needs a single-norm profile")
        if self.L_u < 0 or self.u_max < 0:
            raise ValueError("L_u and u_max must be nonnegative")
        if self.u_max >= self.base.r * self.base.c_exp:
            raise ValueError(
                f"u_max={self.u_max} must be below r*c_exp={self.base.r * self.base.c_exp}"
            )


@dataclass(frozen=True)
class IssEnvelope:
    """``linexp(t) + [t >= t_c] (L_u / c_exp) (1 - exp(-c_exp t)) u_max``.

    Note the offset switches on at ``t_c`` with its full accumulated value,
    so the envelope jumps there.
    """

    linexp: LinExpParams
    L_u: float
    u_max: float

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        c = self.linexp.c_exp
        base = np.asarray(linexp_eval(t_arr, self.linexp))
        gain = np.where(t_arr >= self.linexp.t_c, -np.expm1(-c * t_arr) * self.L_u * self.u_max / c, 0.0)
        out = base + gain
        return float(out) if out.ndim == 0 else out


def iss_envelope(profile: IssProfile, dist0: float) -> IssEnvelope:
    """Envelope for a trajectory started outside the ball under bounded input.

    The linear rate ``r c_exp - u_max`` does not involve ``L_u``, so the
    envelope is only a valid bound when ``L_u <= 1`` (inputs enter with
    unit gain or less).
    """
    base = profile.base
    if dist0 <= base.r:
        raise ValueError("the input-to-state bound covers dist0 > r")
    c_lin = base.r * base.c_exp - profile.u_max
    params = LinExpParams(float(dist0), c_lin, base.c_exp, (dist0 - base.r) / c_lin)
    return IssEnvelope(params, profile.L_u, profile.u_max)


def iss_bound(t, profile: IssProfile, dist0: float):
    return iss_envelope(profile, dist0)(t)


def rho_contraction_time(c: float, rho: float) -> float:
    """Time for a rate-``c`` contraction to shrink every ball by the factor ``rho``."""
    if c <= 0:
        raise ValueError("contraction rate must be positive")
    _check_rho(rho)
    return math.log(1.0 / rho) / c


def rho_contraction_time_cross_norm(c: float, rho: float, k_ratio: float) -> float:
    """Contraction time measured in a second norm with equivalence ratio ``k_ratio``."""
    if c <= 0:
        raise ValueError("contraction rate must be positive")
    _check_rho(rho)
    if k_ratio < 1:
        raise ValueError(f"equivalence ratio must be >= 1, got {k_ratio}")
    return math.log(k_ratio / rho) / c


def ball_inclusion_radii(alpha: NormSpec, beta: NormSpec, r: float, n: int) -> tuple[float, float]:
    """Radii with ``B_beta(inner) <= B_alpha(r) <= B_beta(outer)``, same center."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    pair = equivalence_coefficients(alpha, beta, n)
    return r / pair.k_ab, r * pair.k_ba
