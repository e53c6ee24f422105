"""The linear-exponential envelope and the saturated scalar ODEs it solves.

``linexp(t) = q - c_lin t`` up to the crossing time ``t_c`` and decays
exponentially at rate ``c_exp`` afterwards, starting from the value the
linear piece reached at ``t_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LinExpParams",
    "SaturatedOdeParams",
    "sat",
    "linexp_eval",
    "saturated_ode_solution",
    "saturated_ode_input_bound",
]


def sat(x, d):
    """Saturation: identity on [-d, d], clamped to +-d outside."""
    return np.clip(x, -d, d)


def _scalar_out(t, out):
    return float(out) if np.ndim(t) == 0 else out


@dataclass(frozen=True)
class LinExpParams:
    """Intercept, linear rate, exponential rate and crossing time.

    Validated on construction: all rates positive, ``t_c >= 0`` and
    ``t_c < q / c_lin`` so the envelope is still positive when it switches
    to the exponential branch.
    """

    q: float
    c_lin: float
    c_exp: float
    t_c: float

    def __post_init__(self):
        for name in ("q", "c_lin", "c_exp", "t_c"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.q <= 0:
            raise ValueError(f"intercept q must be positive, got {self.q}")
        if self.c_lin <= 0 or self.c_exp <= 0:
            raise ValueError("decay rates must be positive")
        if self.t_c < 0:
            raise ValueError(f"crossing time must be nonnegative, got {self.t_c}")
        if self.t_c >= self.q / self.c_lin:
            raise ValueError(
                f"crossing time t_c={self.t_c} must be below q/c_lin={self.q / self.c_lin}"
            )

    @property
    def crossing_value(self) -> float:
        """Envelope value at ``t_c``, where the exponential branch starts."""
        return self.q - self.c_lin * self.t_c

    def __call__(self, t):
        return linexp_eval(t, self)


def linexp_eval(t, p: LinExpParams):
    """Evaluate the linear-exponential function; ``t`` may be an array.

    ``t == t_c`` takes the linear branch (both branches agree there).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("linexp is defined for t >= 0")
    lin = p.q - p.c_lin * t
    expo = p.crossing_value * np.exp(-p.c_exp * np.maximum(t - p.t_c, 0.0))
    return _scalar_out(t, np.where(t <= p.t_c, lin, expo))


@dataclass(frozen=True)
class SaturatedOdeParams:
    """Data of ``x' = -c_exp sat_d(x) + u(t)`` with ``x(0) = q > d``.

    ``u_max`` bounds ``|u(t)|``; it is 0 for the input-free equation and
    must stay below ``d * c_exp`` so the state still reaches the saturation
    level.
    """

    c_exp: float
    d: float
    q: float
    u_max: float = 0.0

    def __post_init__(self):
        if self.c_exp <= 0 or self.d <= 0:
            raise ValueError("c_exp and d must be positive")
        if self.q <= self.d:
            raise ValueError(f"initial condition q={self.q} must exceed d={self.d}")
        if self.u_max < 0:
            raise ValueError("u_max must be nonnegative")
        if self.u_max >= self.d * self.c_exp:
            raise ValueError(
                f"u_max={self.u_max} must be below d*c_exp={self.d * self.c_exp}"
            )

    def linexp_params(self) -> LinExpParams:
        c_lin = self.d * self.c_exp - self.u_max
        return LinExpParams(self.q, c_lin, self.c_exp, (self.q - self.d) / c_lin)


def saturated_ode_solution(t, p: SaturatedOdeParams):
    """Exact solution of ``x' = -c_exp sat_d(x)``, ``x(0) = q > d``.

    The state decreases linearly at rate ``d c_exp`` until it hits ``d`` at
    ``t_c = q / (d c_exp) - 1 / c_exp`` and decays exponentially from there.
    """
    if p.u_max != 0:
        raise ValueError("exact solution only exists without input; use saturated_ode_input_bound")
    return linexp_eval(t, p.linexp_params())


def saturated_ode_input_bound(t, p: SaturatedOdeParams):
    """Upper bound on every solution of ``x' = -c_exp sat_d(x) + u(t)``, ``|u| <= u_max``.

    The linear rate drops to ``d c_exp - u_max``; after the crossing time
    the input can push the state up by at most
    ``(1 - exp(-c_exp (t - t_c))) u_max / c_exp``.
    """
    lp = p.linexp_params()
    t_arr = np.asarray(t, dtype=float)
    base = np.asarray(linexp_eval(t_arr, lp))
    after = np.maximum(t_arr - lp.t_c, 0.0)
    bump = np.where(t_arr >= lp.t_c, -np.expm1(-p.c_exp * after) * p.u_max / p.c_exp, 0.0)
    return _scalar_out(t, base + bump)
