"""Fixed-step integration and sampled checks of contraction properties.

Everything in here is a grid- or sample-based surrogate of a statement
that holds for every time or every point; results that are not exact carry
that in their names (``empirical_*``, ``estimate_*``) or in a
``certified=False`` field.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .norms import NormSpec, log_norm, vector_norm

__all__ = [
    "VectorField",
    "Trajectory",
    "IntegrationError",
    "integrate",
    "integrate_ensemble",
    "jacobian_fd",
    "estimate_dini",
    "sample_ball",
    "ContractionEstimate",
    "empirical_contraction_rate",
    "RadiusEstimate",
    "estimate_radius",
    "EnvelopeReport",
    "verify_envelope",
    "EQUILIBRIUM_TOL",
]

log = logging.getLogger(__name__)

EQUILIBRIUM_TOL = 1e-9
KINK_TOL = 1e-3

SCHEMES = ("euler", "rk4")


class IntegrationError(FloatingPointError):
    """Raised when a state becomes non-finite during integration."""

    def __init__(self, step: int, last_state: np.ndarray):
        self.step = step
        self.last_state = np.array(last_state)
        super().__init__(
            f"non-finite state at step {step}; last finite state {self.last_state.tolist()}"
        )


@dataclass(frozen=True)
class VectorField:
    """Right-hand side ``f(t, x)`` of an ODE on R^dim.

    ``jacobian(t, x)`` is optional and used when present.  ``input_eval``
    takes ``(t, x, u)`` for systems driven by an input.  With
    ``vectorized=True`` the callables accept a stack of states of shape
    ``(batch, dim)`` and return the same shape, which lets ensembles be
    integrated in one pass.
    """

    dim: int
    eval: Callable
    jacobian: Callable | None = None
    input_eval: Callable | None = None
    vectorized: bool = False
    name: str = ""

    def __call__(self, t, x):
        return self.eval(t, x)

    def with_input(self, u: Callable) -> VectorField:
        """Autonomous-in-input view ``x' = f(t, x, u(t))``."""
        if self.input_eval is None:
            raise ValueError("vector field has no input channel")
        g = self.input_eval
        return VectorField(self.dim, lambda t, x: g(t, x, u(t)), None, None,
                           self.vectorized, self.name)

    @classmethod
    def linear(cls, A, x_star=None) -> VectorField:
        """``x' = A (x - x_star)``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        xs = np.zeros(A.shape[0]) if x_star is None else np.asarray(x_star, dtype=float)
        return cls(A.shape[0], lambda t, x: (x - xs) @ A.T, lambda t, x: A.copy(),
                   vectorized=True, name="linear")


@dataclass
class Trajectory:
    """States sampled every ``dt * stride`` time units of a fixed-step integration."""

    times: np.ndarray
    states: np.ndarray
    scheme: str
    dt: float
    stride: int = 1

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def distances(self, x_star, norm: NormSpec) -> np.ndarray:
        return np.asarray(vector_norm(self.states - np.asarray(x_star, dtype=float), norm))

    def to_csv(self, fh=None) -> str | None:
        """Write ``t,x1,...,xn`` with 17 significant digits.

        Returns the text when ``fh`` is None.
        """
        sink = io.StringIO() if fh is None else fh
        n = self.states.shape[1]
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
        for t, x in zip(self.times, self.states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x])
        return sink.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, fh, scheme: str = "unknown", stride: int = 1) -> Trajectory:
        rows = list(csv.reader(fh))
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        times, states = data[:, 0], data[:, 1:]
        dt = (times[1] - times[0]) / stride if len(times) > 1 else 0.0
        return cls(times, states, scheme, dt, stride)


def _step_count(t_end: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < dt:
        raise ValueError("t_end must be at least one step")
    n = round(t_end / dt)
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    return n


def _stepper(f: Callable, scheme: str):
    if scheme == "euler":
        def step(t, x, h):
            return x + h * f(t, x)
    elif scheme == "rk4":
        def step(t, x, h):
            k1 = f(t, x)
            k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = f(t + h, x + h * k3)
            return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return step


def _run(f, x0: np.ndarray, n_steps: int, dt: float, scheme: str, stride: int):
    step = _stepper(f, scheme)
    n_rec = n_steps // stride + 1
    out = np.empty((n_rec,) + x0.shape)
    out[0] = x0
    x = x0
    for k in range(n_steps):
        x_new = step(k * dt, x, dt)
        if not np.all(np.isfinite(x_new)):
            raise IntegrationError(k + 1, x)
        x = x_new
        if (k + 1) % stride == 0:
            out[(k + 1) // stride] = x
    times = np.arange(n_rec) * (dt * stride)
    return times, out


def integrate(vf: VectorField, x0, t_end: float, dt: float = 1e-3, scheme: str = "euler",
              stride: int = 1) -> Trajectory:
    """Fixed-step integration of ``x' = f(t, x)`` from ``x(0) = x0``.

    ``t_end`` must be a whole number of steps.  Every ``stride``-th state is
    kept (``stride`` divides the step count for the final state to be kept).
    """
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.shape[0] != vf.dim:
        raise ValueError(f"x0 has dimension {x0.shape[0]}, field has {vf.dim}")
    n_steps = _step_count(t_end, dt)
    _check_stride(n_steps, stride)
    if vf.vectorized:
        f = lambda t, x: vf.eval(t, x[None, :])[0]  # noqa: E731
    else:
        f = lambda t, x: np.asarray(vf.eval(t, x), dtype=float).reshape(-1)  # noqa: E731
    times, states = _run(f, x0, n_steps, dt, scheme, stride)
    return Trajectory(times, states, scheme, dt, stride)


def _check_stride(n_steps: int, stride: int) -> None:
    if stride < 1 or n_steps % stride:
        raise ValueError(f"stride {stride} must divide the step count {n_steps}")


def integrate_ensemble(vf: VectorField, X0, t_end: float, dt: float = 1e-3,
                       scheme: str = "euler", stride: int = 1) -> list[Trajectory]:
    """Integrate one trajectory per row of ``X0``; order follows the rows.

    A vectorized field advances all rows together, which gives the same
    numbers as integrating each row on its own.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != vf.dim:
        raise ValueError(f"initial states have dimension {X0.shape[1]}, field has {vf.dim}")
    if not vf.vectorized:
        return [integrate(vf, x0, t_end, dt, scheme, stride) for x0 in X0]
    n_steps = _step_count(t_end, dt)
    _check_stride(n_steps, stride)
    times, states = _run(vf.eval, X0, n_steps, dt, scheme, stride)
    return [Trajectory(times, states[:, j, :].copy(), scheme, dt, stride) for j in range(X0.shape[0])]


def _fd_step(x: np.ndarray, h: float | None) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(x)))) if h is None else h


def _eval_point(vf: VectorField, t, x):
    if vf.vectorized:
        return np.asarray(vf.eval(t, x[None, :])[0], dtype=float)
    return np.asarray(vf.eval(t, x), dtype=float).reshape(-1)


def _difference_jacobians(vf: VectorField, t, x, h):
    n = x.shape[0]
    E = h * np.eye(n)
    if vf.vectorized:
        f0 = vf.eval(t, x[None, :])[0]
        fp = vf.eval(t, x[None, :] + E)
        fm = vf.eval(t, x[None, :] - E)
    else:
        f0 = _eval_point(vf, t, x)
        fp = np.array([_eval_point(vf, t, x + e) for e in E])
        fm = np.array([_eval_point(vf, t, x - e) for e in E])
    # rows of fp/fm are perturbation directions -> transpose to columns
    central = (fp - fm).T / (2 * h)
    forward = (fp - f0).T / h
    backward = (f0 - fm).T / h
    return central, forward, backward


def jacobian_fd(vf: VectorField, t, x, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian, column by column.

    Near a switching surface of a piecewise-smooth field this averages the
    one-sided slopes (a ReLU at 0 gives 0.5).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    h = _fd_step(x, h)
    if h <= 0:
        raise ValueError("h must be positive")
    J, _, _ = _difference_jacobians(vf, t, x, h)
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entries")
    return J


def estimate_dini(distances, dt: float) -> np.ndarray:
    """Forward-difference slopes of a sampled distance curve."""
    d = np.asarray(distances, dtype=float)
    if d.shape[0] < 2:
        raise ValueError("need at least two samples")
    return np.diff(d) / dt


def _unit_ball_sample(rng, n: int, p: float, size: int, boundary: bool) -> np.ndarray:
    if p == 2.0:
        g = rng.standard_normal((size, n))
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
    elif p == 1.0:
        e = rng.exponential(size=(size, n))
        u = e / e.sum(axis=1, keepdims=True) * rng.choice((-1.0, 1.0), size=(size, n))
    else:
        u = rng.uniform(-1.0, 1.0, size=(size, n))
        face = rng.integers(0, n, size=size)
        u[np.arange(size), face] = rng.choice((-1.0, 1.0), size=size)
    if boundary:
        return u
    # radial CDF r^n makes the volume uniform
    return u * rng.uniform(size=(size, 1)) ** (1.0 / n)


def sample_ball(center, radius: float, norm: NormSpec, size: int, rng,
                boundary: bool = False) -> np.ndarray:
    """Points uniform in (or, with ``boundary``, on the surface of) a norm ball.

    For weighted norms the unit ball is the image of the unweighted one
    under ``Q^{-1}``.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    n = center.shape[0]
    norm.check_dim(n)
    if boundary:
        u = _unit_ball_sample(rng, n, norm.p, size, True)
    elif norm.p == 2.0:
        u = _unit_ball_sample(rng, n, 2.0, size, False)
    elif norm.p == 1.0:
        e = rng.exponential(size=(size, n + 1))
        u = e[:, :n] / e.sum(axis=1, keepdims=True) * rng.choice((-1.0, 1.0), size=(size, n))
    else:
        u = rng.uniform(-1.0, 1.0, size=(size, n))
    if norm.Q is not None:
        u = np.linalg.solve(norm.Q, u.T).T
    return center + radius * u


@dataclass(frozen=True)
class ContractionEstimate:
    """Largest sampled log-norm of the Jacobian over a region."""

    sup_mu: float
    argmax: np.ndarray | None
    n_samples: int
    n_excluded: int

    @property
    def rate(self) -> float:
        """Empirical contraction rate ``-sup_mu``."""
        return -self.sup_mu


def empirical_contraction_rate(vf: VectorField, center, radius: float, norm: NormSpec,
                               samples: int = 1000, seed: int = 0, t: float = 0.0,
                               boundary_fraction: float = 0.5,
                               kink_tol: float = KINK_TOL) -> ContractionEstimate:
    """Sup of ``mu(Df(t, x))`` over seeded samples from a ball.

    Half of the points (by default) are drawn on the boundary sphere, where
    the sup is typically reached for nested regions; the rest uniformly in
    the ball.  Points whose forward and backward difference Jacobians (or
    analytic and central ones, when an analytic Jacobian is supplied)
    differ by more than ``kink_tol`` are treated as lying on a switching
    surface and excluded.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n_bnd = int(round(boundary_fraction * samples))
    pts = np.vstack([
        sample_ball(center, radius, norm, n_bnd, rng, boundary=True),
        sample_ball(center, radius, norm, samples - n_bnd, rng),
    ])
    sup_mu, arg, excluded = -math.inf, None, 0
    for x in pts:
        h = _fd_step(x, None)
        central, fwd, bwd = _difference_jacobians(vf, t, x, h)
        if vf.jacobian is not None:
            J = np.atleast_2d(np.asarray(vf.jacobian(t, x), dtype=float))
            gap = np.max(np.abs(J - central))
        else:
            J = central
            gap = np.max(np.abs(fwd - bwd))
        if gap > kink_tol:
            excluded += 1
            continue
        mu = log_norm(J, norm)
        if mu > sup_mu:
            sup_mu, arg = mu, x
    if arg is None:
        log.warning("all %d samples were excluded as kink-adjacent", samples)
    return ContractionEstimate(sup_mu, arg, samples, excluded)


@dataclass(frozen=True)
class RadiusEstimate:
    """Sampled stand-in for the radius of the strongly contracting ball. Never certified."""

    radius: float
    c_target: float
    certified: bool = False
    diagnostic: str = ""


def estimate_radius(vf: VectorField, x_star, norm: NormSpec, c_target: float,
                    search: tuple[float, float, int] = (1e-3, 10.0, 30),
                    samples: int = 400, seed: int = 0) -> RadiusEstimate:
    """Largest radius in ``[r_min, r_max]`` whose ball shows ``sup mu <= -c_target``.

    Bisection on the sampled sup; ``steps`` halvings.  Returns radius 0 with
    a diagnostic when even ``r_min`` fails.
    """
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    residual = float(np.max(np.abs(_eval_point(vf, 0.0, x_star))))
    if residual > EQUILIBRIUM_TOL:
        raise ValueError(f"x_star is not an equilibrium: |f(x_star)|_inf = {residual:.3e}")
    r_min, r_max, steps = search
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")

    def ok(r):
        est = empirical_contraction_rate(vf, x_star, r, norm, samples, seed)
        return est.sup_mu <= -c_target

    if ok(r_max):
        return RadiusEstimate(r_max, c_target, diagnostic="search ceiling reached")
    if not ok(r_min):
        return RadiusEstimate(0.0, c_target, diagnostic=(
            f"no sampled ball with radius >= {r_min} contracts at rate {c_target}"))
    lo, hi = r_min, r_max
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return RadiusEstimate(lo, c_target, diagnostic=f"bisection bracket [{lo:.6g}, {hi:.6g}]")


@dataclass(frozen=True)
class EnvelopeReport:
    max_violation: float
    t_at_max: float
    passed: bool
    tol: float


def verify_envelope(traj: Trajectory, x_star, norm: NormSpec, envelope: Callable,
                    tol: float | None = None) -> EnvelopeReport:
    """Largest excess of ``||x_k - x*||`` over ``envelope(t_k)`` on the grid.

    The default tolerance is ``1e-6 + 10 dt v`` with ``v`` the largest
    sampled speed along the trajectory.
    """
    dist = traj.distances(x_star, norm)
    bound = np.asarray(envelope(traj.times), dtype=float)
    excess = dist - bound
    k = int(np.argmax(excess))
    if tol is None:
        if len(traj) > 1:
            speed = np.max(np.abs(np.diff(traj.states, axis=0))) / (traj.dt * traj.stride)
        else:
            speed = 0.0
        tol = 1e-6 + 10.0 * traj.dt * speed
    return EnvelopeReport(float(excess[k]), float(traj.times[k]), bool(excess[k] <= tol), tol)
