"""Seeded ensemble runs of the primal-dual flow and bound overlays for plotting."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bounds import best_rho, diff_norm_bound, piecewise_bound_gB
from .dynamics import integrate_ensemble
from .lp import (BOX_LP_Z_STAR, LpProblem, box_lp, check_hurwitz, f_lp, jacobian_f_lp,
                 local_profile, lp_vector_field)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "initial_conditions",
    "emit_bound_overlay",
    "worker_count",
]

log = logging.getLogger(__name__)

THREADS_ENV = "CONTRACTION_LAB_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Workers to use: ``requested`` capped by ``CONTRACTION_LAB_THREADS`` (default 1)."""
    cap = os.environ.get(THREADS_ENV)
    cap = int(cap) if cap else None
    n = requested if requested is not None else (cap or 1)
    if cap is not None:
        n = min(n, cap)
    return max(1, n)


@dataclass
class ExperimentConfig:
    """Settings of an ensemble run.

    ``problem`` is an :class:`LpProblem` or the tag ``"box3"`` for the cube
    LP.  The base initial condition is uniform on
    ``[base_low, base_high]^(n+m)`` unless ``x0`` fixes it; the remaining
    ones add ``N(0, noise_std^2)`` noise to it.  Every ``stride``-th
    integration step is recorded.
    """

    seed: int = 0
    n_trajectories: int = 150
    noise_std: float = 2.0
    dt: float = 1e-3
    t_end: float = 40.0
    gamma: float = 0.5
    problem: LpProblem | str = "box3"
    scheme: str = "euler"
    stride: int = 100
    base_low: float = -5.0
    base_high: float = 5.0
    x0: list[float] | None = None
    z_star: list[float] | None = None
    tol: float = 1e-3
    workers: int | None = None

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not -(2**63) <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    def resolve_problem(self) -> LpProblem:
        if isinstance(self.problem, LpProblem):
            return self.problem
        if self.problem == "box3":
            return box_lp(self.gamma)
        if isinstance(self.problem, dict):
            data = dict(self.problem)
            data.setdefault("gamma", self.gamma)
            return LpProblem.from_json(data)
        return LpProblem.load(self.problem)

    def known_z_star(self) -> np.ndarray | None:
        if self.z_star is not None:
            return np.asarray(self.z_star, dtype=float)
        if self.problem == "box3" and self.gamma == 0.5:
            return BOX_LP_Z_STAR.copy()
        return None

    @classmethod
    def from_json(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> dict:
        out = asdict(self)
        if isinstance(self.problem, LpProblem):
            out["problem"] = self.problem.to_json()
        return out


def initial_conditions(config: ExperimentConfig, dim: int) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    if config.x0 is not None:
        base = np.asarray(config.x0, dtype=float)
        if base.shape != (dim,):
            raise ValueError(f"x0 has shape {base.shape}, expected ({dim},)")
    else:
        base = rng.uniform(config.base_low, config.base_high, size=dim)
    noise = rng.normal(0.0, config.noise_std, size=(config.n_trajectories - 1, dim))
    return np.vstack([base, base + noise])


@dataclass
class ExperimentResult:
    times: np.ndarray
    distances: np.ndarray  # (n_trajectories, n_times), Euclidean distance to z_star
    finals: np.ndarray
    z_star: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray  # final state within tol of z_star (l-infinity)
    alpha: float
    hurwitz: bool
    trajectories: list = field(repr=False, default_factory=list)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def summary(self) -> dict:
        return {
            "times": self.times.tolist(),
            "mean_distance": self.distances.mean(axis=0).tolist(),
            "std_distance": self.distances.std(axis=0).tolist(),
            "z_star": self.z_star.tolist(),
            "alpha": self.alpha,
            "hurwitz": self.hurwitz,
            "final_residual": self.residuals.tolist(),
            "converged": self.converged.tolist(),
            "n_converged": int(self.converged.sum()),
        }


def _chunks(n: int, k: int) -> list[slice]:
    edges = np.linspace(0, n, k + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Integrate the seeded ensemble and summarize distances to the limit point.

    The reference point is ``config.z_star`` when given (or the known
    equilibrium of the cube LP), otherwise the mean of the final states.
    Trajectories ending farther than ``tol`` from it are flagged in the
    result; they do not stop the batch.
    """
    prob = config.resolve_problem()
    ics = initial_conditions(config, prob.dim)
    vf = lp_vector_field(prob)

    workers = worker_count(config.workers)
    parts = _chunks(len(ics), workers)
    if workers == 1:
        results = [integrate_ensemble(vf, ics[s], config.t_end, config.dt, config.scheme,
                                      config.stride) for s in parts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(integrate_ensemble, vf, ics[s], config.t_end, config.dt,
                                   config.scheme, config.stride) for s in parts]
            results = [f.result() for f in futures]
    trajs = [tr for part in results for tr in part]

    finals = np.array([tr.final for tr in trajs])
    z_star = config.known_z_star()
    if z_star is None:
        z_star = finals.mean(axis=0)
    residuals = np.max(np.abs(f_lp(finals, prob)), axis=1)
    converged = np.max(np.abs(finals - z_star), axis=1) <= config.tol
    for j in np.flatnonzero(~converged):
        log.warning("trajectory %d did not reach z_star (residual %.3e)", j, residuals[j])
    hr = check_hurwitz(jacobian_f_lp(z_star, prob)[0])
    times = trajs[0].times
    dist = np.array([np.linalg.norm(tr.states - z_star, axis=1) for tr in trajs])
    result = ExperimentResult(times, dist, finals, z_star, residuals, converged, hr.alpha,
                              hr.hurwitz, trajs)
    if out_dir is not None:
        write_artifacts(result, config, out_dir)
    return result


def write_artifacts(result: ExperimentResult, config: ExperimentConfig, out_dir) -> None:
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    width = len(str(len(result.trajectories) - 1))
    for j, tr in enumerate(result.trajectories):
        with open(out / "trajectories" / f"traj_{j:0{width}d}.csv", "w", newline="") as fh:
            tr.to_csv(fh)
    summary = result.summary()
    summary["config"] = config.to_json()
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)


def emit_bound_overlay(times, distances, columns: dict, fh=None) -> str | None:
    """Table ``t, mean_dist, std_dist, <bound columns...>`` for external plotting.

    ``distances`` holds one row per trajectory on the common grid ``times``;
    each entry of ``columns`` is either an array on that grid or a callable
    evaluated on it.
    """
    times = np.asarray(times, dtype=float)
    D = np.atleast_2d(np.asarray(distances, dtype=float))
    if D.size == 0 or D.shape[0] == 0:
        raise ValueError("no trajectories to overlay")
    if D.shape[1] != times.shape[0]:
        raise ValueError("distance rows do not match the time grid")
    cols = {}
    for name, col in columns.items():
        vals = np.asarray(col(times) if callable(col) else col, dtype=float)
        if vals.shape != times.shape:
            raise ValueError(f"column {name!r} does not match the time grid")
        cols[name] = vals
    sink = io.StringIO() if fh is None else fh
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["t", "mean_dist", "std_dist", *cols])
    mean, std = D.mean(axis=0), D.std(axis=0)
    for k, t in enumerate(times):
        w.writerow([f"{v:.17g}" for v in (t, mean[k], std[k], *(c[k] for c in cols.values()))])
    return sink.getvalue() if fh is None else None


def lp_bound_columns(result: ExperimentResult, prob: LpProblem) -> dict:
    """Envelope columns for the worst initial distance of an ensemble.

    Uses :func:`contraction_lab.lp.local_profile` around the limit point and
    the grid-optimal contraction factor.
    """
    profile = local_profile(prob, result.z_star)
    d0 = float(result.distances[:, 0].max())
    if d0 <= profile.r:
        env = diff_norm_bound(profile, d0, 0.5)
        return {"linexp": env}
    rho, params = best_rho(profile, d0)
    return {
        "linexp": params,
        "gB": lambda t: piecewise_bound_gB(t, profile, d0, rho),
    }
