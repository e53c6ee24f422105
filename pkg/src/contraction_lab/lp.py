"""Augmented primal-dual dynamics for linear programs ``min c'x s.t. Ax <= b``.

With ``y = Ax + gamma*lam - b`` the flow is::

    x'   = -c - (1/gamma) A' ReLU(y)
    lam' = -gamma*lam + ReLU(y)

It is nonexpansive in the Euclidean norm everywhere and, when its Jacobian
at the equilibrium is Hurwitz, strongly contracting near it in a weighted
Euclidean norm.  States are handled as flat arrays ``z = (x, lam)``; any
leading axes are treated as a batch.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.optimize import linprog, nnls

from .bounds import ContractionProfile
from .dynamics import VectorField, integrate
from .norms import NormSpec, equivalence_coefficients, log_norm

__all__ = [
    "LpProblem",
    "PrimalDualState",
    "box_lp",
    "moreau_gradient_box",
    "f_lp",
    "lagrangian",
    "jacobian_f_lp",
    "lp_vector_field",
    "spectral_abscissa",
    "HurwitzReport",
    "check_hurwitz",
    "WeakContractionReport",
    "weak_contraction_certificate",
    "KktReport",
    "kkt_residual",
    "LpSolution",
    "solve_lp_by_integration",
    "VertexResult",
    "vertex_oracle",
    "local_weight",
    "local_profile",
    "random_lp",
    "ProbeRecord",
    "probe_instance",
    "conjecture_probe",
    "BOX_LP_Z_STAR",
]

KINK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    gamma: float = 0.5

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        A = np.atleast_2d(np.array(self.A, dtype=float))
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.shape != (b.shape[0], c.shape[0]):
            raise ValueError(f"A has shape {A.shape}, expected ({b.shape[0]}, {c.shape[0]})")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        for name, arr in (("c", c), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def dim(self) -> int:
        return self.n + self.m

    def to_json(self) -> dict:
        return {"c": self.c.tolist(), "A": self.A.tolist(), "b": self.b.tolist(),
                "gamma": self.gamma}

    @classmethod
    def from_json(cls, data: dict) -> LpProblem:
        return cls(data["c"], data["A"], data["b"], data.get("gamma", 0.5))

    @classmethod
    def load(cls, path) -> LpProblem:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class PrimalDualState:
    x: np.ndarray
    lam: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.x, dtype=float), np.asarray(self.lam, dtype=float)])

    @classmethod
    def split(cls, z, prob: LpProblem) -> PrimalDualState:
        z = np.asarray(z, dtype=float)
        return cls(z[: prob.n].copy(), z[prob.n:].copy())


def box_lp(gamma: float = 0.5) -> LpProblem:
    """``min x1 + x2 + x3`` over the cube ``[-1, 1]^3``."""
    A = np.vstack([np.eye(3), -np.eye(3)])
    return LpProblem(np.ones(3), A, np.ones(6), gamma)


BOX_LP_Z_STAR = np.array([-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0])


def _as_z(state, prob: LpProblem) -> np.ndarray:
    z = state.z if isinstance(state, PrimalDualState) else np.asarray(state, dtype=float)
    if z.shape[-1] != prob.dim:
        raise ValueError(f"state has dimension {z.shape[-1]}, problem needs {prob.dim}")
    return z


def moreau_gradient_box(y, b, gamma: float):
    """Gradient of the Moreau envelope of the indicator of ``{y <= b}``: ``ReLU(y - b) / gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return np.maximum(np.asarray(y, dtype=float) - b, 0.0) / gamma


def _y(z: np.ndarray, prob: LpProblem) -> np.ndarray:
    x, lam = z[..., : prob.n], z[..., prob.n:]
    return x @ prob.A.T + prob.gamma * lam - prob.b


def f_lp(state, prob: LpProblem) -> np.ndarray:
    """Primal-dual vector field; time-invariant."""
    z = _as_z(state, prob)
    relu = np.maximum(_y(z, prob), 0.0)
    dx = -prob.c - (relu @ prob.A) / prob.gamma
    dlam = -prob.gamma * z[..., prob.n:] + relu
    return np.concatenate([dx, dlam], axis=-1)


def lagrangian(state, prob: LpProblem) -> float:
    """Proximal augmented Lagrangian ``c'x + M(Ax + gamma lam) - gamma/2 |lam|^2``.

    For the box indicator the Moreau envelope is ``|ReLU(v - b)|^2 / (2 gamma)``.
    """
    z = _as_z(state, prob)
    x, lam = z[: prob.n], z[prob.n:]
    v = prob.A @ x + prob.gamma * lam
    env = np.sum(np.maximum(v - prob.b, 0.0) ** 2) / (2 * prob.gamma)
    return float(prob.c @ x + env - 0.5 * prob.gamma * lam @ lam)


def jacobian_f_lp(state, prob: LpProblem, kink_tol: float = KINK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian of :func:`f_lp` and the indices of kink-adjacent constraints.

    ``G = diag(y > 0)``, so the derivative of ReLU at 0 is taken as 0.
    """
    z = _as_z(state, prob)
    y = _y(z, prob)
    g = (y > 0).astype(float)
    A, gam = prob.A, prob.gamma
    GA = g[:, None] * A
    J = np.block([
        [-(A.T @ GA) / gam, -GA.T],
        [GA, -gam * np.diag(1.0 - g)],
    ])
    return J, np.flatnonzero(np.abs(y) <= kink_tol)


def lp_vector_field(prob: LpProblem) -> VectorField:
    return VectorField(
        prob.dim,
        lambda t, z: f_lp(z, prob),
        lambda t, z: jacobian_f_lp(z, prob)[0],
        vectorized=True,
        name="lp",
    )


def spectral_abscissa(M) -> float:
    """Largest real part over the spectrum of ``M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"need a square matrix, got shape {M.shape}")
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigenvalue computation did not converge: {exc}") from exc
    return float(np.max(eig.real))


@dataclass(frozen=True)
class HurwitzReport:
    hurwitz: bool
    alpha: float


def check_hurwitz(M, eps: float = 1e-9) -> HurwitzReport:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    alpha = spectral_abscissa(M)
    return HurwitzReport(alpha < -eps, alpha)


@dataclass(frozen=True)
class WeakContractionReport:
    max_mu2: float
    max_offdiag: float
    passed: bool
    n_samples: int
    n_excluded: int


def weak_contraction_certificate(prob: LpProblem, samples: int = 1000, seed: int = 0,
                                 scale: float = 10.0) -> WeakContractionReport:
    """Sampled check that ``mu_2(DF_LP(z)) <= 0``.

    Also measures the off-diagonal blocks of the symmetric part of the
    Jacobian, which cancel exactly (``-A'G`` against ``(GA)'``).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    Z = scale * rng.standard_normal((samples, prob.dim))
    n = prob.n
    max_mu, max_off, excluded = -math.inf, 0.0, 0
    for z in Z:
        J, kinks = jacobian_f_lp(z, prob)
        if kinks.size:
            excluded += 1
            continue
        S = 0.5 * (J + J.T)
        max_off = max(max_off, float(np.max(np.abs(S[:n, n:]), initial=0.0)))
        max_mu = max(max_mu, log_norm(J, NormSpec.l2()))
    return WeakContractionReport(max_mu, max_off, bool(max_mu <= 1e-9 and max_off <= 1e-12),
                                 samples, excluded)


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    def as_dict(self) -> dict:
        return {"stationarity": self.stationarity, "primal": self.primal,
                "dual": self.dual, "complementarity": self.complementarity}


def kkt_residual(state, prob: LpProblem) -> KktReport:
    z = _as_z(state, prob)
    x, lam = z[: prob.n], z[prob.n:]
    slack = prob.A @ x - prob.b
    return KktReport(
        float(np.max(np.abs(prob.c + prob.A.T @ lam))),
        float(np.max(np.maximum(slack, 0.0), initial=0.0)),
        float(np.max(np.maximum(-lam, 0.0), initial=0.0)),
        float(np.max(np.abs(lam * slack), initial=0.0)),
    )


@dataclass(frozen=True)
class LpSolution:
    z_final: np.ndarray
    converged: bool
    residual: float
    kkt: KktReport
    t_final: float
    n: int

    @property
    def x(self) -> np.ndarray:
        return self.z_final[: self.n]

    @property
    def lam(self) -> np.ndarray:
        return self.z_final[self.n:]


def solve_lp_by_integration(prob: LpProblem, x0=None, lambda0=None, dt: float = 1e-3,
                            t_end: float = 40.0, tol: float = 1e-6,
                            scheme: str = "euler", check_every: int | None = None) -> LpSolution:
    """Integrate the primal-dual flow and report where it ends up.

    Defaults start from ``x = 0``, ``lam = 0``.  Converged means
    ``|f_lp(z_final)|_inf <= tol``.  With ``check_every`` set, the residual
    is inspected every that many steps and integration stops early once it
    drops below ``1e-3 tol``; the flow is autonomous, so the states agree
    with one uninterrupted run.
    """
    x0 = np.zeros(prob.n) if x0 is None else np.asarray(x0, dtype=float)
    lambda0 = np.zeros(prob.m) if lambda0 is None else np.asarray(lambda0, dtype=float)
    z = np.concatenate([x0, lambda0])
    vf = lp_vector_field(prob)
    n_steps = round(t_end / dt)
    chunk = n_steps if check_every is None else min(int(check_every), n_steps)
    if chunk < 1:
        raise ValueError("check_every must be >= 1")
    done = 0
    while done < n_steps:
        k = min(chunk, n_steps - done)
        z = integrate(vf, z, k * dt, dt, scheme, stride=k).final
        done += k
        if check_every is not None and np.max(np.abs(f_lp(z, prob))) <= 1e-3 * tol:
            break
    res = float(np.max(np.abs(f_lp(z, prob))))
    return LpSolution(z, res <= tol, res, kkt_residual(z, prob), done * dt, prob.n)


@dataclass(frozen=True)
class VertexResult:
    optimal: np.ndarray
    value: float
    unique: bool
    vertices: np.ndarray
    bounded: bool


def _recession_free(A: np.ndarray, c: np.ndarray, tol: float = 1e-9) -> bool:
    # optimal face is bounded iff no d != 0 with A d <= 0, c'd <= 0
    n = A.shape[1]
    A_ub = np.vstack([A, c[None, :]])
    b_ub = np.zeros(A_ub.shape[0])
    for i in range(n):
        for sgn in (1.0, -1.0):
            obj = np.zeros(n)
            obj[i] = -sgn
            res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=[(-1, 1)] * n, method="highs")
            if res.status == 0 and -res.fun > tol:
                return False
    return True


def vertex_oracle(prob: LpProblem, tol: float = 1e-9) -> VertexResult:
    """Brute-force LP solution by enumerating basic feasible points.

    Every n-subset of constraints is solved as an equality system; feasible
    solutions are the vertices and the cheapest ones are returned.
    ``bounded`` tells whether the LP has a finite optimum (checked via dual
    feasibility); ``unique`` needs a single optimal vertex and an optimal
    face without recession directions.
    """
    n, m = prob.n, prob.m
    if n > 8 or m > 16:
        raise ValueError(f"vertex enumeration limited to n <= 8, m <= 16 (got n={n}, m={m})")
    A, b, c = prob.A, prob.b, prob.c
    verts: list[np.ndarray] = []
    for rows in itertools.combinations(range(m), n):
        As = A[list(rows)]
        if np.linalg.matrix_rank(As, tol=1e-10) < n:
            continue
        x = np.linalg.solve(As, b[list(rows)])
        if np.all(A @ x <= b + tol * (1 + np.abs(b))):
            if not any(np.allclose(x, v, atol=1e-9, rtol=0) for v in verts):
                verts.append(x)
    if not verts:
        raise ValueError("no vertices: the LP is infeasible or its feasible set has no vertex")
    V = np.array(verts)
    values = V @ c
    best = float(values.min())
    opt = V[values <= best + tol * max(1.0, abs(best))]
    # bounded below iff exists lam >= 0 with A'lam = -c
    _, dual_gap = nnls(A.T, -c)
    bounded = dual_gap <= 1e-8 * max(1.0, float(np.linalg.norm(c)))
    unique = bounded and opt.shape[0] == 1 and _recession_free(A, c)
    return VertexResult(opt, best, bool(unique), V, bool(bounded))


def local_weight(J) -> tuple[np.ndarray, float]:
    """Weight ``Q = P^{1/2}`` from ``J'P + PJ = -I`` and the rate ``-mu_{2,Q}(J)``.

    Requires ``J`` Hurwitz, otherwise no positive definite ``P`` exists.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    P = sla.solve_continuous_lyapunov(J.T, -np.eye(n))
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    if w[0] <= 0:
        raise ValueError("Lyapunov solution is not positive definite; is J Hurwitz?")
    Q = (V * np.sqrt(w)) @ V.T
    c_exp = -log_norm(J, NormSpec.weighted(Q))
    if c_exp <= 0:
        raise ValueError("weighted log-norm is not negative; is J Hurwitz?")
    return Q, c_exp


def local_profile(prob: LpProblem, z_star) -> ContractionProfile:
    """Contraction profile of the primal-dual flow around a non-kink equilibrium.

    Inside the largest ``Q``-weighted ball that no switching surface
    ``y_i = 0`` crosses, the Jacobian is constant and contracts at
    ``c_exp``.  The Euclidean radius ``r`` is that ball's radius divided by
    ``sigma_max(Q)``.
    """
    z_star = np.asarray(z_star, dtype=float)
    J, kinks = jacobian_f_lp(z_star, prob)
    if kinks.size:
        raise ValueError(f"equilibrium sits on switching surfaces {kinks.tolist()}")
    Q, c_exp = local_weight(J)
    y = _y(z_star, prob)
    W = np.hstack([prob.A, prob.gamma * np.eye(prob.m)])  # rows: gradients of y_i
    # distance to {y_i = 0} in the Q-norm uses the dual norm |Q^{-1} w|_2
    dual = np.linalg.norm(np.linalg.solve(Q, W.T), axis=0)
    rho_q = float(np.min(np.abs(y) / dual))
    r = rho_q / np.linalg.norm(Q, 2)
    g, loc = NormSpec.l2(), NormSpec.weighted(Q)
    equiv = equivalence_coefficients(loc, g, prob.dim)
    return ContractionProfile(g, loc, c_exp, r, equiv, z_star)


def random_lp(rng, n: int | None = None, m_extra: int | None = None, box: float = 5.0,
              face_prob: float = 0.3, gamma: float = 0.5) -> LpProblem:
    """Random bounded LP with the origin strictly feasible.

    Box constraints ``|x_i| <= box`` keep the region bounded.  With
    probability ``face_prob`` the cost is aligned with a constraint normal,
    which typically makes a whole facet optimal.
    """
    n = int(rng.integers(2, 4)) if n is None else n
    m_extra = int(rng.integers(1, 4)) if m_extra is None else m_extra
    A_extra = rng.standard_normal((m_extra, n))
    b_extra = rng.uniform(0.5, 2.0, size=m_extra)
    A = np.vstack([A_extra, np.eye(n), -np.eye(n)])
    b = np.concatenate([b_extra, np.full(2 * n, box)])
    if rng.uniform() < face_prob:
        c = -A_extra[int(rng.integers(m_extra))].copy()
    else:
        c = rng.standard_normal(n)
    return LpProblem(c, A, b, gamma)


@dataclass(frozen=True)
class ProbeRecord:
    index: int
    problem: LpProblem
    unique: bool
    hurwitz: bool | None
    alpha: float | None
    converged: bool
    inconclusive: bool
    agree: bool | None
    note: str = ""

    def as_dict(self) -> dict:
        return {"index": self.index, "unique": self.unique, "hurwitz": self.hurwitz,
                "alpha": self.alpha, "converged": self.converged,
                "inconclusive": self.inconclusive, "agree": self.agree, "note": self.note,
                "problem": self.problem.to_json()}


def probe_instance(prob: LpProblem, index: int = 0, dt: float = 1e-3, t_end: float = 60.0,
                   tol: float = 1e-6, kink_tol: float = 1e-5) -> ProbeRecord:
    """Compare uniqueness of the LP optimum with stability of the linearization."""
    vo = vertex_oracle(prob)
    sol = solve_lp_by_integration(prob, dt=dt, t_end=t_end, tol=tol, check_every=1000)
    J, kinks = jacobian_f_lp(sol.z_final, prob, kink_tol=kink_tol)
    hr = check_hurwitz(J)
    notes = []
    if kinks.size:
        notes.append(f"equilibrium on switching surface(s) {kinks.tolist()}")
    if not sol.converged:
        notes.append(f"not converged (residual {sol.residual:.2e})")
    inconclusive = bool(kinks.size) or not sol.converged
    agree = None if inconclusive else (vo.unique == hr.hurwitz)
    return ProbeRecord(index, prob, vo.unique, hr.hurwitz, hr.alpha, sol.converged,
                       inconclusive, agree, "; ".join(notes))


def conjecture_probe(seed: int, count: int, **kwargs) -> list[ProbeRecord]:
    """Evidence for: unique LP optimum iff the Jacobian at the equilibrium is Hurwitz.

    Instances whose equilibrium sits on a switching surface, or that did not
    converge, are marked inconclusive rather than counted against it.
    """
    rng = np.random.default_rng(seed)
    return [probe_instance(random_lp(rng), i, **kwargs) for i in range(count)]
