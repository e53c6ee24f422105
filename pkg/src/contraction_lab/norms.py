"""Vector norms, induced log-norms and norm-equivalence coefficients.

Every norm handled here is a (possibly weighted) l1, l2 or l-infinity norm,
``||x||_{p,Q} = ||Q x||_p``.  The unweighted norms are the special case
``Q = I``; keeping a single representation lets the equivalence
coefficients of any pair be written as a mixed induced norm of
``Q_a Q_b^{-1}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

__all__ = [
    "NormSpec",
    "EquivalencePair",
    "SingularWeightError",
    "vector_norm",
    "induced_norm",
    "mixed_induced_norm",
    "log_norm",
    "log_norm_limit_oracle",
    "equivalence_coefficients",
]

INF = math.inf

# reject weights with sigma_min / sigma_max below this
WEIGHT_RCOND = 1e-12

# exhaustive sign enumeration is exact but costs 2**(n-1) products
_MAX_ENUM_DIM = 16
_N_SAMPLES = 100_000

_KIND_TO_P = {"l1": 1.0, "l2": 2.0, "linf": INF}


class SingularWeightError(ValueError):
    """Weight matrix of a weighted norm is (numerically) singular."""


def _parse_p(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "linf"):
            return INF
        p = float(p)
    p = float(p)
    if p not in (1.0, 2.0, INF):
        raise ValueError(f"only p in {{1, 2, inf}} is supported, got {p!r}")
    return p


def _check_weight(Q) -> np.ndarray:
    Q = np.array(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("weight matrix has non-finite entries")
    s = np.linalg.svd(Q, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < WEIGHT_RCOND:
        raise SingularWeightError(
            f"weight matrix is numerically singular (sigma_min/sigma_max = "
            f"{s[-1] / s[0] if s[0] else 0.0:.3e})"
        )
    Q.setflags(write=False)
    return Q


@dataclass(frozen=True, eq=False)
class NormSpec:
    """Identifies one of the supported norms.

    Use the constructors :meth:`l1`, :meth:`l2`, :meth:`linf` and
    :meth:`weighted` rather than the raw initializer.
    """

    kind: str
    p: float
    Q: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("l1", "l2", "linf", "weighted"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        object.__setattr__(self, "p", _parse_p(self.p))
        if self.kind == "weighted":
            if self.Q is None:
                raise ValueError("weighted norm requires a weight matrix Q")
            object.__setattr__(self, "Q", _check_weight(self.Q))
        else:
            if self.Q is not None:
                raise ValueError(f"{self.kind} norm takes no weight matrix")
            if self.p != _KIND_TO_P[self.kind]:
                raise ValueError(f"{self.kind} norm has p={_KIND_TO_P[self.kind]}")

    @classmethod
    def l1(cls) -> NormSpec:
        return cls("l1", 1.0)

    @classmethod
    def l2(cls) -> NormSpec:
        return cls("l2", 2.0)

    @classmethod
    def linf(cls) -> NormSpec:
        return cls("linf", INF)

    @classmethod
    def weighted(cls, Q, p=2) -> NormSpec:
        return cls("weighted", p, Q)

    @property
    def dim(self) -> int | None:
        """State dimension fixed by the weight, or None for unweighted norms."""
        return None if self.Q is None else self.Q.shape[0]

    def weight(self, n: int) -> np.ndarray:
        """The weight matrix as an n-by-n array (identity when unweighted)."""
        self.check_dim(n)
        return np.eye(n) if self.Q is None else self.Q

    def check_dim(self, n: int) -> None:
        if self.Q is not None and self.Q.shape[0] != n:
            raise ValueError(
                f"dimension mismatch: norm weight is {self.Q.shape[0]}x{self.Q.shape[0]}, "
                f"data has dimension {n}"
            )

    def __eq__(self, other):
        if not isinstance(other, NormSpec):
            return NotImplemented
        if self.kind != other.kind or self.p != other.p:
            return False
        if self.Q is None or other.Q is None:
            return self.Q is None and other.Q is None
        return self.Q.shape == other.Q.shape and bool(np.array_equal(self.Q, other.Q))

    def __hash__(self):
        return hash((self.kind, self.p, None if self.Q is None else self.Q.tobytes()))

    def __repr__(self):
        if self.Q is None:
            return f"NormSpec.{self.kind}()"
        p = "inf" if self.p == INF else int(self.p)
        return f"NormSpec.weighted(Q={self.Q.tolist()}, p={p})"

    # JSON: {"kind": "l1"|"l2"|"linf"|"weighted", "p": 1|2|"inf", "Q": [[...]]}
    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "weighted":
            out["p"] = "inf" if self.p == INF else int(self.p)
            out["Q"] = self.Q.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> NormSpec:
        kind = data["kind"]
        if kind == "weighted":
            return cls.weighted(data["Q"], data.get("p", 2))
        if kind not in _KIND_TO_P:
            raise ValueError(f"unknown norm kind {kind!r}")
        if "p" in data and _parse_p(data["p"]) != _KIND_TO_P[kind]:
            raise ValueError(f"norm kind {kind!r} inconsistent with p={data['p']!r}")
        return cls(kind, _KIND_TO_P[kind])


@dataclass(frozen=True)
class EquivalencePair:
    """Coefficients with ``||x||_a <= k_ab ||x||_b`` and ``||x||_b <= k_ba ||x||_a``.

    ``certified`` is False when either coefficient is a sampled lower
    estimate rather than the exact minimal constant.
    """

    k_ab: float
    k_ba: float
    certified: bool = True

    @property
    def ratio(self) -> float:
        return self.k_ab * self.k_ba

    @classmethod
    def identity(cls) -> EquivalencePair:
        return cls(1.0, 1.0, True)


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x


def vector_norm(x, spec: NormSpec) -> float:
    """Norm of ``x``; for a stack of vectors (last axis = state) returns one per row."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    spec.check_dim(x.shape[-1])
    if spec.Q is not None:
        x = x @ spec.Q.T
    if spec.p == 2.0:
        # rescale so squaring neither underflows nor overflows
        scale = np.max(np.abs(x), axis=-1, keepdims=True)
        safe = np.where(scale > 0, scale, 1.0)
        out = safe[..., 0] * np.linalg.norm(x / safe, axis=-1)
    else:
        out = np.linalg.norm(x, ord=spec.p, axis=-1)
    return float(out) if out.ndim == 0 else out


def induced_norm(M, p: float) -> float:
    """Matrix norm induced by the unweighted l_p norm, p in {1, 2, inf}."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    p = _parse_p(p)
    if p == 1.0:
        return float(np.abs(M).sum(axis=0).max())
    if p == INF:
        return float(np.abs(M).sum(axis=1).max())
    return float(np.linalg.norm(M, 2))


def _weighted_similarity(A: np.ndarray, spec: NormSpec) -> np.ndarray:
    if spec.Q is None:
        return A
    Q = spec.Q
    # Q A Q^{-1} without forming the inverse
    return np.linalg.solve(Q.T, (Q @ A).T).T


def _square(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"log-norm needs a square matrix, got shape {A.shape}")
    return A


def log_norm(A, spec: NormSpec) -> float:
    """Logarithmic norm (matrix measure) of ``A`` induced by ``spec``.

    Closed forms: column-wise for l1, row-wise for l-infinity and the top
    eigenvalue of the symmetric part for l2.  Weighted norms use
    ``mu_{p,Q}(A) = mu_p(Q A Q^{-1})``.
    """
    A = _square(A)
    spec.check_dim(A.shape[0])
    B = _weighted_similarity(A, spec)
    if spec.p == 2.0:
        return float(np.linalg.eigvalsh(0.5 * (B + B.T))[-1])
    d = np.diag(B)
    off = np.abs(B) - np.diag(np.abs(d))
    if spec.p == 1.0:
        return float(np.max(d + off.sum(axis=0)))
    return float(np.max(d + off.sum(axis=1)))


def log_norm_limit_oracle(A, spec: NormSpec, h: float = 1e-7) -> float:
    """One-sided difference quotient ``(||I + hA|| - 1) / h``.

    Independent of :func:`log_norm`: it only uses induced matrix norms, so it
    serves as a numerical check of the closed forms.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    A = _square(A)
    spec.check_dim(A.shape[0])
    B = _weighted_similarity(A, spec)
    n = A.shape[0]
    return (induced_norm(np.eye(n) + h * B, spec.p) - 1.0) / h


def _sign_vectors(n: int) -> np.ndarray:
    # first sign fixed to +1; norms are symmetric
    if n == 1:
        return np.ones((1, 1))
    rest = np.array(list(itertools.product((1.0, -1.0), repeat=n - 1)))
    return np.hstack([np.ones((rest.shape[0], 1)), rest])


def _inf_to_p(M: np.ndarray, p: float, rng) -> tuple[float, bool]:
    # max of a convex function over the unit cube sits at a vertex
    n = M.shape[1]
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0 and M.shape[0] == n:
        return float(np.linalg.norm(np.diag(M), ord=p)), True
    if n <= _MAX_ENUM_DIM:
        S = _sign_vectors(n)
        return float(np.linalg.norm(S @ M.T, ord=p, axis=1).max()), True
    S = rng.choice((-1.0, 1.0), size=(_N_SAMPLES, n))
    return float(np.linalg.norm(S @ M.T, ord=p, axis=1).max()), False


def mixed_induced_norm(M, p_from, p_to, seed: int = 0) -> tuple[float, bool]:
    """``sup ||M x||_{p_to} / ||x||_{p_from}`` and whether the value is exact.

    Exact formulas cover ``p_from == p_to``, ``p_from == 1`` and
    ``p_to == inf``.  The remaining pairs (inf->1, inf->2 and, by duality,
    2->1) are maximized over cube vertices, exactly up to dimension 16 and
    by random sign sampling (a lower bound) beyond.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    a, b = _parse_p(p_from), _parse_p(p_to)
    if a == b:
        return induced_norm(M, a), True
    if a == 1.0:
        return float(np.linalg.norm(M, ord=b, axis=0).max()), True
    if b == INF:
        dual = {2.0: 2.0, INF: 1.0}[a]
        return float(np.linalg.norm(M, ord=dual, axis=1).max()), True
    rng = np.random.default_rng(seed)
    if a == 2.0 and b == 1.0:
        return _inf_to_p(M.T, 2.0, rng)
    return _inf_to_p(M, b, rng)


def equivalence_coefficients(alpha: NormSpec, beta: NormSpec, n: int) -> EquivalencePair:
    """Minimal constants relating ``alpha`` and ``beta`` on R^n.

    ``k_ab`` bounds ``||x||_alpha`` by ``||x||_beta`` and ``k_ba`` the other
    way round.  For weights ``Q_a``, ``Q_b`` the minimal ``k_ab`` is the
    induced norm of ``Q_a Q_b^{-1}`` from l_{p_b} to l_{p_a}.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    Qa, Qb = alpha.weight(n), beta.weight(n)
    if alpha == beta:
        return EquivalencePair.identity()
    Mab = np.linalg.solve(Qb.T, Qa.T).T  # Q_a Q_b^{-1}
    Mba = np.linalg.solve(Qa.T, Qb.T).T
    k_ab, exact_ab = mixed_induced_norm(Mab, beta.p, alpha.p)
    k_ba, exact_ba = mixed_induced_norm(Mba, alpha.p, beta.p)
    return EquivalencePair(k_ab, k_ba, exact_ab and exact_ba)
