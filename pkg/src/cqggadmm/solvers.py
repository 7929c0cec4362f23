"""Per-worker penalized subproblems.

Each primal update minimizes

    f(theta) + <theta, v> + (c / 2) * ||theta||^2

with ``v`` the worker's linear term and ``c = rho * degree``. Linear
regression reduces to a symmetric positive-definite solve whose factor
never changes across iterations; logistic regression uses damped Newton.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch, InvalidArgument, NoConverge
from .objectives import LINEAR, LocalObjective

# Newton decrement below which the line search is skipped
_DECREMENT_FLOOR = 1e-10


@dataclass(frozen=True)
class NewtonSettings:
    grad_tol: float = 1e-10
    max_iters: int = 50
    max_halvings: int = 30

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise InvalidArgument(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iters < 1:
            raise InvalidArgument(f"max_iters must be positive, got {self.max_iters}")


@dataclass(frozen=True)
class SubproblemSpec:
    objective: LocalObjective
    linear_term: np.ndarray
    quad_coeff: float

    def __post_init__(self):
        v = np.asarray(self.linear_term, dtype=float)
        if v.shape != (self.objective.dim,):
            raise DimensionMismatch(
                f"linear term has shape {v.shape}, expected ({self.objective.dim},)"
            )
        if not self.quad_coeff > 0:
            raise InvalidArgument(f"quad_coeff must be positive, got {self.quad_coeff}")
        object.__setattr__(self, "linear_term", v)

    def value(self, theta: np.ndarray) -> float:
        return (
            self.objective.value(theta)
            + float(theta @ self.linear_term)
            + 0.5 * self.quad_coeff * float(theta @ theta)
        )

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return self.objective.gradient(theta) + self.linear_term + self.quad_coeff * theta


class LinearFactorCache:
    """Cholesky factors of ``X^T X + c I`` keyed by (objective id, c)."""

    def __init__(self):
        self._factors: dict[tuple[int, float], tuple] = {}

    def get(self, objective: LocalObjective, quad_coeff: float):
        key = (id(objective), float(quad_coeff))
        factor = self._factors.get(key)
        if factor is None:
            gram = objective.gram()
            matrix = gram + quad_coeff * np.eye(gram.shape[0])
            factor = cho_factor(matrix, lower=True)
            self._factors[key] = factor
        return factor


def solve_subproblem(
    spec: SubproblemSpec,
    warm_start: np.ndarray | None = None,
    settings: NewtonSettings | None = None,
    cache: LinearFactorCache | None = None,
) -> np.ndarray:
    """Return the minimizer of the subproblem described by ``spec``.

    Raises
    ------
    NoConverge
        The logistic Newton iteration did not reach ``settings.grad_tol``.
    """
    settings = settings or NewtonSettings()
    obj = spec.objective
    if obj.kind == LINEAR:
        if cache is None:
            cache = LinearFactorCache()
        rhs = obj.data.features.T @ obj.data.labels - spec.linear_term
        return cho_solve(cache.get(obj, spec.quad_coeff), rhs)
    return _damped_newton(spec, warm_start, settings)


def _damped_newton(
    spec: SubproblemSpec, warm_start: np.ndarray | None, settings: NewtonSettings
) -> np.ndarray:
    d = spec.objective.dim
    theta = np.zeros(d) if warm_start is None else np.array(warm_start, dtype=float)
    if theta.shape != (d,):
        raise DimensionMismatch(f"warm start has shape {theta.shape}, expected ({d},)")
    eye = np.eye(d)
    f = spec.value(theta)
    for it in range(settings.max_iters):
        g = spec.gradient(theta)
        if np.linalg.norm(g) <= settings.grad_tol:
            return theta
        H = spec.objective.hessian(theta) + spec.quad_coeff * eye
        step = cho_solve(cho_factor(H, lower=True), g)
        if float(g @ step) <= _DECREMENT_FLOOR * (1.0 + abs(f)):
            # value differences are roundoff here; the pure step is reliable
            theta = theta - step
            f = spec.value(theta)
            continue
        t = 1.0
        for _ in range(settings.max_halvings):
            candidate = theta - t * step
            f_new = spec.value(candidate)
            if f_new <= f:
                break
            t *= 0.5
        else:
            raise NoConverge(f"line search failed at Newton iteration {it}", iterations=it)
        theta, f = candidate, f_new
    if np.linalg.norm(spec.gradient(theta)) <= settings.grad_tol:
        return theta
    raise NoConverge(
        f"Newton did not reach gradient norm {settings.grad_tol} in {settings.max_iters} iterations",
        iterations=settings.max_iters,
    )
