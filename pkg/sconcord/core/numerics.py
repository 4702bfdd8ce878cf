"""
Dense symmetric linear algebra: positive-definite solves, Lanczos extreme
eigenvalue estimates, the sqrt-cond estimator and fixed-budget CG.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]
OperatorLike = Union[npt.NDArray[np.float64], LinearOperator]

# Lanczos iteration-budget constant
LANCZOS_BUDGET_CONSTANT = 8.0
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class PdSolveResult:
    solution: Vector
    success: bool
    smallest_pivot: float


@dataclass(frozen=True)
class EigenEstimate:
    value: float
    vector: Vector
    relative_error_target: float
    iterations_used: int
    converged: bool = True
    residual: float = 0.0


class CountingOperator(LinearOperator):
    """Wraps a symmetric operator and counts its matrix-vector products."""

    def __init__(self, operator: OperatorLike) -> None:
        self.inner = aslinearoperator(operator)
        self.matvecs = 0
        super().__init__(dtype=np.float64, shape=self.inner.shape)

    def _matvec(self, v: Vector) -> Vector:
        self.matvecs += 1
        return np.asarray(self.inner.matvec(v), dtype=float).reshape(-1)

    def _rmatvec(self, v: Vector) -> Vector:
        return self._matvec(v)


def solve_pd(H: npt.NDArray[np.float64], g: Vector) -> PdSolveResult:
    """
    Solve H s = g for symmetric positive definite H by Cholesky with one step
    of iterative refinement. Failure of the factorization (or a pivot below
    the factorization tolerance) is reported through `success`.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] != g.shape[0]:
        raise ValueError(f"solve_pd shape mismatch: H {H.shape}, g {g.shape}")
    n = H.shape[0]
    scale = float(np.max(np.abs(np.diag(H)))) if n else 0.0
    tol = _EPS * n * max(scale, _EPS)
    try:
        factor = linalg.cho_factor(H, lower=True, check_finite=True)
    except linalg.LinAlgError:
        return PdSolveResult(np.zeros(n), False, _indefinite_pivot(H))
    pivots = np.diag(factor[0]) ** 2
    smallest = float(np.min(pivots))
    if smallest <= tol:
        return PdSolveResult(np.zeros(n), False, smallest)

    solution = linalg.cho_solve(factor, g)
    solution = solution + linalg.cho_solve(factor, g - H @ solution)
    return PdSolveResult(solution, True, smallest)


def _indefinite_pivot(H: npt.NDArray[np.float64]) -> float:
    # smallest eigenvalue of the block-diagonal D in H = L D L^T
    try:
        _, d, _ = linalg.ldl(H, lower=True)
        return float(np.min(linalg.eigvalsh(d)))
    except (linalg.LinAlgError, ValueError):
        return -math.inf


def lanczos_budget(n: int, rel_tol: float, fail_prob: float, max_iters: Optional[int]) -> int:
    """min(n, max_iters, ceil(C_L log(n / fail_prob^2) / sqrt(rel_tol)))."""
    budget = n
    if fail_prob > 0.0:
        estimate = LANCZOS_BUDGET_CONSTANT * math.log(max(n, 2) / fail_prob**2)
        budget = min(n, math.ceil(estimate / math.sqrt(rel_tol)))
    if max_iters is not None:
        budget = min(budget, max_iters)
    return max(budget, 1)


def _lanczos_top(
    op: LinearOperator, budget: int, rel_tol: float, rng: np.random.Generator
) -> tuple[float, Vector, int, bool, float]:
    """Top Ritz pair of a symmetric operator with full reorthogonalization."""
    n = op.shape[0]
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis = np.zeros((n, budget))
    alphas: list[float] = []
    betas: list[float] = []
    theta, ritz, residual = 0.0, q.copy(), math.inf

    for j in range(budget):
        basis[:, j] = q
        w = np.asarray(op.matvec(q), dtype=float).reshape(-1)
        alpha = float(q @ w)
        alphas.append(alpha)
        w = w - basis[:, : j + 1] @ (basis[:, : j + 1].T @ w)
        w = w - basis[:, : j + 1] @ (basis[:, : j + 1].T @ w)
        beta = float(np.linalg.norm(w))

        evals, evecs = linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        theta = float(evals[-1])
        top = evecs[:, -1]
        ritz = basis[:, : j + 1] @ top
        residual = abs(beta * float(top[-1]))
        scale = max(abs(float(evals[0])), abs(theta), _EPS)

        if beta <= 1e-12 * scale:
            return theta, ritz / np.linalg.norm(ritz), j + 1, True, residual
        if j + 1 == n:
            return theta, ritz / np.linalg.norm(ritz), j + 1, True, residual
        if residual <= 1e-2 * rel_tol * max(abs(theta), _EPS):
            return theta, ritz / np.linalg.norm(ritz), j + 1, True, residual
        betas.append(beta)
        q = w / beta

    return theta, ritz / np.linalg.norm(ritz), budget, False, residual


def lanczos_extreme(
    A: OperatorLike,
    mode: Literal["largest", "smallest"] = "largest",
    rel_tol: float = 1.0 / 3.0,
    fail_prob: float = 1e-6,
    max_iters: Optional[int] = None,
    seed: int = 0,
    beta_bound: Optional[float] = None,
    top_estimate: Optional[float] = None,
) -> EigenEstimate:
    """
    Extreme eigenpair of a symmetric operator by randomized Lanczos.

    The smallest mode runs Lanczos on s I - A with s = 2 lam_hat / (1 - eps'),
    where lam_hat is the largest Ritz magnitude of A and eps' = 1 / (10 beta^2)
    (rel_tol / 10 without a beta bound), so the construction also applies to
    indefinite operators.
    """
    op = aslinearoperator(A)
    n = op.shape[0]
    rng = np.random.default_rng(seed)
    if mode == "largest":
        budget = lanczos_budget(n, rel_tol, fail_prob, max_iters)
        value, vector, iters, converged, residual = _lanczos_top(op, budget, rel_tol, rng)
        if not converged:
            logger.warning("Lanczos (largest) not converged after %d iterations", iters)
        return EigenEstimate(value, vector, rel_tol, iters, converged, residual)
    if mode != "smallest":
        raise ValueError(f"Unknown Lanczos mode: {mode}")

    iters_used = 0
    if top_estimate is None:
        half = fail_prob / 2.0
        budget = lanczos_budget(n, 1.0 / 3.0, half, max_iters)
        top, _, iters_used, _, _ = _lanczos_top(op, budget, 1.0 / 3.0, rng)
        bottom = _ritz_floor(op, rng)
        top_estimate = max(abs(top), abs(bottom))
        fail_prob = half
    eps_prime = 1.0 / (10.0 * beta_bound**2) if beta_bound is not None else rel_tol / 10.0
    shift = 2.0 * max(abs(top_estimate), _EPS) / (1.0 - eps_prime)
    shifted = LinearOperator(
        shape=op.shape,
        matvec=lambda v: shift * np.asarray(v).reshape(-1) - op.matvec(v).reshape(-1),
        dtype=np.float64,
    )
    budget = lanczos_budget(n, eps_prime, fail_prob, max_iters)
    value, vector, iters, converged, residual = _lanczos_top(shifted, budget, eps_prime, rng)
    if not converged:
        logger.warning("Lanczos (smallest) not converged after %d iterations", iters)
    return EigenEstimate(shift - value, vector, rel_tol, iters + iters_used, converged, residual)


def _ritz_floor(op: LinearOperator, rng: np.random.Generator) -> float:
    # the most negative eigenvalue matters for the shift of indefinite operators
    n = op.shape[0]
    negated = LinearOperator(shape=op.shape, matvec=lambda v: -op.matvec(v), dtype=np.float64)
    value, _, _, _, _ = _lanczos_top(negated, min(n, 32), 1.0 / 3.0, rng)
    return -value


def sqrt_cond(
    A: OperatorLike, fail_prob: float, beta_bound: float, seed: int = 0
) -> float:
    """Estimate of sqrt(cond A) lying in [sqrt(cond), 2 sqrt(cond)] with high probability."""
    half = fail_prob / 2.0
    lam1 = lanczos_extreme(A, "largest", 1.0 / 3.0, half, seed=seed)
    lam2 = lanczos_extreme(
        A,
        "smallest",
        1.0 / 3.0,
        half,
        seed=seed + 1,
        beta_bound=beta_bound,
        top_estimate=lam1.value,
    )
    if lam2.value <= 0.0:
        logger.warning("sqrt_cond: nonpositive smallest eigenvalue estimate %.3e", lam2.value)
        return math.inf
    return math.sqrt(2.0 * lam1.value / lam2.value)


def cg_iteration_count(n: int, beta: float, alpha: float) -> int:
    """min(n, floor(log_{(beta-1)/(beta+1)}(alpha / 2)) + 1)."""
    if beta <= 1.0:
        raise ValueError(f"beta must exceed 1, got {beta}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if math.isinf(beta):
        return n
    # log((beta - 1) / (beta + 1)) without the cancellation that rounds it to 0
    log_ratio = math.log1p(-2.0 / (beta + 1.0))
    if log_ratio == 0.0:
        return n
    count = math.log(0.5 * alpha) / log_ratio
    if count >= n:
        return n
    return min(n, math.floor(count) + 1)


def cg_inverse(H: OperatorLike, g: Vector, beta: float, alpha: float) -> Vector:
    """Conjugate gradient for H h = g from zero, run for the prescribed iteration count."""
    op = aslinearoperator(H)
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    iterations = cg_iteration_count(n, beta, alpha)
    h = np.zeros(n)
    r = g.copy()
    p = r.copy()
    rs = float(r @ r)
    floor = (_EPS * float(np.linalg.norm(g))) ** 2
    for _ in range(iterations):
        if rs <= floor:
            break
        hp = np.asarray(op.matvec(p), dtype=float).reshape(-1)
        curvature = float(p @ hp)
        if curvature <= 0.0:
            logger.warning("cg_inverse: nonpositive curvature %.3e, stopping early", curvature)
            break
        step = rs / curvature
        h = h + step * p
        r = r - step * hp
        rs_next = float(r @ r)
        p = r + (rs_next / rs) * p
        rs = rs_next
    return h
