"""
Nonnegative matrix factorization losses on the flattened variable
x = [vec(X), vec(Y)] (row-major X in R^{m x r}, then Y in R^{r x n}):

  frobenius:  f1(X, Y) = 1/(2mn) ||Z - XY||_F^2
  kl:         f2(X, Y) = 1/(mn) sum_ij [Z log(Z / W) - Z + W],  W = XY

with the convex references that make them F-based 1-self-concordant on the
positive orthant.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from scipy import special

from sconcord.core.oracle import OracleHandle, ReferencePair, Vector
from sconcord.problems.polynomial import (
    polynomial_reference,
    polynomial_reference_fit,
    polynomial_sc_constant,
)
from sconcord.problems.sampling import positive_log_uniform

logger = logging.getLogger(__name__)

NmfLoss = Literal["frobenius", "kl"]

# barrier multiplier of the KL reference; the -log(x^T y) terms need tau > 3
KL_TAU = 4.0
# tail singular values are drawn from U[0, TAIL_FRACTION * sigma_r]
TAIL_FRACTION = 0.1
FIT_SAMPLE_BUDGET = 10


def _positive(x: Vector) -> bool:
    return bool(np.all(np.isfinite(x)) and np.all(x > 0.0))


@dataclass(frozen=True)
class NmfInstance:
    z_matrix: np.ndarray
    m: int
    n: int
    r: int
    loss: NmfLoss
    barrier_weight: float
    quartic_weight: float
    optimal_value_hint: Optional[float]
    seed: int
    noise: float = 0.0
    x_hat: Optional[np.ndarray] = None
    y_hat: Optional[np.ndarray] = None
    notes: Tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.m * self.r + self.r * self.n

    def split(self, x: Vector) -> Tuple[np.ndarray, np.ndarray]:
        k = self.m * self.r
        return x[:k].reshape(self.m, self.r), x[k:].reshape(self.r, self.n)

    def join(self, X: np.ndarray, Y: np.ndarray) -> Vector:
        return np.concatenate([np.ravel(X), np.ravel(Y)])

    def planted_point(self) -> Vector:
        if self.x_hat is None or self.y_hat is None:
            raise ValueError("instance carries no planted factors")
        return self.join(self.x_hat, self.y_hat)

    def kappa_ref(self) -> float:
        """Self-concordance constant of the reference built by nmf_oracles."""
        if self.loss == "frobenius":
            return 1.0 / math.sqrt(self.barrier_weight)
        barrier = 1.0 / math.sqrt(self.barrier_weight * min(self.m, self.n))
        if self.quartic_weight <= 0.0:
            return barrier
        return max(barrier, polynomial_sc_constant(2) / math.sqrt(self.quartic_weight))


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def _frobenius_loss(inst: NmfInstance) -> OracleHandle:
    Z = inst.z_matrix
    scale = 1.0 / (inst.m * inst.n)

    def value(x: Vector) -> float:
        X, Y = inst.split(x)
        R = X @ Y - Z
        return 0.5 * scale * float(np.sum(R * R))

    def gradient(x: Vector) -> Vector:
        X, Y = inst.split(x)
        R = X @ Y - Z
        return inst.join(scale * R @ Y.T, scale * X.T @ R)

    def hvp(x: Vector, v: Vector) -> Vector:
        X, Y = inst.split(x)
        VX, VY = inst.split(v)
        R = X @ Y - Z
        dR = VX @ Y + X @ VY
        return inst.join(scale * (dR @ Y.T + R @ VY.T), scale * (VX.T @ R + X.T @ dR))

    return OracleHandle(
        dim=inst.dim,
        evaluate=value,
        gradient=gradient,
        hvp=hvp,
        in_domain=_positive,
        name=f"nmf_mse[{inst.m}x{inst.n},r={inst.r}]",
    )


def _kl_loss(inst: NmfInstance) -> OracleHandle:
    Z = inst.z_matrix
    scale = 1.0 / (inst.m * inst.n)
    # xlogy(0, .) = 0 gives the Z_ij = 0 terms their limit W_ij
    entropy = special.xlogy(Z, Z) - Z

    def value(x: Vector) -> float:
        X, Y = inst.split(x)
        W = X @ Y
        return scale * float(np.sum(entropy - special.xlogy(Z, W) + W))

    def gradient(x: Vector) -> Vector:
        X, Y = inst.split(x)
        G = scale * (1.0 - Z / (X @ Y))
        return inst.join(G @ Y.T, X.T @ G)

    def hvp(x: Vector, v: Vector) -> Vector:
        X, Y = inst.split(x)
        VX, VY = inst.split(v)
        W = X @ Y
        G = scale * (1.0 - Z / W)
        dG = scale * Z * (VX @ Y + X @ VY) / (W * W)
        return inst.join(dG @ Y.T + G @ VY.T, VX.T @ G + X.T @ dG)

    return OracleHandle(
        dim=inst.dim,
        evaluate=value,
        gradient=gradient,
        hvp=hvp,
        in_domain=_positive,
        name=f"nmf_kl[{inst.m}x{inst.n},r={inst.r}]",
    )


def _bilinear_sum(inst: NmfInstance) -> OracleHandle:
    """1/(mn) sum_ij (XY)_ij, the part of f2 the barrier does not cover."""
    scale = 1.0 / (inst.m * inst.n)
    ones_m = np.ones(inst.m)
    ones_n = np.ones(inst.n)

    def value(x: Vector) -> float:
        X, Y = inst.split(x)
        return scale * float(X.sum(axis=0) @ Y.sum(axis=1))

    def gradient(x: Vector) -> Vector:
        X, Y = inst.split(x)
        return inst.join(
            scale * np.outer(ones_m, Y.sum(axis=1)), scale * np.outer(X.sum(axis=0), ones_n)
        )

    def hvp(x: Vector, v: Vector) -> Vector:
        VX, VY = inst.split(v)
        return inst.join(
            scale * np.outer(ones_m, VY.sum(axis=1)), scale * np.outer(VX.sum(axis=0), ones_n)
        )

    return OracleHandle(
        dim=inst.dim, evaluate=value, gradient=gradient, hvp=hvp, name="nmf_bilinear"
    )


def log_barrier(weights: Vector, name: str = "log_barrier") -> OracleHandle:
    """-sum_i w_i log x_i on the positive orthant."""
    w = np.asarray(weights, dtype=float)
    return OracleHandle(
        dim=w.size,
        evaluate=lambda x: -float(w @ np.log(x)),
        gradient=lambda x: -w / x,
        hessian=lambda x: np.diag(w / (x * x)),
        hvp=lambda x, v: w * v / (x * x),
        in_domain=_positive,
        name=name,
    )


def _barrier_weights(inst: NmfInstance) -> Vector:
    if inst.loss == "frobenius":
        return np.full(inst.dim, inst.barrier_weight)
    # tau sum_ij G_ij = -tau n sum log X - tau m sum log Y
    k = inst.m * inst.r
    weights = np.empty(inst.dim)
    weights[:k] = inst.barrier_weight * inst.n
    weights[k:] = inst.barrier_weight * inst.m
    return weights


def nmf_reference(inst: NmfInstance) -> OracleHandle:
    barrier = log_barrier(_barrier_weights(inst), name="barrier")
    if inst.quartic_weight <= 0.0:
        return barrier
    quartic = polynomial_reference(2, inst.dim, inst.quartic_weight)
    return barrier.plus(quartic, name=f"{inst.loss}_reference")


def nmf_loss(inst: NmfInstance) -> OracleHandle:
    return _frobenius_loss(inst) if inst.loss == "frobenius" else _kl_loss(inst)


def nmf_oracles(inst: NmfInstance) -> ReferencePair:
    """The loss, its reference F, kappa = 1 and the positive-orthant sampler."""
    hint = inst.optimal_value_hint if inst.optimal_value_hint is not None else 0.0
    return ReferencePair(
        objective=nmf_loss(inst),
        reference=nmf_reference(inst),
        kappa=1.0,
        kappa_ref=inst.kappa_ref(),
        lower_bound_hint=hint,
        sampler=positive_log_uniform(inst.dim),
        name=f"nmf_{'mse' if inst.loss == 'frobenius' else 'kl'}",
    )


def nmf_barrier_objective(inst: NmfInstance, mu: float) -> OracleHandle:
    """f - mu sum log X - mu sum log Y."""
    if mu < 0.0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    return nmf_loss(inst).plus(
        log_barrier(np.full(inst.dim, mu), name=f"{mu:g}*barrier"),
        name=f"nmf_{inst.loss}+barrier",
    )


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def _check_sizes(m: int, n: int, r: int) -> None:
    if min(m, n, r) < 1:
        raise ValueError(f"sizes must be positive, got m={m}, n={n}, r={r}")
    if r > min(m, n):
        raise ValueError(f"rank r={r} exceeds min(m, n)={min(m, n)}")


def fit_mse_weight(inst: NmfInstance, seed: int, sample_budget: int = FIT_SAMPLE_BUDGET) -> float:
    """Weight l such that f1 is l F-based 1-self-concordant at sampled interior points."""
    shape = log_barrier(np.ones(inst.dim)).plus(polynomial_reference(2, inst.dim))
    fit = polynomial_reference_fit(
        _frobenius_loss(inst),
        p=2,
        sample_budget=sample_budget,
        seed=seed,
        shape=shape,
        shape_kappa=1.0,
        sampler=positive_log_uniform(inst.dim),
    )
    return fit.weight


def fit_kl_quartic_weight(
    inst: NmfInstance, seed: int, sample_budget: int = FIT_SAMPLE_BUDGET
) -> float:
    """Quartic weight c_q covering the bilinear remainder of f2."""
    fit = polynomial_reference_fit(
        _bilinear_sum(inst),
        p=2,
        sample_budget=sample_budget,
        seed=seed,
        sampler=positive_log_uniform(inst.dim),
    )
    return fit.weight


def make_nmf_mse(m: int, n: int, r: int, seed: int, fit_reference: bool = True) -> NmfInstance:
    """
    Z = U diag(s) V^T where M = X^ Y^ = U diag(s) V^T, with the zero tail of
    s replaced by draws from U[0, 0.1 sigma_r].
    """
    _check_sizes(m, n, r)
    rng = np.random.default_rng(seed)
    x_hat = rng.uniform(size=(m, r))
    y_hat = rng.uniform(size=(r, n))
    M = x_hat @ y_hat
    k = min(m, n)
    if r == k:
        Z = M.copy()
    else:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        s = s.copy()
        s[r:] = rng.uniform(0.0, TAIL_FRACTION * s[r - 1], size=k - r)
        Z = (U * s) @ Vt
    if np.any(Z < 0.0):
        logger.warning("nmf_mse seed %d: perturbed data has negative entries", seed)
    residual = Z - M
    hint = 0.5 * float(np.sum(residual * residual)) / (m * n)
    inst = NmfInstance(
        z_matrix=Z,
        m=m,
        n=n,
        r=r,
        loss="frobenius",
        barrier_weight=1.0,
        quartic_weight=1.0,
        optimal_value_hint=hint,
        seed=seed,
        x_hat=x_hat,
        y_hat=y_hat,
    )
    if not fit_reference:
        return inst
    weight = fit_mse_weight(inst, seed)
    return dataclasses.replace(
        inst,
        barrier_weight=weight,
        quartic_weight=weight,
        notes=("reference weight fitted by sampling",),
    )


def make_nmf_kl(
    m: int, n: int, r: int, seed: int, noise: float = 0.01, fit_reference: bool = True
) -> NmfInstance:
    """Z = X^ Y^ + noise Z^ with all factors drawn from U[0, 1]."""
    _check_sizes(m, n, r)
    if noise < 0.0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    x_hat = rng.uniform(size=(m, r))
    y_hat = rng.uniform(size=(r, n))
    z_hat = rng.uniform(size=(m, n))
    Z = x_hat @ y_hat + noise * z_hat
    inst = NmfInstance(
        z_matrix=Z,
        m=m,
        n=n,
        r=r,
        loss="kl",
        barrier_weight=KL_TAU,
        quartic_weight=0.0,
        optimal_value_hint=0.0 if noise == 0.0 else None,
        seed=seed,
        noise=noise,
        x_hat=x_hat,
        y_hat=y_hat,
    )
    if not fit_reference:
        return inst
    c_q = fit_kl_quartic_weight(inst, seed)
    return dataclasses.replace(
        inst, quartic_weight=c_q, notes=("quartic weight fitted by sampling",)
    )


def nmf_start(inst: NmfInstance, seed: int) -> Vector:
    """Interior starting point with entries drawn from U[0.1, 1]."""
    rng = np.random.default_rng(seed + 1)
    return rng.uniform(0.1, 1.0, size=inst.dim)
