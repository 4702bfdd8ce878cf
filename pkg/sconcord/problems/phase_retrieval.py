"""
Generalized phase retrieval in real coordinates x = (z^R, z^I) in R^{2n}:

  f(x) = 1/(2m) sum_k (|a_k^* z|^2 - y_k^2)^2,  a_k = (a_k^R + i a_k^I) / sqrt(2),

which is (4, ell)-weakly self-concordant, i.e. F = ell/2 ||x||^2 based with kappa = 4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from sconcord.core.oracle import OracleHandle, ReferencePair, Vector, quadratic_oracle
from sconcord.problems.sampling import scaled_gaussian

logger = logging.getLogger(__name__)

PHASE_KAPPA = 4.0
# multiplier on the aggregated per-term bound
ELL_SAFETY = 2.0


@dataclass(frozen=True)
class PhaseRetrievalInstance:
    sensing_real: np.ndarray
    sensing_imag: np.ndarray
    targets: np.ndarray
    ell: float
    seed: int
    noise: float = 0.0
    signal: np.ndarray | None = None
    kappa: float = PHASE_KAPPA

    @property
    def m(self) -> int:
        return int(self.sensing_real.shape[0])

    @property
    def n(self) -> int:
        return int(self.sensing_real.shape[1])

    @property
    def dim(self) -> int:
        return 2 * self.n

    def operators(self) -> tuple[np.ndarray, np.ndarray]:
        """C1, C2 with u = C1 x = Re(sqrt(2) a^* z) and v = C2 x = Im(sqrt(2) a^* z)."""
        a_re, a_im = self.sensing_real, self.sensing_imag
        return np.hstack([a_re, a_im]), np.hstack([-a_im, a_re])


def weak_sc_modulus(
    sensing_real: np.ndarray, sensing_imag: np.ndarray, targets: np.ndarray
) -> float:
    """2 [(1/m) sum y_k^2 C_k + (3/8) sqrt(sum C_k^2 / m)], C_k = 2(|a_k^R|^2 + |a_k^I|^2)."""
    m = sensing_real.shape[0]
    c = 2.0 * (np.sum(sensing_real**2, axis=1) + np.sum(sensing_imag**2, axis=1))
    concave = float(targets @ c) / m
    third_order = 0.375 * math.sqrt(float(c @ c) / m)
    return ELL_SAFETY * (concave + third_order)


def make_phase_retrieval(n: int, m: int, seed: int, noise: float = 0.0) -> PhaseRetrievalInstance:
    """Standard normal sensing vectors and a planted standard normal signal."""
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be positive, got n={n}, m={m}")
    if noise < 0.0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    a_re = rng.standard_normal((m, n))
    a_im = rng.standard_normal((m, n))
    signal = rng.standard_normal(2 * n)
    z_re, z_im = signal[:n], signal[n:]
    u = a_re @ z_re + a_im @ z_im
    v = a_re @ z_im - a_im @ z_re
    targets = 0.5 * (u * u + v * v)
    if noise > 0.0:
        targets = np.maximum(targets + noise * rng.standard_normal(m), 0.0)
    return PhaseRetrievalInstance(
        sensing_real=a_re,
        sensing_imag=a_im,
        targets=targets,
        ell=weak_sc_modulus(a_re, a_im, targets),
        seed=seed,
        noise=noise,
        signal=signal,
    )


def phase_objective(inst: PhaseRetrievalInstance) -> OracleHandle:
    C1, C2 = inst.operators()
    y2 = inst.targets
    m = inst.m

    def residuals(x: Vector) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = C1 @ x
        v = C2 @ x
        return u, v, 0.5 * (u * u + v * v) - y2

    def value(x: Vector) -> float:
        _, _, s = residuals(x)
        return 0.5 * float(s @ s) / m

    def gradient(x: Vector) -> Vector:
        u, v, s = residuals(x)
        return (C1.T @ (s * u) + C2.T @ (s * v)) / m

    def hessian(x: Vector) -> np.ndarray:
        u, v, s = residuals(x)
        J = u[:, None] * C1 + v[:, None] * C2
        return (J.T @ J + C1.T @ (s[:, None] * C1) + C2.T @ (s[:, None] * C2)) / m

    def hvp(x: Vector, h: Vector) -> Vector:
        u, v, s = residuals(x)
        c1h = C1 @ h
        c2h = C2 @ h
        jh = u * c1h + v * c2h
        return (C1.T @ (u * jh + s * c1h) + C2.T @ (v * jh + s * c2h)) / m

    return OracleHandle(
        dim=inst.dim,
        evaluate=value,
        gradient=gradient,
        hessian=hessian,
        hvp=hvp,
        name=f"phase_retrieval[n={inst.n},m={m}]",
    )


def phase_oracles(inst: PhaseRetrievalInstance) -> ReferencePair:
    """f with F = ell/2 ||x||^2 and kappa = 4."""
    reference = quadratic_oracle(inst.ell * np.eye(inst.dim), name=f"{inst.ell:.3g}/2*|x|^2")
    return ReferencePair(
        objective=phase_objective(inst),
        reference=reference,
        kappa=inst.kappa,
        kappa_ref=0.0,
        lower_bound_hint=0.0,
        sampler=scaled_gaussian(inst.dim),
        name="phase_retrieval",
    )


def phase_start(inst: PhaseRetrievalInstance, seed: int) -> Vector:
    rng = np.random.default_rng(seed + 1)
    return rng.standard_normal(inst.dim)
