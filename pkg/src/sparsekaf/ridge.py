"""Batch kernel ridge regression on the full sample Gram matrix.

Serves as the offline reference solver. Two regularization variants are
supported: penalizing the function norm alpha^T K alpha (``rkhs_norm``)
or the plain coefficient norm ||alpha||^2 (``param_norm``). Both are
solved through their normal equations with a Cholesky factorization; the
popular shortcut (K + eps I)^{-1} y is deliberately not used because it is
only equivalent when K is nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .kernels import Kernel, _as_matrix

VARIANTS = ("rkhs_norm", "param_norm")


@dataclass
class RidgeProblem:
    """Training data, kernel and tradeoff for one ridge regression."""

    samples: np.ndarray
    targets: np.ndarray
    kernel: Kernel
    eps: float
    variant: str = "rkhs_norm"
    _gram: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.samples = _as_matrix(self.samples, "samples")
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.samples.shape[0] < 1:
            raise ValueError("need at least one sample")
        if self.samples.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.samples.shape[0]} samples but {self.targets.shape[0]} targets"
            )
        if not self.eps > 0:
            raise ValueError("tradeoff eps must be > 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")

    @property
    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = self.kernel.gram(self.samples)
        return self._gram

    def normal_system(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) of the normal equations A @ alpha = b for this variant."""
        K = self.gram
        KK = K @ K
        if self.variant == "rkhs_norm":
            A = KK + self.eps * K
        else:
            A = KK + self.eps * np.eye(K.shape[0])
        return 0.5 * (A + A.T), K @ self.targets


def solve(prob: RidgeProblem) -> np.ndarray:
    """Coefficient vector solving the variant's normal equations.

    Uses a Cholesky factorization plus one step of iterative refinement.
    The ``rkhs_norm`` system is singular whenever the Gram matrix is
    (linearly dependent samples); that surfaces as a NumericalError
    suggesting the ``param_norm`` variant, whose system is always
    positive definite.
    """
    A, b = prob.normal_system()
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        hint = " (singular Gram matrix; the param_norm variant stays solvable)" \
            if prob.variant == "rkhs_norm" else ""
        raise NumericalError(f"normal equations not positive definite{hint}: {exc}") from None
    alpha = scipy.linalg.cho_solve(factor, b, check_finite=False)
    alpha += scipy.linalg.cho_solve(factor, b - A @ alpha, check_finite=False)
    return alpha


def objective(prob: RidgeProblem, alpha) -> float:
    """Regularized empirical risk 0.5 ||K alpha - y||^2 + 0.5 eps * penalty."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.shape != prob.targets.shape:
        raise ValueError(f"alpha length {alpha.shape[0]} does not match n={prob.targets.shape[0]}")
    K = prob.gram
    fit = 0.5 * float(np.sum((K @ alpha - prob.targets) ** 2))
    if prob.variant == "rkhs_norm":
        penalty = float(alpha @ (K @ alpha))
    else:
        penalty = float(alpha @ alpha)
    return fit + 0.5 * prob.eps * penalty


def gradient(prob: RidgeProblem, alpha) -> np.ndarray:
    """Analytic gradient of :func:`objective` with respect to alpha."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    K = prob.gram
    residual = K @ (K @ alpha - prob.targets)
    if prob.variant == "rkhs_norm":
        return residual + prob.eps * (K @ alpha)
    return residual + prob.eps * alpha


def normal_residual(prob: RidgeProblem, alpha) -> float:
    """Relative residual ||A alpha - b|| / ||b|| of the normal equations."""
    A, b = prob.normal_system()
    denom = float(np.linalg.norm(b))
    if denom == 0.0:
        return float(np.linalg.norm(A @ alpha))
    return float(np.linalg.norm(A @ alpha - b)) / denom
