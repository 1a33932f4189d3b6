"""Positive-definite kernels and their norm-range bookkeeping.

A :class:`Kernel` evaluates one of the three standard families (linear,
polynomial, Gaussian) on pairs of input vectors, either one pair at a
time or vectorized against a stack of atoms. :class:`NormRange` records
the extremes of the self-similarity kappa(x, x) over the input domain,
which the spectral bounds need as ``r_sq`` and ``R_sq``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("linear", "polynomial", "gaussian")


def _as_vector(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def _as_matrix(xs, name: str) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    if xs.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of row vectors")
    if not np.all(np.isfinite(xs)):
        raise ValueError(f"{name} contains non-finite entries")
    return xs


@dataclass(frozen=True)
class Kernel:
    """A positive-definite kernel of one of the supported families.

    Parameters
    ----------
    family : str
        One of ``"linear"``, ``"polynomial"``, ``"gaussian"``.
    degree : int
        Polynomial degree (polynomial family only), >= 1.
    offset : float
        Additive constant of the polynomial kernel, >= 0.
    sigma : float
        Bandwidth of the Gaussian kernel, > 0.
    """

    family: str
    degree: int = 2
    offset: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}, expected one of {FAMILIES}")
        if self.family == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial degree must be a positive integer")
            if self.offset < 0:
                raise ValueError("polynomial offset must be >= 0")
        if self.family == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian bandwidth sigma must be > 0")

    @classmethod
    def linear(cls) -> "Kernel":
        return cls("linear")

    @classmethod
    def polynomial(cls, degree: int, offset: float = 1.0) -> "Kernel":
        return cls("polynomial", degree=degree, offset=offset)

    @classmethod
    def gaussian(cls, sigma: float) -> "Kernel":
        return cls("gaussian", sigma=sigma)

    def __call__(self, x, y) -> float:
        """Evaluate kappa(x, y) for a single pair of vectors."""
        x = _as_vector(x, "x")
        y = _as_vector(y, "y")
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
        if self.family == "linear":
            return float(x @ y)
        if self.family == "polynomial":
            return float((x @ y + self.offset) ** self.degree)
        d_sq = float(np.sum((x - y) ** 2))
        return float(np.exp(-d_sq / (2.0 * self.sigma**2)))

    def against(self, atoms: np.ndarray, x) -> np.ndarray:
        """Evaluate kappa(atom_j, x) for every row of ``atoms`` at once.

        Equivalent to an entry-wise :meth:`__call__` loop but vectorized.
        """
        atoms = _as_matrix(atoms, "atoms")
        x = _as_vector(x, "x")
        if atoms.shape[1] != x.shape[0]:
            raise ValueError(f"dimension mismatch: atoms have {atoms.shape[1]}, x has {x.shape[0]}")
        if self.family == "linear":
            return atoms @ x
        if self.family == "polynomial":
            return (atoms @ x + self.offset) ** self.degree
        d_sq = np.sum((atoms - x) ** 2, axis=1)
        return np.exp(-d_sq / (2.0 * self.sigma**2))

    def gram(self, xs: np.ndarray) -> np.ndarray:
        """Pairwise kernel matrix of the rows of ``xs`` (exactly symmetric).

        Rows are computed with the same arithmetic as :meth:`against`, so a
        matrix grown one admission at a time reproduces bit-identically.
        """
        xs = _as_matrix(xs, "xs")
        m = xs.shape[0]
        out = np.empty((m, m))
        for i in range(m):
            out[i, :] = self.against(xs, xs[i])
        # mirror the lower triangle for bit-exact symmetry
        lower = np.tril(out)
        return lower + np.tril(out, -1).T

    def self_similarity(self, x) -> float:
        """kappa(x, x); cheaper than ``self(x, x)`` for the Gaussian family."""
        if self.family == "gaussian":
            _as_vector(x, "x")
            return 1.0
        return self(x, x)


@dataclass(frozen=True)
class NormRange:
    """Range of kappa(x, x) over the domain: r_sq = inf, R_sq = sup.

    ``source`` records how the range was obtained: ``"analytic"`` (exact,
    Gaussian family), ``"empirical"`` (extremes over observed samples only,
    a lower/upper *estimate* of the true range) or ``"user_supplied"``.
    """

    r_sq: float
    R_sq: float
    source: str = "user_supplied"

    def __post_init__(self):
        if not (0.0 <= self.r_sq <= self.R_sq):
            raise ValueError(f"need 0 <= r_sq <= R_sq, got ({self.r_sq}, {self.R_sq})")
        if self.source not in ("analytic", "empirical", "user_supplied"):
            raise ValueError(f"unknown norm-range source {self.source!r}")

    @property
    def is_unit(self) -> bool:
        return self.r_sq == 1.0 and self.R_sq == 1.0


def norm_range(kernel: Kernel, samples=None) -> NormRange:
    """Determine the kappa(x, x) range for ``kernel``.

    The Gaussian kernel has kappa(x, x) = 1 identically, so its range is
    analytic. For the other families the range is estimated empirically
    from ``samples`` (rows are sample vectors); callers with analytic
    knowledge can construct a ``user_supplied`` :class:`NormRange` directly.
    """
    if kernel.family == "gaussian":
        return NormRange(1.0, 1.0, source="analytic")
    if samples is None:
        raise ValueError(
            f"the {kernel.family} kernel has no analytic norm range; "
            "provide samples or a user-supplied NormRange"
        )
    samples = _as_matrix(samples, "samples")
    if samples.shape[0] == 0:
        raise ValueError("samples must be non-empty")
    diag = np.array([kernel.self_similarity(row) for row in samples])
    return NormRange(float(diag.min()), float(diag.max()), source="empirical")


def kernel_vector(kernel: Kernel, atoms: np.ndarray, x) -> np.ndarray:
    """Vector whose j-th entry is kappa(atom_j, x), in atom order."""
    atoms = _as_matrix(atoms, "atoms")
    if atoms.shape[0] == 0:
        raise ValueError("kernel_vector requires a non-empty atom set")
    return kernel.against(atoms, x)
