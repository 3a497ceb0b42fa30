"""Dense complex operator kernel.

Hermitian operators, unitary propagation via spectral decomposition and
basis-aligned projectors. Natural units (hbar = 1) throughout: the
propagator for a Hamiltonian ``H`` over time ``t`` is ``exp(-i H t)``.

Vectors are plain one-dimensional complex ``numpy`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np

from .errors import ContractViolation, NumericError

HERMITICITY_TOL = 1e-12


def as_vector(v, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=complex)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractViolation(f"expected a non-empty 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ContractViolation(f"dimension mismatch: vector has {arr.size}, operator has {dim}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("vector contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix, symmetrized on construction.

    Parameters
    ----------
    entries : array_like
        Square complex matrix. Must equal its conjugate transpose to within
        ``1e-12`` (scaled by the largest entry when that exceeds one).
    """

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ContractViolation(f"expected a non-empty square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericError("operator contains non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m))))
        defect = float(np.max(np.abs(m - m.conj().T)))
        if defect > HERMITICITY_TOL * scale:
            raise ContractViolation(f"operator is not Hermitian (defect {defect:.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and orthonormal eigenvectors (columns)."""
        w, v = np.linalg.eigh(self.entries)
        return w, v

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        if other.dim != self.dim:
            raise ContractViolation("dimension mismatch in operator sum")
        return HermitianOperator(self.entries + other.entries)

    def scaled(self, factor: float) -> "HermitianOperator":
        return HermitianOperator(float(factor) * self.entries)

    def expectation(self, v) -> complex:
        v = as_vector(v, self.dim)
        return complex(np.vdot(v, self.entries @ v))

    def __matmul__(self, v):
        return self.entries @ as_vector(v, self.dim)

    @classmethod
    def zeros(cls, dim: int) -> "HermitianOperator":
        return cls(np.zeros((dim, dim), dtype=complex))


def _check_time(t: float) -> float:
    t = float(t)
    if not np.isfinite(t):
        raise NumericError(f"time must be finite, got {t}")
    return t


def expm_apply(H: HermitianOperator, t: float, v) -> np.ndarray:
    """Return ``exp(-i H t) v`` using the spectral decomposition of ``H``."""
    v = as_vector(v, H.dim)
    t = _check_time(t)
    if t == 0.0:
        return v.copy()
    w, vecs = H.eigh
    return vecs @ (np.exp(-1j * w * t) * (vecs.conj().T @ v))


@dataclass(frozen=True, eq=False)
class UnitaryMap:
    """A norm-preserving linear map on ``dim``-dimensional vectors.

    ``apply`` may be any callable; ``matrix`` is populated when the map was
    materialized densely, which lets maps compose by matrix product.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    dim: int
    label: str = ""
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, v) -> np.ndarray:
        return self.apply(as_vector(v, self.dim))

    def __matmul__(self, other: "UnitaryMap") -> "UnitaryMap":
        if not isinstance(other, UnitaryMap):
            return NotImplemented
        if other.dim != self.dim:
            raise ContractViolation("dimension mismatch in composition")
        label = f"{self.label}*{other.label}"
        if self.matrix is not None and other.matrix is not None:
            return from_matrix(self.matrix @ other.matrix, label)
        return UnitaryMap(lambda v: self.apply(other.apply(v)), self.dim, label)

    def to_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.column_stack([self.apply(e) for e in np.eye(self.dim, dtype=complex)])


def from_matrix(u: np.ndarray, label: str = "") -> UnitaryMap:
    u = np.array(u, dtype=complex)
    u.setflags(write=False)
    return UnitaryMap(lambda v: u @ v, u.shape[0], label, u)


def unitary_matrix(H: HermitianOperator, t: float, label: str = "") -> UnitaryMap:
    """Materialize ``exp(-i H t)`` as a dense unitary map."""
    t = _check_time(t)
    w, vecs = H.eigh
    u = (vecs * np.exp(-1j * w * t)) @ vecs.conj().T
    return from_matrix(u, label or f"U(t={t:g})")


def unitarity_defect(u: UnitaryMap | np.ndarray) -> float:
    m = u.to_matrix() if isinstance(u, UnitaryMap) else np.asarray(u)
    return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0]), "fro"))


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector onto a set of basis vectors."""

    index_set: tuple[int, ...]
    dim: int

    def __call__(self, v) -> np.ndarray:
        v = as_vector(v, self.dim)
        out = np.zeros_like(v)
        idx = self.indices
        out[idx] = v[idx]
        return out

    @cached_property
    def indices(self) -> np.ndarray:
        return np.array(self.index_set, dtype=np.intp)

    @cached_property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.dim, dtype=bool)
        m[self.indices] = True
        return m

    def complement(self) -> "Projector":
        return projector_from_indices(np.flatnonzero(~self.mask), self.dim)

    def to_matrix(self) -> np.ndarray:
        return np.diag(self.mask.astype(complex))

    def __len__(self) -> int:
        return len(self.index_set)


def projector_from_indices(indices: Iterable[int], dim: int) -> Projector:
    dim = int(dim)
    if dim < 1:
        raise ContractViolation(f"dimension must be positive, got {dim}")
    idx = sorted({int(i) for i in indices})
    if idx and (idx[0] < 0 or idx[-1] >= dim):
        raise ContractViolation(f"projector index out of range for dimension {dim}")
    return Projector(tuple(idx), dim)
