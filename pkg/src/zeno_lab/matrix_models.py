"""Finite-dimensional Zeno laboratory.

Toy unstable systems ``H = H_o + H_i`` with an optional measurement term
``g H_m``, repeated projective measurement of the initial state, and a
checker for the core-projected intertwining identity between two step maps.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .analysis import SurvivalSeries
from .errors import ConfigurationWarning, ContractViolation
from .linops import (
    HermitianOperator,
    Projector,
    UnitaryMap,
    as_vector,
    expm_apply,
    projector_from_indices,
)

ZERO_EIGEN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ToyModel:
    """Toy unstable system.

    ``H_o`` is diagonal with the excited basis vector as an eigenvector, and
    ``H_m`` annihilates the excited basis vector.
    """

    H_o: HermitianOperator
    H_i: HermitianOperator
    H_m: HermitianOperator
    excited_index: int
    name: str = "toy"

    def __post_init__(self):
        dims = {self.H_o.dim, self.H_i.dim, self.H_m.dim}
        if len(dims) != 1:
            raise ContractViolation(f"operator dimensions differ: {sorted(dims)}")
        if not 0 <= self.excited_index < self.dim:
            raise ContractViolation("excited_index out of range")
        ho = self.H_o.entries
        if np.any(np.abs(ho - np.diag(np.diag(ho))) > ZERO_EIGEN_TOL):
            raise ContractViolation("H_o must be diagonal in the working basis")
        if np.max(np.abs(self.H_m.entries[:, self.excited_index])) > ZERO_EIGEN_TOL:
            raise ContractViolation("H_m must annihilate the excited state")

    @property
    def dim(self) -> int:
        return self.H_o.dim

    @property
    def E_o(self) -> float:
        return float(self.H_o.entries[self.excited_index, self.excited_index].real)

    @property
    def excited(self) -> np.ndarray:
        e = np.zeros(self.dim, dtype=complex)
        e[self.excited_index] = 1.0
        return e

    def hamiltonian(self, g: float = 0.0) -> HermitianOperator:
        """``H_o + H_i + g H_m``."""
        return HermitianOperator(self.H_o.entries + self.H_i.entries + float(g) * self.H_m.entries)

    @property
    def alpha(self) -> float:
        """Short-time curvature ``<e|H_i^2|e> - <e|H_i|e>^2``."""
        e = self.excited
        hi_e = self.H_i @ e
        mean = np.vdot(e, hi_e).real
        return float(np.vdot(hi_e, hi_e).real - mean**2)


@dataclass(frozen=True)
class ZenoRunSpec:
    """Repeated-measurement schedule: ``n`` intervals of length ``interval``."""

    total_time: float
    interval: float
    n: int
    g: float = 0.0

    def __post_init__(self):
        if self.interval <= 0 or self.total_time <= 0 or self.n < 1:
            raise ContractViolation("interval, total_time and n must be positive")
        if abs(self.n * self.interval - self.total_time) > 1e-12 * max(1.0, self.total_time):
            raise ContractViolation(
                f"inconsistent schedule: {self.n} * {self.interval} != {self.total_time}"
            )

    @classmethod
    def from_interval(cls, interval: float, n: int, g: float = 0.0) -> "ZenoRunSpec":
        return cls(n * interval, interval, n, g)

    @classmethod
    def from_total(cls, total_time: float, n: int, g: float = 0.0) -> "ZenoRunSpec":
        return cls(total_time, total_time / n, n, g)


def build_two_level(omega: float) -> ToyModel:
    """Two-level system with Rabi coupling ``omega`` and ``H_m = |1><1|``."""
    if not omega > 0:
        raise ContractViolation(f"Rabi coupling must be positive, got {omega}")
    hi = np.array([[0.0, omega], [omega, 0.0]], dtype=complex)
    hm = np.diag([0.0, 1.0]).astype(complex)
    return ToyModel(
        HermitianOperator.zeros(2), HermitianOperator(hi), HermitianOperator(hm), 0,
        name=f"two-level(omega={omega:g})",
    )


def friedrichs_rate(coupling: float) -> float:
    """Golden-rule decay rate ``2 pi lambda^2`` for unit density of states."""
    return 2.0 * math.pi * coupling**2


def build_friedrichs(n_modes: int = 400, coupling: float = 0.1, bandwidth: float = 4.0) -> ToyModel:
    """Excited level at zero energy coupled to a uniform band of modes.

    Modes sit at the centres of ``n_modes`` equal bins spanning
    ``[-bandwidth/2, bandwidth/2]``, each coupled with strength
    ``coupling * sqrt(bandwidth / n_modes)``. Basis index 0 is the excited
    level; ``H_m`` is the projector onto the band.
    """
    if n_modes < 32:
        raise ContractViolation(f"need at least 32 modes, got {n_modes}")
    if coupling < 0 or not bandwidth > 0:
        raise ContractViolation("coupling must be non-negative and bandwidth positive")
    spacing = bandwidth / n_modes
    rate = friedrichs_rate(coupling)
    if rate > 0 and 3.0 / rate >= 2.0 * math.pi / spacing:
        warnings.warn(
            f"{n_modes} modes recur at t={2 * math.pi / spacing:.3g}, before the decay "
            f"window ends at 3/Gamma={3 / rate:.3g}",
            ConfigurationWarning,
            stacklevel=2,
        )
    energies = -bandwidth / 2 + spacing * (np.arange(n_modes) + 0.5)
    dim = n_modes + 1
    ho = np.zeros((dim, dim), dtype=complex)
    ho[1:, 1:] = np.diag(energies)
    hi = np.zeros((dim, dim), dtype=complex)
    hi[0, 1:] = hi[1:, 0] = coupling * math.sqrt(spacing)
    hm = np.diag(np.r_[0.0, np.ones(n_modes)]).astype(complex)
    return ToyModel(
        HermitianOperator(ho), HermitianOperator(hi), HermitianOperator(hm), 0,
        name=f"friedrichs(n={n_modes},lambda={coupling:g},band={bandwidth:g})",
    )


def build_decoupled_blocks(dim_core: int, dim_wave: int, rng: np.random.Generator):
    """Random Hamiltonian ``H_C (+) H_W`` with a measurement term on the W block.

    Returns ``(H, H_m, P_C)``. The core block contains basis index 0.
    """
    def herm(n):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return 0.5 * (a + a.conj().T)

    dim = dim_core + dim_wave
    h = np.zeros((dim, dim), dtype=complex)
    h[:dim_core, :dim_core] = herm(dim_core)
    h[dim_core:, dim_core:] = herm(dim_wave)
    hm = np.zeros_like(h)
    hm[dim_core:, dim_core:] = herm(dim_wave)
    return HermitianOperator(h), HermitianOperator(hm), projector_from_indices(range(dim_core), dim)


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ContractViolation("time grid must be a non-empty 1-D sequence")
    if t[0] < 0 or (t.size > 1 and np.any(np.diff(t) <= 0)):
        raise ContractViolation("time grid must be nonnegative and strictly ascending")
    return t


def survival_series(m: ToyModel, g: float, t_grid: Sequence[float]) -> SurvivalSeries:
    """``|<e| exp(-i (H + g H_m) t) |e>|^2`` on ``t_grid``."""
    t = _check_grid(t_grid)
    w, vecs = m.hamiltonian(g).eigh
    weights = np.abs(vecs[m.excited_index, :]) ** 2
    amps = np.exp(-1j * np.outer(t, w)) @ weights
    s = np.abs(amps) ** 2
    s[t == 0.0] = 1.0
    return SurvivalSeries(t, np.clip(s, 0.0, 1.0), {"model": m.name, "g": float(g)})


def projective_zeno(m: ToyModel, spec: ZenoRunSpec) -> SurvivalSeries:
    """Survival under ``spec.n`` ideal projective measurements of ``|e>``.

    Between measurements the state evolves for ``spec.interval`` under
    ``H + g H_m``; each measurement multiplies the accumulated survival by
    ``|<e|psi>|^2`` and resets the state to ``|e>``.
    """
    H = m.hamiltonian(spec.g)
    e = m.excited
    p = abs(np.vdot(e, expm_apply(H, spec.interval, e))) ** 2
    p = min(p, 1.0)
    values = np.empty(spec.n + 1)
    values[0] = 1.0
    for k in range(1, spec.n + 1):
        values[k] = values[k - 1] * p
    times = spec.interval * np.arange(spec.n + 1)
    times[-1] = spec.total_time
    return SurvivalSeries(
        times, values,
        {"model": m.name, "g": float(spec.g), "interval": spec.interval, "n": spec.n},
    )


@dataclass(frozen=True)
class IntertwiningReport:
    max_deviation: float
    worst_step: int
    n_steps: int
    n_probes: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def to_dict(self):
        return {
            "max_deviation": self.max_deviation,
            "worst_step": self.worst_step,
            "n_steps": self.n_steps,
            "n_probes": self.n_probes,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_intertwining(
    U_g_step: UnitaryMap,
    U_0_step: UnitaryMap,
    P_C: Projector,
    n_steps: int,
    probes: Iterable,
    tol: float,
) -> IntertwiningReport:
    """Largest ``||P_C U_g^k v - P_C U_0^k v||`` over probes and ``k <= n_steps``."""
    if not (U_g_step.dim == U_0_step.dim == P_C.dim):
        raise ContractViolation("step maps and projector must share one dimension")
    if n_steps < 1:
        raise ContractViolation("n_steps must be positive")
    probes = [as_vector(v, P_C.dim) for v in probes]
    if not probes:
        raise ContractViolation("at least one probe is required")
    worst, worst_k = 0.0, 0
    mask = P_C.mask
    for v in probes:
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ContractViolation("probes must be normalized")
        a, b = v, v
        for k in range(1, n_steps + 1):
            a, b = U_g_step(a), U_0_step(b)
            dev = float(np.linalg.norm(a[mask] - b[mask]))
            if dev > worst:
                worst, worst_k = dev, k
    return IntertwiningReport(worst, worst_k, n_steps, len(probes), float(tol))
