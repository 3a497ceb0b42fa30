"""Two-level atom coupled to a one-dimensional chiral spinor field.

The atom occupies ``[-d/2, d/2]`` and decays into a pair made of one
right-mover at ``x_R`` and one left-mover at ``x_L``. In the sector spanned
by the excited atom ``|e>``, pair states ``|x_R, x_L>`` and (with a
detector) detector-plus-left-mover states ``|k; x_L>``, the amplitudes obey

    i dC/dt          = omega C + int g*(x_R, x_L) F
    (d_t + c d_xR - c d_xL) F = -i g C - i int dk lambda(x_R, k) D_k
    i dD_k/dt        = Omega(k) D_k + int dx_R lambda(x_R, k) F

The grid has spacing ``h`` in both coordinates and the time step is locked
to ``h / c``, so transport is an exact shift of one cell along the
characteristic ``(x_R, x_L) -> (x_R + h, x_L - h)``. The coupling terms are
advanced by exact exponentials of their Hermitian blocks in a symmetric
(Strang) split around the shift.

Amplitudes are stored as densities: the total norm is
``|C|^2 + h^2 sum|F|^2 + h dk sum|D|^2``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .analysis import SurvivalSeries, compare_survival
from .errors import ConfigurationError, ConfigurationWarning, ContractViolation, HorizonError
from .linops import Projector, UnitaryMap, projector_from_indices

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12
NOGO_TOL = 1e-9
SEMIDIRECT_MIN_DEVIATION = 1e-3
_GRID_EPS = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    """Atom-field coupling ``g(x_R, x_L)`` on the open square ``(-d/2, d/2)^2``.

    ``kind="constant"`` gives ``g0`` everywhere on the square;
    ``kind="gaussian"`` gives ``g0 exp(-(x_R^2 + x_L^2) / (2 sigma^2))``
    truncated to the square.
    """

    kind: str = "constant"
    g0: float = 1.0
    sigma: float = 0.25

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian"):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ConfigurationError("gaussian kernel needs sigma > 0")

    def sample(self, xr: np.ndarray, xl: np.ndarray) -> np.ndarray:
        XR, XL = np.meshgrid(xr, xl, indexing="ij")
        if self.kind == "constant":
            return np.full(XR.shape, self.g0, dtype=complex)
        return (self.g0 * np.exp(-(XR**2 + XL**2) / (2 * self.sigma**2))).astype(complex)


@dataclass(frozen=True)
class FieldModelConfig:
    d: float = 1.0
    omega: float = 5.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    h: float = 1.0 / 16
    T: float = 8.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.d > 0 and self.h > 0 and self.c > 0 and self.T >= 0):
            raise ConfigurationError("d, h and c must be positive and T nonnegative")
        ratio = self.d / self.h
        n = round(ratio)
        if abs(ratio - n) > _GRID_EPS * max(1.0, ratio) or n < 4 or n % 2:
            raise ConfigurationError(f"d/h must be an even integer >= 4, got {ratio:g}")

    @property
    def n_core(self) -> int:
        return round(self.d / self.h)

    @property
    def dt(self) -> float:
        return self.h / self.c

    @property
    def horizon_steps(self) -> int:
        return math.ceil(self.T / self.dt - _GRID_EPS)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector modes ``b(k)`` coupled to right-movers on ``[x_minus, x_plus]``.

    The coupling is ``scale * lambda0 * w(x) * u(k)`` with ``w`` a
    ``sin^2`` bump on the interval and ``u = 1`` on ``[-k_max, k_max]``.
    The dispersion ``Omega(k)`` is ``velocity * k`` (``"linear"``),
    ``velocity * k^2 / 2`` (``"quadratic"``) or ``velocity`` (``"flat"``).
    ``k_max=None`` selects ``pi / (2 h)``.
    """

    x_minus: float = 1.0
    x_plus: float = 2.0
    lambda0: float = 0.2
    scale: float = 1.0
    n_k: int = 64
    k_max: float | None = None
    dispersion: str = "linear"
    velocity: float = 1.0
    semidirect: bool = False

    def __post_init__(self):
        if not self.x_plus > self.x_minus:
            raise ConfigurationError("detector interval must satisfy x_plus > x_minus")
        if self.n_k < 1:
            raise ConfigurationError("detector needs at least one k mode")
        if self.k_max is not None and not self.k_max > 0:
            raise ConfigurationError("k_max must be positive")
        if self.dispersion not in ("linear", "quadratic", "flat"):
            raise ConfigurationError(f"unknown dispersion {self.dispersion!r}")

    def with_scale(self, scale: float) -> "DetectorConfig":
        return replace(self, scale=float(scale))

    def omega_of_k(self, k: np.ndarray) -> np.ndarray:
        if self.dispersion == "linear":
            return self.velocity * k
        if self.dispersion == "quadratic":
            return 0.5 * self.velocity * k**2
        return np.full_like(k, self.velocity)


@dataclass(eq=False)
class FieldState:
    """Amplitudes of the closed sector at one instant.

    ``F`` is indexed ``[x_R cell, x_L cell]`` and ``D`` is indexed
    ``[k mode, x_L cell]``.
    """

    C: complex
    F: np.ndarray
    D: np.ndarray
    time: float = 0.0
    escaped_norm: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(self.C, self.F.copy(), self.D.copy(), self.time, self.escaped_norm)

    @property
    def survival(self) -> float:
        return abs(self.C) ** 2


@dataclass(frozen=True, eq=False)
class SubspacePartition:
    """Flat-index sets of the packed state realizing ``P_C`` and ``P_W``.

    The packed layout is ``[C, h F.ravel(), sqrt(h dk) D.ravel()]``.
    """

    core: Projector
    wave: Projector

    @property
    def dim(self) -> int:
        return self.core.dim


@dataclass
class RunResult:
    series: SurvivalSeries
    final: FieldState
    norm_drift: float
    detector_population: np.ndarray


class FieldModel:
    """Discretized atom-field model with an optional detector.

    Parameters
    ----------
    cfg : FieldModelConfig
    det : DetectorConfig, optional
        Without a detector the ``D`` grid has zero rows.
    """

    def __init__(self, cfg: FieldModelConfig, det: DetectorConfig | None = None):
        self.cfg = cfg
        self.det = det
        h, d = cfg.h, cfg.d
        n = cfg.n_core
        self.n_core = n
        self.dt = cfg.dt
        extra = cfg.horizon_steps + 2
        # detector modes are delocalized over the interval, so a right-mover
        # absorbed at x_minus can re-emerge at x_plus within one step
        self.det_jump = 0 if det is None else math.ceil((det.x_plus - det.x_minus) / h - _GRID_EPS)
        self.n_r = n + extra + self.det_jump
        self.n_l = n + extra
        # cell centres; x_R grid starts at -d/2, x_L grid ends at d/2
        self.x_r = -d / 2 + h * (np.arange(self.n_r) + 0.5)
        self.x_l = d / 2 - h * (self.n_l - np.arange(self.n_l) - 0.5)
        self.core_r = slice(0, n)
        self.core_l = slice(self.n_l - n, self.n_l)

        g = cfg.kernel.sample(self.x_r[self.core_r], self.x_l[self.core_l])
        self.kernel = g
        v = h * g
        self.kappa = float(np.linalg.norm(v))
        self._u = v / self.kappa if self.kappa > 0 else None
        self._atom_half = _expm_hermitian(
            np.array([[cfg.omega, self.kappa], [self.kappa, 0.0]]), self.dt / 2
        )

        self.n_k = 0
        self.dk = 0.0
        self.det_rows = np.zeros(0, dtype=np.intp)
        self._det_half = None
        self._det_phase_half = None
        if det is not None:
            self._setup_detector(det)

        self._partition = None

    def _setup_detector(self, det: DetectorConfig) -> None:
        cfg, h = self.cfg, self.cfg.h
        origin = -cfg.d / 2
        lo = origin + h * math.ceil((det.x_minus - origin) / h - _GRID_EPS)
        hi = origin + h * math.floor((det.x_plus - origin) / h + _GRID_EPS)
        if abs(lo - det.x_minus) > _GRID_EPS or abs(hi - det.x_plus) > _GRID_EPS:
            warnings.warn(
                f"detector interval [{det.x_minus}, {det.x_plus}] snapped to grid as [{lo}, {hi}]",
                ConfigurationWarning,
                stacklevel=3,
            )
        if not det.semidirect and not det.x_minus > cfg.d / 2:
            raise ConfigurationError(
                f"detector must sit in the wave zone (x_minus > d/2 = {cfg.d / 2}); "
                "set semidirect=True for an overlapping control run"
            )
        rows = np.flatnonzero((self.x_r > lo) & (self.x_r < hi))
        if rows.size == 0:
            raise ConfigurationError("detector interval contains no grid cells")
        if self.x_r[rows[-1]] > self.x_r[self.n_r - 3]:
            raise ConfigurationError("detector interval extends past the grid horizon")
        self.det_rows = rows
        self.det_lo, self.det_hi = lo, hi

        k_max = det.k_max if det.k_max is not None else math.pi / (2 * h)
        self.n_k = det.n_k
        self.dk = 2 * k_max / det.n_k
        self.k = -k_max + self.dk * (np.arange(det.n_k) + 0.5)
        self.mode_energy = det.omega_of_k(self.k).astype(float)

        w = np.sin(math.pi * (self.x_r[rows] - lo) / (hi - lo)) ** 2
        lam = det.scale * det.lambda0 * np.outer(np.ones(det.n_k), w)  # [k, x_R]
        self.detector_coupling = lam
        if det.scale * det.lambda0 == 0.0:
            # uncoupled detector: only the free mode phase remains
            self._det_phase_half = np.exp(-0.5j * self.dt * self.mode_energy)[:, None]
            return
        m = math.sqrt(h * self.dk) * lam
        nr = rows.size
        block = np.zeros((nr + det.n_k, nr + det.n_k))
        block[nr:, :nr] = m
        block[:nr, nr:] = m.T
        block[nr:, nr:] = np.diag(self.mode_energy)
        self._det_half = _expm_hermitian(block, self.dt / 2)

    # -- layout ------------------------------------------------------------

    @property
    def dim(self) -> int:
        return 1 + self.n_r * self.n_l + self.n_k * self.n_l

    @property
    def d_weight(self) -> float:
        return math.sqrt(self.cfg.h * self.dk) if self.n_k else 0.0

    def pack(self, state: FieldState) -> np.ndarray:
        h = self.cfg.h
        return np.concatenate(
            ([state.C], h * state.F.ravel(), self.d_weight * state.D.ravel())
        ).astype(complex)

    def unpack(self, v: np.ndarray, time: float = 0.0) -> FieldState:
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.dim,):
            raise ContractViolation(f"packed state must have length {self.dim}")
        nf = self.n_r * self.n_l
        F = v[1 : 1 + nf].reshape(self.n_r, self.n_l) / self.cfg.h
        D = v[1 + nf :].reshape(self.n_k, self.n_l)
        if self.n_k:
            D = D / self.d_weight
        return FieldState(complex(v[0]), F.copy(), D.copy(), time)

    def zero_state(self) -> FieldState:
        return FieldState(
            0j,
            np.zeros((self.n_r, self.n_l), dtype=complex),
            np.zeros((self.n_k, self.n_l), dtype=complex),
        )

    def norm(self, state: FieldState) -> float:
        h = self.cfg.h
        return float(
            abs(state.C) ** 2
            + h * h * np.sum(np.abs(state.F) ** 2)
            + h * self.dk * np.sum(np.abs(state.D) ** 2)
        )

    def detector_population(self, state: FieldState) -> float:
        return float(self.cfg.h * self.dk * np.sum(np.abs(state.D) ** 2))

    def core_mask(self) -> np.ndarray:
        """Boolean mask over ``F`` cells with both coordinates in the atom region."""
        m = np.zeros((self.n_r, self.n_l), dtype=bool)
        m[self.core_r, self.core_l] = True
        return m

    def region_masks(self) -> dict[str, np.ndarray]:
        """Masks over ``F`` for the core and the ``R``, ``L``, ``RL`` wave regions."""
        in_r = np.zeros(self.n_r, dtype=bool)
        in_r[self.core_r] = True
        in_l = np.zeros(self.n_l, dtype=bool)
        in_l[self.core_l] = True
        return {
            "core": np.outer(in_r, in_l),
            "R": np.outer(~in_r, in_l),
            "L": np.outer(in_r, ~in_l),
            "RL": np.outer(~in_r, ~in_l),
        }

    @property
    def partition(self) -> SubspacePartition:
        if self._partition is None:
            core_cells = np.flatnonzero(self.core_mask().ravel()) + 1
            core = projector_from_indices(np.r_[0, core_cells], self.dim)
            self._partition = SubspacePartition(core, core.complement())
        return self._partition

    # -- dynamics ----------------------------------------------------------

    def _atom_update(self, state: FieldState) -> None:
        u = self._u
        U = self._atom_half
        if u is None:
            state.C = U[0, 0] * state.C
            return
        h = self.cfg.h
        f = state.F[self.core_r, self.core_l]
        a = np.vdot(u, f) * h
        c_new = U[0, 0] * state.C + U[0, 1] * a
        a_new = U[1, 0] * state.C + U[1, 1] * a
        f += ((a_new - a) / h) * u
        state.C = complex(c_new)

    def _detector_update(self, state: FieldState) -> None:
        if self.n_k == 0:
            return
        if self._det_half is None:
            state.D *= self._det_phase_half
            return
        h, wd = self.cfg.h, self.d_weight
        rows = self.det_rows
        x = np.vstack((h * state.F[rows, :], wd * state.D))
        y = self._det_half @ x
        state.F[rows, :] = y[: rows.size] / h
        state.D[:] = y[rows.size :] / wd

    def _transport(self, state: FieldState) -> None:
        F, D = state.F, state.D
        edge = max(
            float(np.max(np.abs(F[-2:, :]))),
            float(np.max(np.abs(F[:, :2]))),
            float(np.max(np.abs(D[:, :2]))) if D.size else 0.0,
        )
        if edge > BOUNDARY_TOL:
            raise HorizonError(
                f"amplitude {edge:.3e} reached the grid boundary at t={state.time:.6g}; "
                "increase the horizon T"
            )
        h = self.cfg.h
        lost = h * h * (np.sum(np.abs(F[-1, :]) ** 2) + np.sum(np.abs(F[:-1, 0]) ** 2))
        if D.size:
            lost += h * self.dk * np.sum(np.abs(D[:, 0]) ** 2)
        state.escaped_norm += float(lost)
        F[1:, :-1] = F[:-1, 1:].copy()
        F[0, :] = 0.0
        F[:, -1] = 0.0
        if D.size:
            D[:, :-1] = D[:, 1:].copy()
            D[:, -1] = 0.0

    def step(self, state: FieldState) -> FieldState:
        """Advance ``state`` by one time step ``h / c``; returns a new state."""
        if state.F.shape != (self.n_r, self.n_l) or state.D.shape != (self.n_k, self.n_l):
            raise ContractViolation("state layout does not match this model")
        out = state.copy()
        self._atom_update(out)
        self._detector_update(out)
        self._transport(out)
        self._detector_update(out)
        self._atom_update(out)
        out.time = state.time + self.dt
        return out

    def step_map(self, label: str = "") -> UnitaryMap:
        """The one-step propagator acting on packed vectors."""
        def apply(v):
            return self.pack(self.step(self.unpack(v)))

        return UnitaryMap(apply, self.dim, label or self.describe())

    def describe(self) -> str:
        scale = self.det.scale if self.det is not None else None
        return f"field(d={self.cfg.d:g},h={self.cfg.h:g},omega={self.cfg.omega:g},scale={scale})"

    def meta(self) -> dict:
        cfg = self.cfg
        out = {
            "model": "field",
            "d": cfg.d,
            "omega": cfg.omega,
            "h": cfg.h,
            "c": cfg.c,
            "T": cfg.T,
            "kernel": cfg.kernel.kind,
            "g0": cfg.kernel.g0,
        }
        if self.det is not None:
            out.update(
                scale=self.det.scale,
                x_minus=self.det.x_minus,
                x_plus=self.det.x_plus,
                dispersion=self.det.dispersion,
                semidirect=self.det.semidirect,
            )
        return out

    @property
    def alpha(self) -> float:
        """Short-time curvature ``int int |g|^2`` on the grid."""
        return self.kappa**2


def _expm_hermitian(block: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(block)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def build_field_model(cfg: FieldModelConfig, det: DetectorConfig | None = None) -> FieldModel:
    return FieldModel(cfg, det)


def init_excited(model: FieldModel) -> FieldState:
    state = model.zero_state()
    state.C = 1.0 + 0j
    return state


def step(state: FieldState, model: FieldModel) -> FieldState:
    return model.step(state)


def run_experiment(model: FieldModel, T: float | None = None, sample_every: int = 1) -> RunResult:
    """Evolve ``|e>`` to time ``T`` and sample ``|C(t)|^2`` every ``sample_every`` steps."""
    if T is None:
        T = model.cfg.T
    n_steps = round(T / model.dt)
    if abs(n_steps * model.dt - T) > _GRID_EPS * max(1.0, T):
        raise ContractViolation(f"T={T} is not a multiple of the time step {model.dt}")
    if n_steps > model.cfg.horizon_steps:
        raise HorizonError(f"T={T} exceeds the model horizon {model.cfg.T}")
    if sample_every < 1:
        raise ContractViolation("sample_every must be positive")
    state = init_excited(model)
    times, values, pops = [0.0], [1.0], [0.0]
    drift = 0.0
    for k in range(1, n_steps + 1):
        state = model.step(state)
        drift = max(drift, abs(model.norm(state) - 1.0))
        if k % sample_every == 0 or k == n_steps:
            times.append(k * model.dt)
            values.append(state.survival)
            pops.append(model.detector_population(state))
    series = SurvivalSeries(np.array(times), np.array(values), model.meta())
    return RunResult(series, state, drift, np.array(pops))


def wave_probe_support(model: FieldModel, n_steps: int, span: int | None = None):
    """Masks over ``F`` and ``D`` of wave-zone cells usable as probes.

    Cells lie within ``span`` cells of the atom region and far enough from
    the far edges to survive ``n_steps`` shifts.
    """
    if span is None:
        span = model.n_core
    regions = model.region_masks()
    i = np.arange(model.n_r)[:, None]
    j = np.arange(model.n_l)[None, :]
    lo_j = model.n_l - model.n_core - span
    safe = (i <= model.n_r - 3 - n_steps - model.det_jump) & (j >= 2 + n_steps)
    near = (i < model.n_core + span) & (j >= lo_j)
    f_mask = ~regions["core"] & safe & near
    jj = np.arange(model.n_l)
    d_cols = (jj >= 2 + n_steps) & (jj >= lo_j)
    d_mask = np.broadcast_to(d_cols, (model.n_k, model.n_l)).copy()
    if not f_mask.any():
        raise ConfigurationError(f"model horizon too short for {n_steps}-step probes")
    return f_mask, d_mask


def random_wave_probe(
    model: FieldModel,
    rng: np.random.Generator,
    n_steps: int,
    region: str = "any",
    span: int | None = None,
) -> FieldState:
    """Normalized random state supported on wave-zone cells.

    ``region`` restricts support to one of ``"R"``, ``"L"``, ``"RL"``,
    ``"ML"`` (detector excitations) or ``"any"``.
    """
    f_mask, d_mask = wave_probe_support(model, n_steps, span)
    if region in ("R", "L", "RL"):
        f_mask = f_mask & model.region_masks()[region]
        d_mask = np.zeros_like(d_mask)
    elif region == "ML":
        f_mask = np.zeros_like(f_mask)
    elif region != "any":
        raise ContractViolation(f"unknown region {region!r}")
    state = model.zero_state()
    for arr, mask in ((state.F, f_mask), (state.D, d_mask)):
        k = int(mask.sum())
        arr[mask] = rng.normal(size=k) + 1j * rng.normal(size=k)
    nrm = model.norm(state)
    if nrm == 0.0:
        raise ConfigurationError(f"no probe cells available in region {region!r}")
    state.F /= math.sqrt(nrm)
    state.D /= math.sqrt(nrm)
    return state


def core_norm(model: FieldModel, state: FieldState) -> float:
    """``||P_C state||``."""
    h = model.cfg.h
    f = state.F[model.core_r, model.core_l]
    return math.sqrt(abs(state.C) ** 2 + h * h * float(np.sum(np.abs(f) ** 2)))


def wavezone_leakage(model: FieldModel, n_steps: int, probes: Iterable[FieldState]) -> float:
    """Largest core-zone norm reached from wave-zone probes within ``n_steps``."""
    worst = 0.0
    for probe in probes:
        if core_norm(model, probe) != 0.0:
            raise ContractViolation("probe has support in the core zone")
        state = probe
        for _ in range(n_steps):
            state = model.step(state)
            worst = max(worst, core_norm(model, state))
    return worst


@dataclass
class NogoReport:
    scales: list[float]
    deviations: list[float]
    detector_populations: list[float]
    norm_drifts: list[float]
    series: list[SurvivalSeries]
    tol: float
    semidirect: bool = False

    @property
    def max_deviation(self) -> float:
        return max(self.deviations)

    @property
    def passed(self) -> bool:
        if self.semidirect:
            return self.max_deviation > self.tol
        return self.max_deviation <= self.tol

    def to_dict(self) -> dict:
        return {
            "scales": self.scales,
            "max_deviation": self.deviations,
            "detector_population": self.detector_populations,
            "norm_drift": self.norm_drifts,
            "tol": self.tol,
            "criterion": "max deviation > tol" if self.semidirect else "max deviation <= tol",
            "passed": self.passed,
        }


def _sweep(cfg, det, scales: Sequence[float], T, tol, semidirect) -> NogoReport:
    base = run_experiment(FieldModel(cfg, det.with_scale(0.0)), T)
    devs, pops, drifts, series = [], [], [], []
    for scale in scales:
        res = base if scale == 0 else run_experiment(FieldModel(cfg, det.with_scale(scale)), T)
        devs.append(compare_survival(res.series, base.series).max_abs)
        pops.append(float(np.max(res.detector_population)))
        drifts.append(res.norm_drift)
        series.append(res.series)
        logger.info("scale %g: deviation %.3e, detector population %.3e", scale, devs[-1], pops[-1])
    return NogoReport([float(s) for s in scales], devs, pops, drifts, series, tol, semidirect)


def nogo_sweep(cfg: FieldModelConfig, det: DetectorConfig, scales: Sequence[float], T=None) -> NogoReport:
    """Survival deviation from the uncoupled detector for each coupling scale."""
    if det.semidirect or not det.x_minus > cfg.d / 2:
        raise ConfigurationError(
            "nogo_sweep needs a wave-zone detector (x_minus > d/2); use semidirect_control "
            "for overlapping detectors"
        )
    return _sweep(cfg, det, scales, T, NOGO_TOL, semidirect=False)


def semidirect_control(
    cfg: FieldModelConfig, det_overlapping: DetectorConfig, scales: Sequence[float], T=None
) -> NogoReport:
    """Same sweep with a detector overlapping the atom region."""
    det = det_overlapping if det_overlapping.semidirect else replace(det_overlapping, semidirect=True)
    if not det.x_minus < cfg.d / 2:
        raise ConfigurationError("semidirect control needs a detector reaching into (-d/2, d/2)")
    return _sweep(cfg, det, scales, T, SEMIDIRECT_MIN_DEVIATION, semidirect=True)
