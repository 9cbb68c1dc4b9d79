"""
Data models and enums for the fractional Ornstein-Uhlenbeck toolkit.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Optional

import numpy as np

from .errors import FieldError


class PropagationMode(Enum):
    """Which semigroup a propagator plan realizes."""
    FORWARD = "forward"
    ADJOINT = "adjoint"
    NORMALIZED = "normalized"
    NORMALIZED_ADJOINT = "normalized_adjoint"

    @property
    def drift_sign(self) -> float:
        """Sign applied to B in the Fourier formula."""
        if self in (PropagationMode.ADJOINT, PropagationMode.NORMALIZED_ADJOINT):
            return -1.0
        return 1.0

    def trace_factor(self, trace: float, t: float) -> float:
        """Scalar multiplying e^{-tP_{sign B}} for this mode."""
        if self == PropagationMode.FORWARD:
            return 1.0
        if self == PropagationMode.ADJOINT:
            return float(np.exp(trace * t))
        if self == PropagationMode.NORMALIZED:
            return float(np.exp(-0.5 * trace * t))
        return float(np.exp(0.5 * trace * t))

    def norm_bound(self, trace: float, t: float) -> float:
        """Largest admissible ratio ||e^{-tP}u|| / ||u||."""
        if self in (PropagationMode.FORWARD, PropagationMode.ADJOINT):
            return float(np.exp(0.5 * trace * t))
        return 1.0


class WeightKind(Enum):
    """Anisotropic Fourier weight family."""
    PROJECTION = "projection"   # <P_k xi>
    MATRIX = "matrix"           # <Q^{1/2} (B^T)^k xi>


class Domain(Enum):
    """Whether field values are physical samples or spectral samples."""
    PHYSICAL = "physical"
    SPECTRAL = "spectral"


class ExitCode(IntEnum):
    """CLI exit status contract."""
    OK = 0
    ERROR = 1
    VERDICT_FAILED = 2


@dataclass(frozen=True, eq=False)
class PsdMatrix:
    """Symmetric positive semidefinite matrix with its square root."""
    base: np.ndarray
    sqrt: np.ndarray
    eig_tol: float
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.base.shape[0]

    def is_nonsingular(self) -> bool:
        """True when every clamped eigenvalue exceeds the clamp threshold."""
        return bool(np.min(self.eigenvalues) > self.eig_tol)


@dataclass(frozen=True, eq=False)
class OUModel:
    """Fractional Ornstein-Uhlenbeck model (B, Q, s)."""
    B: np.ndarray
    Q: PsdMatrix
    s: float

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.B))


@dataclass(frozen=True, eq=False)
class KalmanStructure:
    """Kalman verdict and the flag V_0 < V_1 < ... with its projections."""
    n: int
    holds: bool
    r: Optional[int]
    bases: tuple[np.ndarray, ...]
    proj: tuple[np.ndarray, ...]
    incr: tuple[np.ndarray, ...]
    rank_tol: float
    ranks: tuple[int, ...] = ()

    @property
    def depth(self) -> int:
        """Largest flag index carried by the structure."""
        return len(self.proj) - 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "holds": self.holds,
            "r": self.r,
            "rank_tol": self.rank_tol,
            "ranks": list(self.ranks),
            "bases": [b.T.tolist() for b in self.bases],
            "projections": [p.tolist() for p in self.proj],
        }


@dataclass(frozen=True)
class ExponentRow:
    """Per-index exponents of the anisotropic estimates."""
    k: int
    smoothing_exponent: float
    subelliptic_order: float


@dataclass(frozen=True)
class ExponentTable:
    """Exponents derived from r and s."""
    s: float
    r: int
    rows: tuple[ExponentRow, ...]
    gamma: float
    dissipation_exponent: float
    observability_exponent: Optional[float]
    subelliptic_loss: float

    @property
    def observability_defined(self) -> bool:
        return self.observability_exponent is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "s": self.s,
            "r": self.r,
            "rows": [
                {
                    "k": row.k,
                    "smoothing_exponent": row.smoothing_exponent,
                    "subelliptic_order": row.subelliptic_order,
                }
                for row in self.rows
            ],
            "gamma": self.gamma,
            "dissipation_exponent": self.dissipation_exponent,
            "observability_exponent": (
                self.observability_exponent
                if self.observability_exponent is not None else "undefined"
            ),
            "subelliptic_loss": self.subelliptic_loss,
        }


@dataclass(frozen=True)
class Grid:
    """Uniform periodic tensor grid on a centered box."""
    L: tuple[float, ...]
    N: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "L", tuple(float(v) for v in self.L))
        object.__setattr__(self, "N", tuple(int(v) for v in self.N))
        if not self.L or len(self.L) != len(self.N):
            raise FieldError(f"Grid needs one length per axis, got L={self.L}, N={self.N}")
        if len(self.N) > 4:
            raise FieldError(f"Grid dimension {len(self.N)} exceeds 4")
        for length, count in zip(self.L, self.N):
            if not np.isfinite(length) or length <= 0:
                raise FieldError(f"Box length must be positive and finite, got {length}")
            if count < 2 or count & (count - 1):
                raise FieldError(f"Point count must be a power of two >= 2, got {count}")

    @property
    def n(self) -> int:
        return len(self.N)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.N

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / count for length, count in zip(self.L, self.N))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def frequency_spacing(self) -> tuple[float, ...]:
        return tuple(2.0 * np.pi / length for length in self.L)

    @property
    def frequency_cell_volume(self) -> float:
        return float(np.prod(self.frequency_spacing))

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.L))

    @property
    def max_frequency(self) -> float:
        """Largest frequency magnitude on the lattice."""
        return float(np.sqrt(sum((np.pi * count / length) ** 2
                                 for length, count in zip(self.L, self.N))))

    def axes(self) -> list[np.ndarray]:
        return [-length / 2 + np.arange(count) * length / count
                for length, count in zip(self.L, self.N)]

    def frequency_axes(self) -> list[np.ndarray]:
        return [2.0 * np.pi / length * np.arange(-count // 2, count // 2)
                for length, count in zip(self.L, self.N)]

    def points(self) -> np.ndarray:
        """Grid points, shape (*N, n)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def frequencies(self) -> np.ndarray:
        """Centered frequency lattice, shape (*N, n)."""
        return np.stack(np.meshgrid(*self.frequency_axes(), indexing="ij"), axis=-1)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(L=self.L, N=tuple(count * factor for count in self.N))

    def to_dict(self) -> dict[str, Any]:
        return {"L": list(self.L), "N": list(self.N)}


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a grid, either in physical or spectral domain."""
    grid: Grid
    values: np.ndarray
    domain: Domain = Domain.PHYSICAL
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128, copy=True)
        if values.shape != self.grid.shape:
            raise FieldError(
                f"Field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            index = np.argwhere(~np.isfinite(values))[0]
            raise FieldError(f"Field has a non-finite value at index {tuple(int(i) for i in index)}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def with_values(self, values: np.ndarray, notes: tuple[str, ...] = ()) -> "Field":
        return Field(self.grid, values, self.domain, self.notes + notes)


@dataclass(frozen=True, eq=False)
class PropagatorPlan:
    """Precomputed decay weights and shear for one (B, Q, s, t) evolution."""
    model: OUModel
    t: float
    grid: Grid
    mode: PropagationMode
    decay: np.ndarray
    shear: np.ndarray
    scale: float
    quad_nodes: int = 32
    interp_order: int = 5

    @property
    def is_identity(self) -> bool:
        return self.t == 0.0


@dataclass
class EvolutionPath:
    """Snapshots of a propagated field."""
    times: list[float]
    snapshots: list[Field]
    chained: bool = False
    drift: Optional[float] = None


@dataclass(frozen=True)
class SphereOptions:
    """Sphere search controls for M^s_t and multiplier suprema."""
    points: int = 4096
    starts: int = 16
    stall_rtol: float = 1e-8
    max_iter: int = 400
    seed: int = 0
    refine: bool = True


@dataclass
class ScanReport:
    """Log-log (or linear) scan with its fit and verdict."""
    name: str
    abscissae: list[float]
    values: list[float]
    slope: float
    intercept: float
    residual: float
    theoretical_slope: Optional[float]
    tolerance: Optional[float]
    passed: bool
    window: list[float] = field(default_factory=list)
    excluded: list[float] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, Any]]:
        return [{"abscissa": a, "value": v} for a, v in zip(self.abscissae, self.values)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "abscissae": list(self.abscissae),
            "values": list(self.values),
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "theoretical_slope": self.theoretical_slope,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "window": list(self.window),
            "excluded": list(self.excluded),
            "extras": self.extras,
        }


@dataclass
class MstResult:
    """Value of M^s_t and the direction attaining it."""
    t: float
    s: float
    value: float
    argmax: np.ndarray
    sampling_density: int
    iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "s": self.s,
            "value": self.value,
            "argmax": self.argmax.tolist(),
            "sampling_density": self.sampling_density,
            "iterations": self.iterations,
        }


@dataclass
class GevreyReport:
    """Data seminorm scan plus worst-case rate scan."""
    k: int
    q: float
    weight: WeightKind
    data: ScanReport
    rate: ScanReport
    ratios: list[float]
    bounded: bool

    @property
    def passed(self) -> bool:
        return self.rate.passed and self.bounded


@dataclass
class SubellipticReport:
    """Ratios of the subelliptic and drift estimates over a family."""
    subelliptic_ratios: list[float]
    drift_ratios: list[float]
    excluded: list[dict[str, Any]]
    max_subelliptic: float
    max_drift: float
    refined_max_subelliptic: Optional[float] = None
    refined_max_drift: Optional[float] = None
    resolution_change: Optional[float] = None

    @property
    def passed(self) -> bool:
        finite = np.isfinite(self.max_subelliptic) and np.isfinite(self.max_drift)
        stable = self.resolution_change is None or self.resolution_change < 0.1
        return bool(finite and stable)


@dataclass
class InequalityReport:
    """Violation counts of the three power inequalities."""
    samples: int
    violations: dict[str, int]
    worst: dict[str, float]

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


@dataclass(frozen=True, eq=False)
class ThickSetSpec:
    """Observation set on a grid with its thickness parameters."""
    grid: Grid
    indicator: np.ndarray
    gamma: float
    a: tuple[float, ...]

    @property
    def measure(self) -> float:
        return float(np.count_nonzero(self.indicator)) * self.grid.cell_volume


@dataclass
class ThicknessVerdict:
    """Result of a thickness check."""
    thick: bool
    min_fraction: float
    worst_window: tuple[float, ...]
    window_cells: tuple[int, ...]
    gamma: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "thick": self.thick,
            "min_fraction": self.min_fraction,
            "worst_window": list(self.worst_window),
            "window_cells": list(self.window_cells),
            "gamma": self.gamma,
        }


@dataclass(frozen=True)
class CgOptions:
    """Conjugate-gradient controls."""
    max_iter: int = 500
    rtol: float = 1e-6
    stall_window: int = 20
    stall_factor: float = 0.99


@dataclass(frozen=True, eq=False)
class HumProblem:
    """Penalized HUM null-control instance."""
    model: OUModel
    T: float
    omega: ThickSetSpec
    f0: Field
    epsilon: float
    nt: int = 128
    cg: CgOptions = CgOptions()
    quad_nodes: int = 32
    interp_order: int = 5


@dataclass
class HumSolution:
    """Output of the penalized HUM solver."""
    times: list[float]
    controls: list[Field]
    terminal_state: Field
    g_T: Field
    iterations: int
    J: float
    residual: float
    identity_gap: float
    converged: bool
    exploratory: bool = False
    residual_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "J": self.J,
            "residual": self.residual,
            "identity_gap": self.identity_gap,
            "converged": self.converged,
            "exploratory": self.exploratory,
            "residual_history": list(self.residual_history),
        }


@dataclass
class Verdict:
    """Named pass/fail outcome of a command stage."""
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunStats:
    """Overall statistics of one CLI run."""
    command: str
    verdicts: list[Verdict] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    errors: list[dict[str, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def exit_code(self) -> ExitCode:
        if self.errors:
            return ExitCode.ERROR
        if not self.passed:
            return ExitCode.VERDICT_FAILED
        return ExitCode.OK
