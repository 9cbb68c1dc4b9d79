"""
Fractional Ornstein-Uhlenbeck Toolkit
=====================================
Numerics for fractional hypoelliptic Ornstein-Uhlenbeck semigroups with support for:
- Kalman rank structure and anisotropic exponents
- Exact Fourier propagation on periodic grids
- Smoothing functional, Gevrey and subelliptic diagnostics
- Dissipation and spectral-inequality scans on thick sets
- Observability estimates and penalized HUM null control
"""

from .config import ConfigLoader
from .control import (
    dissipation_scan,
    heat_observability_cost,
    hum_solve,
    kovrijkine_c1,
    lebeau_robbiano_cost_exponent,
    nonthick_counterexample,
    observability_lower_bound,
    spectral_ratio_scan,
    thickness_check,
)
from .errors import FouError
from .field import dft, idft, l2_norm, sample_field
from .kalman import analyze_structure, characteristic_exponents
from .main import main
from .matops import gramian, mat_exp, psd_sqrt
from .models import (
    Field,
    Grid,
    HumProblem,
    KalmanStructure,
    OUModel,
    PropagationMode,
    RunStats,
    ScanReport,
    ThickSetSpec,
    WeightKind,
)
from .propagator import build_plan, evolve_path, propagate, symbol_integral
from .regularity import gevrey_scan, inequality_oracles, mst, subelliptic_report
from .runner import Runner
from .utils import fit_line, print_dry_run_info, setup_logging
from .writers import ReportWriter, read_fouf, write_fouf

__version__ = "1.0.0"

__all__ = [
    # Main entry point
    "main",
    # Core classes
    "ConfigLoader",
    "ReportWriter",
    "Runner",
    "FouError",
    # Models
    "Field",
    "Grid",
    "HumProblem",
    "KalmanStructure",
    "OUModel",
    "PropagationMode",
    "RunStats",
    "ScanReport",
    "ThickSetSpec",
    "WeightKind",
    # Matrix and structure
    "analyze_structure",
    "characteristic_exponents",
    "gramian",
    "mat_exp",
    "psd_sqrt",
    # Fields and propagation
    "build_plan",
    "dft",
    "evolve_path",
    "idft",
    "l2_norm",
    "propagate",
    "sample_field",
    "symbol_integral",
    # Regularity
    "gevrey_scan",
    "inequality_oracles",
    "mst",
    "subelliptic_report",
    # Control
    "dissipation_scan",
    "heat_observability_cost",
    "hum_solve",
    "kovrijkine_c1",
    "lebeau_robbiano_cost_exponent",
    "nonthick_counterexample",
    "observability_lower_bound",
    "spectral_ratio_scan",
    "thickness_check",
    # Utilities
    "fit_line",
    "print_dry_run_info",
    "read_fouf",
    "setup_logging",
    "write_fouf",
]
