"""
Acceptance suite behind the `selftest` command.

Each check returns (passed, detail); a check that raises is recorded as a
failure carrying the error code.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.integrate

from .control import (
    dissipation_scan,
    doubling_gaps_indicator,
    fractional_heat_model,
    full_indicator,
    hum_solve,
    make_thick_set,
    nonthick_counterexample,
    spectral_ratio_scan,
    stripes_indicator,
    thickness_check,
)
from .errors import FouError, NormBoundViolation
from .field import (
    dft,
    gaussian_field,
    idft,
    l2_inner,
    l2_norm,
    l2_norm_on,
    sample_field,
    wavepacket_field,
    white_noise_field,
)
from .kalman import analyze_structure
from .matops import psd_sqrt
from .models import (
    CgOptions,
    Field,
    Grid,
    HumProblem,
    OUModel,
    PropagationMode,
    SphereOptions,
    Verdict,
)
from .propagator import build_plan, propagate
from .regularity import gevrey_scan, grid_resolution_time, inequality_oracles, mst, mst_scan, subelliptic_report


@dataclass
class SelftestCheck:
    """Outcome and wall-clock time of one acceptance check."""
    verdict: Verdict
    seconds: float


def kolmogorov_model(s: float) -> OUModel:
    return OUModel(B=np.array([[0.0, 1.0], [0.0, 0.0]]),
                   Q=psd_sqrt(2.0 ** (1.0 / s) * np.diag([0.0, 1.0])), s=s)


def random_kalman_model(rng: np.random.Generator, s: float) -> OUModel:
    """2x2 drift with degenerate diffusion diag(0, 1); generic B satisfies the rank condition."""
    while True:
        B = rng.standard_normal((2, 2))
        if abs(B[0, 1]) > 0.2:
            return OUModel(B=B, Q=psd_sqrt(np.diag([0.0, 1.0])), s=s)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def check_heat_exactness(quick: bool, seed: int) -> tuple[bool, str]:
    grid = Grid(L=(40.0,), N=(512,))
    model = fractional_heat_model(1, 1.0)
    t = 0.5
    u0 = gaussian_field(grid)
    out = propagate(build_plan(model, t, grid), u0)
    exact = sample_field(grid, lambda x: np.exp(-x[..., 0] ** 2 / (2 * (1 + 2 * t))) / np.sqrt(1 + 2 * t))
    error = _relative(out.values, exact.values)
    return error < 1e-8, f"relative error {error:.3e}"


def _kolmogorov_reference(xi: float, eta: float, t: float, s: float) -> float:
    """exp(-int_0^t |eta + tau xi|^{2s} dtau) by adaptive quadrature split at the zero."""
    points = [-eta / xi] if xi != 0 and 0 < -eta / xi < t else None
    value, _ = scipy.integrate.quad(lambda tau: abs(eta + tau * xi) ** (2 * s), 0.0, t,
                                    points=points, epsabs=1e-14, epsrel=1e-12, limit=200)
    return math.exp(-value)


def check_kolmogorov_spectrum(quick: bool, seed: int) -> tuple[bool, str]:
    s, t = 0.75, 0.3
    count = 128 if quick else 256
    grid = Grid(L=(30.0, 30.0), N=(count, count))
    model = kolmogorov_model(s)
    u0 = gaussian_field(grid)
    spectrum = dft(propagate(build_plan(model, t, grid), u0)).values
    xi = grid.frequencies()
    rng = np.random.default_rng(seed)
    candidates = np.argwhere(np.sum(xi ** 2, axis=-1) <= 16.0)
    picks = candidates[rng.choice(len(candidates), size=min(100, len(candidates)), replace=False)]
    worst = 0.0
    for index in picks:
        a, b = xi[tuple(index)]
        reference = _kolmogorov_reference(a, b, t, s) * 2 * np.pi * np.exp(-(a ** 2 + (b + t * a) ** 2) / 2)
        if abs(reference) < 1e-3:
            continue
        worst = max(worst, abs(spectrum[tuple(index)] - reference) / abs(reference))
    return worst < 1e-4, f"max relative error {worst:.3e} over {len(picks)} frequencies"


def check_norm_bound(quick: bool, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    grid = Grid(L=(24.0, 24.0), N=(64, 64) if quick else (128, 128))
    calls = 0
    for _ in range(2 if quick else 4):
        B = 0.5 * rng.standard_normal((2, 2))
        A = rng.standard_normal((2, 2))
        model = OUModel(B=B, Q=psd_sqrt(A @ A.T + 0.1 * np.eye(2)), s=float(rng.uniform(0.3, 1.5)))
        u0 = gaussian_field(grid, width=1.5)
        for mode in PropagationMode:
            for t in (0.1, 0.5):
                try:
                    propagate(build_plan(model, t, grid, mode), u0)
                except NormBoundViolation as e:
                    return False, str(e)
                calls += 1
    return True, f"{calls} propagate calls within the bound"


def check_kalman_kolmogorov(quick: bool, seed: int) -> tuple[bool, str]:
    ks = analyze_structure(*_bq(kolmogorov_model(0.75)))
    p0 = float(np.max(np.abs(ks.proj[0] - np.diag([0.0, 1.0]))))
    p1 = float(np.max(np.abs(ks.proj[1] - np.eye(2))))
    return ks.r == 1 and p0 < 1e-12 and p1 < 1e-12, f"r={ks.r}, |P0 - v-block|={p0:.1e}, |P1 - I|={p1:.1e}"


def _bq(model: OUModel):
    return model.B, model.Q


def check_mst(quick: bool, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    options = SphereOptions(points=512 if quick else 4096, starts=4 if quick else 16, seed=seed)
    details = []

    worst = 0.0
    for _ in range(5):
        model = random_kalman_model(rng, 1.0)
        worst = max(worst, abs(mst(model, analyze_structure(*_bq(model)), 0.5, options).value - 1.0))
    ok_a = worst <= 1e-10
    details.append(f"s=1 error {worst:.1e}")

    heat = OUModel(B=np.zeros((2, 2)), Q=psd_sqrt(np.eye(2)), s=0.75)
    t = 0.3
    error_b = abs(mst(heat, analyze_structure(*_bq(heat)), t, options).value - t ** (0.5 - 1 / 1.5))
    ok_b = error_b <= 1e-10
    details.append(f"B=0 error {error_b:.1e}")

    kolmogorov = kolmogorov_model(0.75)
    scan = mst_scan(kolmogorov, analyze_structure(*_bq(kolmogorov)), np.geomspace(1e-3, 1e-1, 5), options)
    ok_c = abs(scan.slope + 1 / 6) <= 0.02
    details.append(f"Kolmogorov slope {scan.slope:.4f}")

    violations = 0
    for s in (2.0, 0.5):
        for _ in range(2 if quick else 10):
            model = random_kalman_model(rng, s)
            ks = analyze_structure(*_bq(model))
            for t in np.geomspace(1e-2, 1.0, 3 if quick else 8):
                value, reference = mst(model, ks, t, options).value, t ** (0.5 - 1 / (2 * s))
                if s >= 1 and value > reference * (1 + 1e-10):
                    violations += 1
                if s <= 1 and value < reference * (1 - 1e-10):
                    violations += 1
    details.append(f"{violations} Jensen violation(s)")
    return ok_a and ok_b and ok_c and violations == 0, "; ".join(details)


def data_window(model: OUModel, grid: Grid, k: int, t_max: float = 1.0, count: int = 6) -> list[float]:
    """Times from just above five grid-resolution times up to t_max."""
    start = 1.05 * 5 * grid_resolution_time(model, grid.max_frequency, k)
    return [float(t) for t in np.geomspace(start, t_max, count)]


def check_gevrey(quick: bool, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    options = SphereOptions(points=1024 if quick else 4096, starts=8 if quick else 16, seed=seed)
    times = list(np.geomspace(1e-3, 1e-1, 5))

    heat_grid = Grid(L=(40.0,), N=(512,))
    heat = fractional_heat_model(1, 0.75)
    heat_ks = analyze_structure(*_bq(heat))
    heat_u0 = white_noise_field(heat_grid, rng, taper=5.0)
    heat_rate = gevrey_scan(heat, heat_ks, 0, 1.0, heat_u0, times, options=options)
    heat_times = data_window(heat, heat_grid, 0)
    heat_data = gevrey_scan(heat, heat_ks, 0, 1.0, heat_u0, heat_times, options=options)
    ok_heat = (abs(heat_rate.rate.slope + 2 / 3) <= 0.05 and heat_data.bounded
               and len(heat_data.ratios) == len(heat_times))

    count = 128 if quick else 256
    grid = Grid(L=(20.0, 20.0), N=(count, count))
    kolmogorov = kolmogorov_model(0.75)
    ks = analyze_structure(*_bq(kolmogorov))
    u0 = white_noise_field(grid, rng, taper=2.5)
    rate = gevrey_scan(kolmogorov, ks, 1, 1.0, u0, times, options=options)
    data_times = data_window(kolmogorov, grid, 1)
    data = gevrey_scan(kolmogorov, ks, 1, 1.0, u0, data_times, options=options)
    ok_kolmogorov = (abs(rate.rate.slope + 5 / 3) <= 0.1 and data.bounded
                     and len(data.ratios) == len(data_times))
    return ok_heat and ok_kolmogorov, (
        f"heat slope {heat_rate.rate.slope:.4f}, Kolmogorov slope {rate.rate.slope:.4f}, "
        f"bounded {heat_data.bounded}/{data.bounded} over "
        f"[{heat_times[0]:.3g}, {heat_times[-1]:.3g}] and [{data_times[0]:.3g}, {data_times[-1]:.3g}]"
    )


def two_mode_field(grid: Grid, modes: tuple[float, float], amplitudes: tuple[float, float]) -> Field:
    return sample_field(grid, lambda x: amplitudes[0] * np.cos(modes[0] * x[..., 0])
                        + amplitudes[1] * np.cos(modes[1] * x[..., 0]))


def check_dissipation(quick: bool, seed: int) -> tuple[bool, str]:
    grid = Grid(L=(40 * np.pi,), N=(1024,))
    heat = fractional_heat_model(1, 0.75)
    u0 = two_mode_field(grid, (2.05, 4.05), (1.0, 1e-3))
    times = [0.2, 0.4, 0.6, 0.8, 1.0]
    report = dissipation_scan(heat, analyze_structure(*_bq(heat)), u0, [2.0, 4.0], times)
    slopes = report.extras['slopes_by_k']
    ratio = slopes['4.0'] / slopes['2.0']
    ok_heat = abs(ratio / 2 ** 1.5 - 1) <= 0.1

    count = 128 if quick else 256
    grid2 = Grid(L=(24.0, 24.0), N=(count, count))
    kolmogorov = kolmogorov_model(0.75)
    u_k = sample_field(grid2, lambda x: np.exp(-x[..., 0] ** 2 / (2 * 0.09) - x[..., 1] ** 2 / 8))
    report_k = dissipation_scan(kolmogorov, analyze_structure(*_bq(kolmogorov)), u_k, [4.0], times)
    residual = report_k.extras['residuals_by_k']['4.0']
    return ok_heat and residual < 0.05, f"heat slope ratio {ratio:.4f}, Kolmogorov t^2.5 residual {residual:.4f}"


def _stripes(grid: Grid) -> np.ndarray:
    return stripes_indicator(grid, width=0.3125, period=1.0)


def check_spectral(quick: bool, seed: int) -> tuple[bool, str]:
    grid = Grid(L=(32.0,), N=(512,))
    omega = make_thick_set(grid, _stripes(grid), 0.3, [1.0])
    k_values = [1, 2, 4, 8, 16, 32] if quick else list(range(1, 33))
    report = spectral_ratio_scan(omega, k_values, 20 if quick else 100, seed)
    constant = Field(grid, np.ones(grid.shape))
    ratio = l2_norm(constant) / l2_norm_on(constant, omega.indicator)
    exact = math.sqrt(grid.box_volume / omega.measure)
    ok_constant = abs(ratio - exact) <= 1e-10
    return report.passed and ok_constant, (
        f"growth slope {report.slope:.4f} <= c1 {report.extras['c1']:.4f}; constant ratio error {abs(ratio - exact):.1e}"
    )


def check_hum(quick: bool, seed: int) -> tuple[bool, str]:
    grid = Grid(L=(32.0,), N=(256,) if quick else (512,))
    model = fractional_heat_model(1, 0.75)
    omega = make_thick_set(grid, _stripes(grid), 0.3, [1.0])
    f0 = gaussian_field(grid, width=2.0)
    nt = 64 if quick else 128
    cg = CgOptions(max_iter=500, rtol=1e-6)
    solution = hum_solve(HumProblem(model, 1.0, omega, f0, 1e-6, nt, cg))
    terminal = l2_norm(solution.terminal_state) / l2_norm(f0)
    refined = hum_solve(HumProblem(model, 1.0, omega, f0, 1e-6, 2 * nt, cg))
    change = abs(l2_norm(refined.terminal_state) - l2_norm(solution.terminal_state)) / l2_norm(solution.terminal_state)
    passed = (solution.converged and solution.iterations < 200 and terminal <= 1e-2
              and solution.identity_gap <= 0.05 and change < 0.1)
    return passed, (
        f"{solution.iterations} iterations, ||f(T)||/||f0|| {terminal:.2e}, "
        f"identity gap {solution.identity_gap:.2%}, nt-doubling change {change:.2%}"
    )


def check_counterexample(quick: bool, seed: int) -> tuple[bool, str]:
    grid = Grid(L=(256.0,), N=(2048,))
    k_values = list(range(1, 9))
    indicator, centers = doubling_gaps_indicator(grid, k_values, separator=8.0)
    omega = make_thick_set(grid, indicator, 0.5, [1.0])
    report = nonthick_counterexample(0.75, omega, 1.0, k_values, centers, nt=32 if quick else 64)
    spread = report.extras['terminal_norm_spread']
    drop = report.extras['drop']
    return report.passed and drop >= 10 and spread <= 1e-10, f"drop {drop:.3e}, terminal spread {spread:.1e}"


def check_subelliptic(quick: bool, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    grid = Grid(L=(20.0, 20.0), N=(64, 64))
    model = kolmogorov_model(0.75)
    fields = [wavepacket_field(grid, rng, count=4, k_max=3.0, width=1.0, spread=3.0)
              for _ in range(10 if quick else 50)]
    report = subelliptic_report(model, analyze_structure(*_bq(model)), fields)
    return report.passed, (
        f"max ratios {report.max_subelliptic:.4f}/{report.max_drift:.4f}, "
        f"resolution change {report.resolution_change}"
    )


def check_properties(quick: bool, seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    details, ok = [], True

    grid = Grid(L=(10.0, 12.0), N=(32, 64))
    u = Field(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    round_trip = _relative(idft(dft(u)).values, u.values)
    plancherel = abs(l2_norm(dft(u)) / (2 * np.pi) ** (grid.n / 2) - l2_norm(u)) / l2_norm(u)
    ok &= round_trip < 1e-12 and plancherel < 1e-12
    details.append(f"dft round trip {round_trip:.1e}, Plancherel {plancherel:.1e}")

    ks = analyze_structure(*_bq(kolmogorov_model(0.75)))
    algebra = max(
        max(float(np.max(np.abs(p @ p - p))) for p in ks.proj),
        max(float(np.max(np.abs(ks.proj[1] @ ks.proj[0] - ks.proj[0]))), 0.0),
        float(np.max(np.abs(ks.incr[0] @ ks.incr[1]))),
    )
    ok &= algebra < 1e-12
    details.append(f"projection algebra {algebra:.1e}")

    line = Grid(L=(40.0,), N=(256,))
    heat = fractional_heat_model(1, 0.75)
    g = gaussian_field(line, width=1.5)
    h = gaussian_field(line, center=[2.0], width=1.0)
    two = propagate(build_plan(heat, 0.3, line), propagate(build_plan(heat, 0.2, line), g))
    one = propagate(build_plan(heat, 0.5, line), g)
    semigroup = _relative(two.values, one.values)
    forward = l2_inner(propagate(build_plan(heat, 0.4, line), g), h)
    backward = l2_inner(g, propagate(build_plan(heat, 0.4, line, PropagationMode.ADJOINT), h))
    duality = abs(forward - backward) / abs(forward)
    ok &= semigroup < 1e-10 and duality < 1e-8
    details.append(f"semigroup {semigroup:.1e}, duality {duality:.1e}")

    oracles = inequality_oracles(1000 if quick else 10000, seed)
    ok &= oracles.total_violations == 0
    details.append(f"{oracles.total_violations} inequality violation(s)")

    base = stripes_indicator(line, width=1.25, period=2.5)
    smaller = base & (rng.uniform(size=line.shape) < 0.7)
    wide = thickness_check(make_thick_set(line, base, 0.1, [2.5])).min_fraction
    narrow = thickness_check(make_thick_set(line, smaller, 0.1, [2.5])).min_fraction
    full = thickness_check(make_thick_set(line, full_indicator(line), 1.0, [2.5])).min_fraction
    ok &= narrow <= wide <= full == 1.0
    details.append(f"thickness fractions {narrow:.3f} <= {wide:.3f} <= {full:.3f}")
    return bool(ok), "; ".join(details)


CHECKS: list[tuple[str, Callable[[bool, int], tuple[bool, str]]]] = [
    ('heat_exactness', check_heat_exactness),
    ('kolmogorov_spectrum', check_kolmogorov_spectrum),
    ('norm_bound', check_norm_bound),
    ('kalman_kolmogorov', check_kalman_kolmogorov),
    ('mst', check_mst),
    ('gevrey', check_gevrey),
    ('dissipation', check_dissipation),
    ('spectral_inequality', check_spectral),
    ('hum', check_hum),
    ('counterexample', check_counterexample),
    ('subelliptic', check_subelliptic),
    ('properties', check_properties),
]


def run_selftest(quick: bool = False, seed: int = 0, only: tuple[str, ...] = ()) -> list[SelftestCheck]:
    """Run the acceptance checks in order and collect their verdicts."""
    results = []
    for name, check in CHECKS:
        if only and name not in only:
            continue
        logging.info(f"Selftest: running {name}")
        start = time.perf_counter()
        try:
            passed, detail = check(quick, seed)
        except FouError as e:
            passed, detail = False, f"[{e.code}] {e}"
        verdict = Verdict(name=name, passed=bool(passed), detail=detail)
        results.append(SelftestCheck(verdict=verdict, seconds=time.perf_counter() - start))
        logging.info(f"Selftest {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    return results
