"""
Control geometry and null-control diagnostics: thick sets, spectral and
dissipation estimates, observability costs, penalized HUM and the
counterexample family for non-thick sets.
"""

import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ControlError, HumIdentityError, ParameterError, ThicknessError
from .field import (
    band_limited_field,
    cube_cutoff,
    dft,
    gaussian_field,
    idft,
    l2_inner,
    l2_norm,
    l2_norm_on,
    weighted_spectral_norm,
    white_noise_field,
)
from .kalman import characteristic_exponents
from .matops import psd_sqrt
from .models import (
    Domain,
    Field,
    Grid,
    HumProblem,
    HumSolution,
    KalmanStructure,
    OUModel,
    PropagationMode,
    ScanReport,
    ThickSetSpec,
    ThicknessVerdict,
)
from .propagator import build_plan, propagate
from .utils import fit_line


# Observation sets

def make_thick_set(grid: Grid, indicator: np.ndarray, gamma: float, a: Sequence[float]) -> ThickSetSpec:
    """Validate thickness parameters and wrap the indicator."""
    indicator = np.asarray(indicator, dtype=bool)
    if indicator.shape != grid.shape:
        raise ThicknessError(f"Indicator shape {indicator.shape} does not match grid {grid.shape}")
    a = tuple(float(v) for v in np.broadcast_to(np.asarray(a, dtype=float), (grid.n,)))
    if not 0 < gamma <= 1:
        raise ThicknessError(f"gamma must lie in (0, 1], got {gamma}")
    for side, length in zip(a, grid.L):
        if not side > 0:
            raise ThicknessError(f"Window sides must be positive, got {a}")
        if side > length:
            raise ThicknessError(f"Window side {side} exceeds box length {length}")
    return ThickSetSpec(grid=grid, indicator=indicator, gamma=float(gamma), a=a)


def full_indicator(grid: Grid) -> np.ndarray:
    return np.ones(grid.shape, dtype=bool)


def stripes_indicator(grid: Grid, width: float, period: float, axis: int = 0, offset: float = 0.0) -> np.ndarray:
    """Periodic stripes of the given width along one axis, starting at the box corner plus offset."""
    if not 0 < width <= period:
        raise ThicknessError(f"Stripe width {width} must lie in (0, period={period}]")
    h = grid.spacing[axis]
    cells_period, cells_width, cells_offset = period / h, width / h, offset / h
    index = np.arange(grid.N[axis])
    if all(abs(v - round(v)) < 1e-9 for v in (cells_period, cells_width, cells_offset)):
        covered = (index - round(cells_offset)) % round(cells_period) < round(cells_width)
    else:
        covered = ((index * h - offset) % period) < width
    shape = [1] * grid.n
    shape[axis] = grid.N[axis]
    return np.broadcast_to(covered.reshape(shape), grid.shape).copy()


def blob_indicator(grid: Grid, center: Sequence[float], radius: float) -> np.ndarray:
    """Closed ball of the given radius."""
    center = np.asarray(center, dtype=float)
    return np.linalg.norm(grid.points() - center, axis=-1) <= radius


def doubling_gaps_indicator(
    grid: Grid,
    k_values: Sequence[int],
    separator: float,
    unit: float = 1.0,
    axis: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Covered everywhere except gaps of width 2*k*unit along one axis,
    separated by covered stretches of length `separator`.

    Returns:
        (indicator, centers) with one gap center per k.
    """
    x = grid.axes()[axis]
    covered = np.ones(grid.N[axis], dtype=bool)
    centers = np.zeros((len(k_values), grid.n))
    start = -grid.L[axis] / 2 + separator
    for i, k in enumerate(k_values):
        width = 2 * k * unit
        stop = start + width
        if stop + separator > grid.L[axis] / 2:
            raise ThicknessError(f"Gaps up to k={k} do not fit in a box of length {grid.L[axis]}")
        covered &= ~((x >= start) & (x < stop))
        centers[i, axis] = start + width / 2
        start = stop + separator
    shape = [1] * grid.n
    shape[axis] = grid.N[axis]
    return np.broadcast_to(covered.reshape(shape), grid.shape).copy(), centers


def load_bitmap(path: str, grid: Grid) -> np.ndarray:
    """Raw bitmap: one byte per grid point, row-major, nonzero means covered."""
    raw = np.fromfile(Path(path), dtype=np.uint8)
    if raw.size != grid.size:
        raise ThicknessError(f"Bitmap {path} has {raw.size} bytes, grid needs {grid.size}")
    return raw.reshape(grid.shape) != 0


def _circular_window_sum(values: np.ndarray, width: int, axis: int) -> np.ndarray:
    """Sum over windows [i, i + width) with periodic wrap along one axis."""
    count = values.shape[axis]
    extended = np.concatenate([values, np.take(values, np.arange(width), axis=axis)], axis=axis)
    cumulative = np.cumsum(extended, axis=axis)
    zero = np.zeros_like(np.take(cumulative, [0], axis=axis))
    cumulative = np.concatenate([zero, cumulative], axis=axis)
    upper = np.take(cumulative, np.arange(width, width + count), axis=axis)
    lower = np.take(cumulative, np.arange(count), axis=axis)
    return upper - lower


def window_fractions(indicator: np.ndarray, cells: Sequence[int]) -> np.ndarray:
    """Covered fraction of every grid-aligned window with the given cell counts."""
    counts = indicator.astype(np.int64)
    for axis, width in enumerate(cells):
        counts = _circular_window_sum(counts, width, axis)
    return counts / float(np.prod(cells))


def _window_cells(grid: Grid, sides: Sequence[float]) -> tuple[int, ...]:
    return tuple(
        int(min(max(round(side / h), 1), count))
        for side, h, count in zip(sides, grid.spacing, grid.N)
    )


def thickness_check(spec: ThickSetSpec) -> ThicknessVerdict:
    """
    Check |omega cap (x + [0, a])| >= gamma * prod(a_j) over all grid-aligned windows.

    Returns:
        ThicknessVerdict with the minimal covered fraction and its window origin.
    """
    grid = spec.grid
    for side, length in zip(spec.a, grid.L):
        if side > length:
            raise ThicknessError(f"Window side {side} exceeds box length {length}")
    cells = _window_cells(grid, spec.a)
    fractions = window_fractions(spec.indicator, cells)
    index = np.unravel_index(int(np.argmin(fractions)), fractions.shape)
    min_fraction = float(fractions[index])
    origin = tuple(-length / 2 + i * h for length, i, h in zip(grid.L, index, grid.spacing))
    verdict = ThicknessVerdict(
        thick=min_fraction >= spec.gamma - 1e-12,
        min_fraction=min_fraction,
        worst_window=origin,
        window_cells=cells,
        gamma=spec.gamma,
    )
    logging.info(f"Thickness check: min fraction {min_fraction:.4f} vs gamma {spec.gamma} "
                 f"-> {'thick' if verdict.thick else 'not thick'}")
    return verdict


def find_gap_centers(
    grid: Grid,
    indicator: np.ndarray,
    k_values: Sequence[int],
    unit: float = 1.0,
    max_gap_fraction: float = 0.05,
) -> np.ndarray:
    """Center of the first least-covered window of side 2*k*unit, per k."""
    centers = np.zeros((len(k_values), grid.n))
    found = 0
    for i, k in enumerate(k_values):
        cells = _window_cells(grid, [2 * k * unit] * grid.n)
        fractions = window_fractions(indicator, cells)
        index = np.unravel_index(int(np.argmin(fractions)), fractions.shape)
        if fractions[index] <= max_gap_fraction:
            found += 1
        else:
            logging.warning(f"No gap at scale k={k}: least covered window has fraction {fractions[index]:.3f}")
        for axis, (length, h, count) in enumerate(zip(grid.L, grid.spacing, grid.N)):
            position = (index[axis] + cells[axis] / 2) % count
            centers[i, axis] = -length / 2 + position * h
    if not found:
        raise ThicknessError("No gaps found: set appears thick at this resolution")
    return centers


# Constants of the spectral and observability estimates

def kovrijkine_c1(gamma: float, a: Sequence[float], K: float = math.e) -> float:
    """
    c1 = (ln[(K^n/gamma)^{nK}])_+ + (ln[(K^n/gamma)^{2K(a_1+...+a_n)}])_+ + 1.
    """
    a = [float(v) for v in a]
    n = len(a)
    if K < math.e:
        raise ParameterError(f"K must be >= e, got {K}")
    if not 0 < gamma <= 1:
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    if n == 0 or any(v <= 0 for v in a):
        raise ParameterError(f"Window sides must be positive, got {a}")
    log_base = n * math.log(K) - math.log(gamma)
    return max(n * K * log_base, 0.0) + max(2 * K * sum(a) * log_base, 0.0) + 1.0


def lebeau_robbiano_cost_exponent(a: float, b: float, m: float) -> float:
    """Exponent a*m/(b - a) of the abstract observability cost exp(C / T^{...})."""
    if not b > a:
        raise ParameterError(f"Need b > a, got a={a}, b={b}")
    return a * m / (b - a)


def heat_observability_cost(
    gamma: float,
    a: Sequence[float],
    T: float,
    s: float,
    constants: Sequence[float] = (1.0, 1.0, 1.0, math.e),
) -> float:
    """
    C1 / (gamma^{C2 n} T) * exp(C3 (|a|_1 ln(C4^n / gamma))^{2s/(2s-1)} / T^{1/(2s-1)})
    for the fractional heat equation, s > 1/2, with user-supplied C_i.
    """
    if not s > 0.5:
        raise ParameterError(f"The fractional heat cost needs s > 1/2, got {s}")
    if not T > 0:
        raise ParameterError(f"T must be positive, got {T}")
    c1, c2, c3, c4 = constants
    n = len(a)
    spread = sum(a) * math.log(c4 ** n / gamma)
    exponent = c3 * max(spread, 0.0) ** (2 * s / (2 * s - 1)) / T ** (1 / (2 * s - 1))
    return c1 / (gamma ** (c2 * n) * T) * math.exp(exponent)


# Spectral inequality and dissipation

def spectral_ratio_scan(
    omega: ThickSetSpec,
    k_values: Sequence[float],
    samples: int,
    seed: int = 0,
    K: float = math.e,
    max_retries: int = 10,
) -> ScanReport:
    """Max of ||pi_k u|| / ||pi_k u||_omega over random band-limited u, per k."""
    verdict = thickness_check(omega)
    if not verdict.thick:
        logging.warning("Spectral ratio scan on a set that fails the thickness check")
    rng = np.random.default_rng(seed)
    maxima, minima = [], []
    for k in k_values:
        ratios = []
        for _ in range(samples):
            for _ in range(max_retries):
                u = band_limited_field(omega.grid, rng, k)
                restricted = l2_norm_on(u, omega.indicator)
                if restricted > 0:
                    break
            else:
                raise ControlError(f"Restricted norm vanished {max_retries} times at k={k}")
            ratios.append(l2_norm(u) / restricted)
        maxima.append(max(ratios))
        minima.append(min(ratios))

    slope, intercept, residual = fit_line(k_values, np.log(maxima))
    c1 = kovrijkine_c1(omega.gamma, omega.a, K)
    below_one = [k for k, low in zip(k_values, minima) if low < 1 - 1e-12]
    passed = bool(np.isfinite(slope)) and slope <= c1 and not below_one
    logging.info(f"Spectral ratio scan: log-growth slope {slope:.4f}, c1 = {c1:.4f}")
    return ScanReport(
        name="spectral_ratio",
        abscissae=[float(k) for k in k_values],
        values=maxima,
        slope=slope,
        intercept=intercept,
        residual=residual,
        theoretical_slope=None,
        tolerance=c1,
        passed=passed,
        window=[float(min(k_values)), float(max(k_values))],
        extras={"c1": c1, "K": K, "thick": verdict.thick, "min_ratios": minima,
                "ratios_below_one": below_one},
    )


def tail_norm(u: Field, k: float) -> float:
    """||(1 - pi_k) u|| with pi_k the cube cutoff [-k, k]^n."""
    inside = cube_cutoff(k)
    return weighted_spectral_norm(dft(u), lambda xi: 1.0 - inside(xi))


def _c2_envelope(points: list[tuple[float, float]]) -> float:
    """Largest c in (0, 1] with ratio <= exp(-c X) / c at every (X, ratio) point."""
    if not points:
        return float("nan")

    def admissible(c: float) -> bool:
        return all(ratio <= math.exp(-c * X) / c for X, ratio in points)

    if admissible(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mid > 0 and admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def dissipation_scan(
    model: OUModel,
    ks: KalmanStructure,
    u0: Field,
    k_values: Sequence[float],
    times: Sequence[float],
    floor: float = 1e-14,
    residual_tolerance: float = 0.05,
    quad_nodes: int = 32,
    interp_order: int = 5,
) -> ScanReport:
    """
    High-frequency tails ||(1 - pi_k) e^{-tP_co} u0|| over a (t, k) table.

    Fits log tail against k^{2s} at fixed t and against t^m at fixed k,
    m = 1 + 2rs, and reports the c2 lower envelope.
    """
    s = model.s
    m = characteristic_exponents(ks, s).dissipation_exponent
    nyquist = min(math.pi * count / length for length, count in zip(u0.grid.L, u0.grid.N))
    if max(k_values) >= nyquist:
        raise ParameterError(f"k up to {max(k_values)} exceeds the grid Nyquist frequency {nyquist:.3f}")
    times = [float(t) for t in times]
    norm0 = l2_norm(u0)

    tails = np.full((len(times), len(k_values)), np.nan)
    excluded = []
    for i, t in enumerate(times):
        evolved = propagate(build_plan(model, t, u0.grid, PropagationMode.NORMALIZED, quad_nodes, interp_order), u0)
        for j, k in enumerate(k_values):
            tail = tail_norm(evolved, k)
            if tail < floor:
                excluded.append({"t": t, "k": float(k), "tail": tail})
                continue
            tails[i, j] = tail
    if excluded:
        logging.info(f"Dissipation scan: {len(excluded)} point(s) below the {floor:.0e} floor excluded")

    slopes_by_t = {}
    for i, t in enumerate(times):
        keep = ~np.isnan(tails[i])
        if np.count_nonzero(keep) >= 2:
            slopes_by_t[t] = fit_line(np.asarray(k_values, dtype=float)[keep] ** (2 * s), np.log(tails[i, keep]))[0]
    slopes_by_k, residuals_by_k = {}, {}
    for j, k in enumerate(k_values):
        keep = ~np.isnan(tails[:, j])
        if np.count_nonzero(keep) >= 2:
            slope, _, residual = fit_line(np.asarray(times)[keep] ** m, np.log(tails[keep, j]))
            slopes_by_k[float(k)] = slope
            residuals_by_k[float(k)] = residual

    positive = [(t, v) for t, v in slopes_by_t.items() if t > 0]
    negative = all(v < 0 for _, v in positive)
    increasing = all(b[1] <= a[1] for a, b in zip(positive, positive[1:]))
    linear = all(res < residual_tolerance for res in residuals_by_k.values())
    points = [
        (times[i] ** m * float(k_values[j]) ** (2 * s), tails[i, j] / norm0)
        for i in range(len(times)) for j in range(len(k_values))
        if not np.isnan(tails[i, j])
    ]
    c2 = _c2_envelope(points)

    first = min(slopes_by_k) if slopes_by_k else None
    fit = (slopes_by_k.get(first, float("nan")), float("nan"), residuals_by_k.get(first, float("nan")))
    logging.info(f"Dissipation scan: m = {m}, c2 envelope {c2:.4g}, "
                 f"negative={negative}, increasing={increasing}, linear={linear}")
    return ScanReport(
        name="dissipation",
        abscissae=times,
        values=[float(v) for v in tails[:, 0]],
        slope=fit[0],
        intercept=fit[1],
        residual=fit[2],
        theoretical_slope=None,
        tolerance=residual_tolerance,
        passed=negative and increasing and linear,
        window=[min(times), max(times)],
        excluded=[p["t"] for p in excluded],
        extras={
            "m": m,
            "k_values": [float(k) for k in k_values],
            "tails": [[None if np.isnan(v) else float(v) for v in row] for row in tails],
            "slopes_by_t": {str(t): v for t, v in slopes_by_t.items()},
            "slopes_by_k": {str(k): v for k, v in slopes_by_k.items()},
            "residuals_by_k": {str(k): v for k, v in residuals_by_k.items()},
            "c2": c2,
        },
    )


# Observability

def _trapezoid_weights(T: float, nt: int) -> np.ndarray:
    weights = np.full(nt + 1, T / nt)
    weights[[0, -1]] *= 0.5
    return weights


def _normalized_plans(model: OUModel, grid: Grid, times: Sequence[float], mode: PropagationMode,
                      quad_nodes: int, interp_order: int) -> list:
    return [build_plan(model, t, grid, mode, quad_nodes, interp_order) for t in times]


def observation_ratio(plans: list, terminal_plan, g0: Field, indicator: np.ndarray, weights: np.ndarray) -> float:
    """||e^{-TP_co} g0||^2 / int_0^T ||e^{-tP_co} g0||^2_omega dt."""
    observed = sum(w * l2_norm_on(propagate(plan, g0), indicator) ** 2 for w, plan in zip(weights, plans))
    if observed <= 0:
        raise ControlError("Observation integral vanished; omega sees nothing of the probe")
    return l2_norm(propagate(terminal_plan, g0)) ** 2 / observed


def observability_lower_bound(
    model: OUModel,
    T: float,
    omega: ThickSetSpec,
    probes: int = 8,
    nt: int = 64,
    seed: int = 0,
    reseed_rounds: int = 2,
    quad_nodes: int = 32,
    interp_order: int = 5,
) -> float:
    """
    Empirical lower bound on the observability constant of e^{-tP_co} from omega.

    Args:
        model: The (B, Q, s) triple.
        T: Horizon.
        omega: Observation set.
        probes: Random probes per round.
        nt: Trapezoid steps on [0, T].
        seed: Seed of the probe generator.
        reseed_rounds: Rounds of translated copies of the current worst probe.

    Returns:
        max over probes of the terminal-to-observed energy ratio.
    """
    if not T > 0:
        raise ControlError(f"Horizon must be positive, got {T}")
    if not np.any(omega.indicator):
        raise ControlError("Observation set is empty")
    if model.s <= 0.5:
        logging.warning(f"s = {model.s} <= 1/2: observability run is exploratory")
    grid = omega.grid
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, T, nt + 1)
    weights = _trapezoid_weights(T, nt)
    plans = _normalized_plans(model, grid, times, PropagationMode.NORMALIZED, quad_nodes, interp_order)
    terminal = plans[-1]

    spread = min(grid.L) / 4
    candidates = [white_noise_field(grid, rng, taper=min(grid.L) / 8)]
    for _ in range(max(probes - 1, 0)):
        center = rng.uniform(-spread, spread, grid.n)
        candidates.append(gaussian_field(grid, center, width=1.0))

    best_ratio, best_probe = -np.inf, None
    for round_index in range(reseed_rounds + 1):
        for probe in candidates:
            ratio = observation_ratio(plans, terminal, probe, omega.indicator, weights)
            if ratio > best_ratio:
                best_ratio, best_probe = ratio, probe
        logging.debug(f"Observability round {round_index}: best ratio {best_ratio:.4e}")
        shifts = rng.integers(-np.asarray(grid.N) // 8, np.asarray(grid.N) // 8 + 1, size=(probes, grid.n))
        candidates = [
            Field(grid, np.roll(best_probe.values, tuple(shift), axis=tuple(range(grid.n))))
            for shift in shifts
        ]
    logging.info(f"Observability lower bound at T={T}: {best_ratio:.6e}")
    return float(best_ratio)


# Penalized HUM

class _GramianOperator:
    """Lambda g = sum_i w_i e^{-(T-t_i)P_co} 1_omega e^{-(T-t_i)P_co*} g."""

    def __init__(self, problem: HumProblem):
        self.grid = problem.omega.grid
        self.indicator = problem.omega.indicator
        durations = [problem.T - t for t in np.linspace(0.0, problem.T, problem.nt + 1)]
        durations[-1] = 0.0
        self.weights = _trapezoid_weights(problem.T, problem.nt)
        args = (problem.quad_nodes, problem.interp_order)
        self.forward = _normalized_plans(problem.model, self.grid, durations, PropagationMode.NORMALIZED, *args)
        self.adjoint = _normalized_plans(problem.model, self.grid, durations, PropagationMode.NORMALIZED_ADJOINT, *args)

    def controls(self, g_T: Field) -> list[Field]:
        """1_omega g(t_i) with g(t) = e^{-(T-t)P_co*} g_T."""
        return [Field(self.grid, self.indicator * propagate(plan, g_T).values) for plan in self.adjoint]

    def duhamel(self, controls: list[Field]) -> np.ndarray:
        total = np.zeros(self.grid.shape, dtype=np.complex128)
        for weight, plan, control in zip(self.weights, self.forward, controls):
            total += weight * propagate(plan, control).values
        return total

    def apply(self, g: Field) -> np.ndarray:
        return self.duhamel(self.controls(g))


def _inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(grid.cell_volume * np.sum(a * np.conj(b))))


def hum_solve(problem: HumProblem) -> HumSolution:
    """
    Penalized HUM: solve (Lambda + eps I) g_T = -e^{-TP_co} f0 by conjugate
    gradient, then build the control 1_omega g(t) and the terminal state.

    Returns:
        HumSolution; CG stagnation gives converged=False instead of raising.
    """
    if not (problem.T > 0 and problem.epsilon > 0 and problem.model.s > 0):
        raise ControlError("HUM needs T, epsilon and s positive")
    if problem.nt < 32:
        raise ControlError(f"HUM needs nt >= 32, got {problem.nt}")
    if problem.f0.grid != problem.omega.grid:
        raise ControlError("f0 and omega live on different grids")
    exploratory = problem.model.s <= 0.5
    if exploratory:
        logging.warning(f"s = {problem.model.s} <= 1/2: HUM run is exploratory")

    grid = problem.omega.grid
    times = [float(t) for t in np.linspace(0.0, problem.T, problem.nt + 1)]
    operator = _GramianOperator(problem)
    terminal_plan = build_plan(problem.model, problem.T, grid, PropagationMode.NORMALIZED,
                               problem.quad_nodes, problem.interp_order)
    free = propagate(terminal_plan, problem.f0).values
    b = -free
    b_norm = math.sqrt(max(_inner(grid, b, b), 0.0))
    eps = problem.epsilon

    def A(x: np.ndarray) -> np.ndarray:
        return operator.apply(Field(grid, x)) + eps * x

    x = np.zeros(grid.shape, dtype=np.complex128)
    iterations, converged = 0, True
    history = [b_norm]
    if b_norm > 0:
        converged = False
        r = b.copy()
        p = r.copy()
        rs = _inner(grid, r, r)
        options = problem.cg
        for iterations in range(1, options.max_iter + 1):
            Ap = A(p)
            alpha = rs / _inner(grid, p, Ap)
            x = x + alpha * p
            r = r - alpha * Ap
            rs_new = _inner(grid, r, r)
            history.append(math.sqrt(max(rs_new, 0.0)))
            logging.debug(f"HUM CG iteration {iterations}: residual {history[-1] / b_norm:.3e}")
            if history[-1] <= options.rtol * b_norm:
                converged = True
                break
            window = options.stall_window
            if iterations >= window and history[-1] > options.stall_factor * history[-1 - window]:
                logging.warning(f"HUM CG stagnated after {iterations} iterations")
                break
            p = r + (rs_new / rs) * p
            rs = rs_new

    g_T = Field(grid, x)
    controls = operator.controls(g_T)
    terminal_values = free + operator.duhamel(controls)
    if problem.f0.is_real:
        terminal_values = terminal_values.real
        g_T = Field(grid, x.real)
    terminal = Field(grid, terminal_values)
    residual_values = terminal.values + eps * g_T.values
    residual = math.sqrt(_inner(grid, residual_values, residual_values)) / b_norm if b_norm > 0 else 0.0

    weights = _trapezoid_weights(problem.T, problem.nt)
    energy = sum(w * l2_norm(c) ** 2 for w, c in zip(weights, controls))
    g_zero = propagate(operator.adjoint[0], g_T)
    J = 0.5 * energy + 0.5 * eps * l2_norm(g_T) ** 2 + float(np.real(l2_inner(problem.f0, g_zero)))

    terminal_norm, penalty_norm = l2_norm(terminal), eps * l2_norm(g_T)
    scale = max(terminal_norm, penalty_norm)
    identity_gap = abs(terminal_norm - penalty_norm) / scale if scale > 0 else 0.0
    logging.info(f"HUM: {iterations} CG iteration(s), ||f(T)|| = {terminal_norm:.4e}, "
                 f"eps ||g_T|| = {penalty_norm:.4e}, converged={converged}")
    if converged and identity_gap > 0.05:
        raise HumIdentityError(
            f"Optimality identity violated: ||f(T)|| = {terminal_norm:.4e}, "
            f"eps ||g_T|| = {penalty_norm:.4e} (gap {identity_gap:.2%})"
        )
    return HumSolution(
        times=times,
        controls=controls,
        terminal_state=terminal,
        g_T=g_T,
        iterations=iterations,
        J=J,
        residual=residual,
        identity_gap=identity_gap,
        converged=converged,
        exploratory=exploratory,
        residual_history=[h / b_norm for h in history] if b_norm > 0 else [],
    )


# Counterexample for non-thick sets

def fractional_heat_model(n: int, s: float) -> OUModel:
    """B = 0, Q = 2^{1/s} I: the semigroup of (-Laplacian)^s."""
    return OUModel(B=np.zeros((n, n)), Q=psd_sqrt(2.0 ** (1.0 / s) * np.eye(n)), s=s)


def nonthick_counterexample(
    s: float,
    omega: ThickSetSpec,
    T: float,
    k_values: Sequence[int],
    centers: Optional[np.ndarray] = None,
    nt: int = 64,
    unit: float = 1.0,
    max_gap_fraction: float = 0.05,
    quad_nodes: int = 32,
    interp_order: int = 5,
) -> ScanReport:
    """
    Observation ratios int_0^T ||g_k||^2_omega dt / ||g_k(T)||^2 of translated
    fractional heat kernels g_k(0) = F^{-1}(e^{-i<x_k, xi>} e^{-|xi|^{2s}}).
    """
    grid = omega.grid
    if centers is None:
        centers = find_gap_centers(grid, omega.indicator, k_values, unit, max_gap_fraction)
    centers = np.asarray(centers, dtype=float)
    if centers.shape != (len(k_values), grid.n):
        raise ThicknessError(f"Need one center per k, got shape {centers.shape}")

    model = fractional_heat_model(grid.n, s)
    times = np.linspace(0.0, T, nt + 1)
    weights = _trapezoid_weights(T, nt)
    plans = _normalized_plans(model, grid, times, PropagationMode.FORWARD, quad_nodes, interp_order)
    xi = grid.frequencies()
    profile = np.exp(-np.sum(xi * xi, axis=-1) ** s)

    ratios, terminal_norms = [], []
    for center in centers:
        spectrum = profile * np.exp(-1j * (xi @ center))
        g0 = idft(Field(grid, spectrum, Domain.SPECTRAL))
        snapshots = [propagate(plan, g0) for plan in plans]
        observed = sum(w * l2_norm_on(g, omega.indicator) ** 2 for w, g in zip(weights, snapshots))
        terminal = l2_norm(snapshots[-1])
        terminal_norms.append(terminal)
        ratios.append(observed / terminal ** 2)

    decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    slope, intercept, residual = fit_line(np.log(k_values), np.log(np.maximum(ratios, 1e-300)))
    spread = (max(terminal_norms) - min(terminal_norms)) / max(terminal_norms)
    logging.info(f"Counterexample: ratio drop {ratios[0] / ratios[-1]:.3e} over k, "
                 f"terminal norm spread {spread:.2e}")
    return ScanReport(
        name="counterexample",
        abscissae=[float(k) for k in k_values],
        values=[float(v) for v in ratios],
        slope=slope,
        intercept=intercept,
        residual=residual,
        theoretical_slope=None,
        tolerance=None,
        passed=decreasing,
        window=[float(min(k_values)), float(max(k_values))],
        extras={
            "centers": centers.tolist(),
            "terminal_norms": terminal_norms,
            "terminal_norm_spread": spread,
            "drop": ratios[0] / ratios[-1],
        },
    )
