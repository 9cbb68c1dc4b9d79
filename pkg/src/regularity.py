"""
Quantitative smoothing diagnostics: the M^s_t functional, Gevrey seminorm
rates, Gramian projection rates, subelliptic ratios and the power
inequalities behind the anisotropic estimates.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import KalmanConditionError, ParameterError
from .field import (
    boundary_mass_fraction,
    dft,
    japanese_bracket,
    l2_norm,
    refine_field,
    weighted_spectral_norm,
)
from .kalman import require_kalman, weight_matrix
from .matops import gramian, mat_exp
from .models import (
    Field,
    GevreyReport,
    InequalityReport,
    KalmanStructure,
    MstResult,
    OUModel,
    PropagationMode,
    ScanReport,
    SphereOptions,
    SubellipticReport,
    WeightKind,
)
from .propagator import OrbitQuadrature, apply_drift, apply_generator, build_plan, propagate
from .utils import fit_line

JENSEN_SLACK = 1e-10
RATIO_BOUND = 10.0

# log(rho) grid for the radial maximization of <W rho sigma>^q decay(rho sigma)
_LOG_RHO = np.linspace(np.log(1e-4), np.log(1e14), 721)


def sphere_sample(n: int, count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Quasi-uniform points on the unit sphere of R^n, shape (count', n)."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        angles = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        polar = np.arccos(1 - 2 * i / count)
        azimuth = np.pi * (1 + 5 ** 0.5) * i
        return np.stack([
            np.sin(polar) * np.cos(azimuth),
            np.sin(polar) * np.sin(azimuth),
            np.cos(polar),
        ], axis=1)
    rng = rng or np.random.default_rng(0)
    points = rng.standard_normal((count, n))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def _sphere_maximize(
    objective: Callable[[np.ndarray], np.ndarray],
    n: int,
    options: SphereOptions,
) -> tuple[float, np.ndarray, int]:
    """Dense sampling followed by Nelder-Mead from the best starts; never returns less than the best sample."""
    points = sphere_sample(n, options.points, np.random.default_rng(options.seed))
    values = objective(points)
    order = np.argsort(values)[::-1]
    best_value = float(values[order[0]])
    best_point = points[order[0]]
    iterations = 0
    if not options.refine or n == 1:
        return best_value, best_point, iterations

    def negative(x: np.ndarray) -> float:
        norm = np.linalg.norm(x)
        if norm == 0:
            return np.inf
        return -float(objective((x / norm)[None, :])[0])

    for index in order[:options.starts]:
        start = points[index]
        result = scipy.optimize.minimize(
            negative,
            start,
            method="Nelder-Mead",
            options={
                "xatol": 1e-10,
                "fatol": options.stall_rtol * abs(best_value),
                "maxiter": options.max_iter,
                "initial_simplex": _simplex_around(start, 2 * np.pi / options.points),
            },
        )
        iterations += int(result.nit)
        if -result.fun > best_value:
            best_value = float(-result.fun)
            best_point = result.x / np.linalg.norm(result.x)
    return best_value, best_point, iterations


def _simplex_around(start: np.ndarray, size: float) -> np.ndarray:
    n = start.size
    simplex = np.tile(start, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += size
    return simplex


def _kalman_engine(model: OUModel, ks: KalmanStructure, t: float, quad_nodes: int) -> OrbitQuadrature:
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    if not ks.holds:
        raise KalmanConditionError(
            "M^s_t needs the Kalman rank condition: otherwise the L^{2s} average "
            "vanishes on a nonzero direction and the ratio is undefined"
        )
    return OrbitQuadrature(model.B, model.Q.sqrt, t, quad_nodes)


def _mst_values(engine: OrbitQuadrature, s: float, sigmas: np.ndarray) -> np.ndarray:
    numerator = engine.integrate(sigmas, 2.0)
    denominator = engine.integrate(sigmas, 2.0 * s)
    return np.sqrt(numerator) * denominator ** (-1.0 / (2 * s))


def mst_direction(model: OUModel, ks: KalmanStructure, t: float, sigma: np.ndarray, quad_nodes: int = 32) -> float:
    """M^s_{t, sigma} for one unit direction."""
    engine = _kalman_engine(model, ks, t, quad_nodes)
    sigma = np.asarray(sigma, dtype=float)
    return float(_mst_values(engine, model.s, (sigma / np.linalg.norm(sigma))[None, :])[0])


def mst_asymptotic_constant(model: OUModel, sigma: np.ndarray, tol: float = 1e-12) -> float:
    """Small-time limit of M^s_{t,sigma} / t^{1/2 - 1/(2s)}."""
    s = model.s
    vector = np.asarray(sigma, dtype=float)
    image = model.Q.sqrt @ vector
    for k in range(model.n):
        if np.linalg.norm(image) > tol * max(1.0, np.linalg.norm(vector)):
            return (1 + 2 * k * s) ** (1 / (2 * s)) / (1 + 2 * k) ** 0.5
        vector = model.B.T @ vector
        image = model.Q.sqrt @ vector
    raise KalmanConditionError(f"Direction {np.asarray(sigma).tolist()} is never seen by Q^(1/2)(B^T)^k")


def mst(
    model: OUModel,
    ks: KalmanStructure,
    t: float,
    options: SphereOptions = SphereOptions(),
    quad_nodes: int = 32,
) -> MstResult:
    """
    sup over the unit sphere of M^s_{t,sigma}.

    Args:
        model: The (B, Q, s) triple; must satisfy the Kalman condition.
        ks: Kalman structure of the model.
        t: Time, t > 0.
        options: Sphere sampling and refinement controls.

    Returns:
        MstResult with the maximizing direction.
    """
    engine = _kalman_engine(model, ks, t, quad_nodes)
    value, direction, iterations = _sphere_maximize(
        lambda sigmas: _mst_values(engine, model.s, sigmas), model.n, options
    )
    return MstResult(
        t=float(t),
        s=model.s,
        value=value,
        argmax=direction / np.linalg.norm(direction),
        sampling_density=len(sphere_sample(model.n, options.points, np.random.default_rng(options.seed))),
        iterations=iterations,
    )


def mst_scan(
    model: OUModel,
    ks: KalmanStructure,
    times: Sequence[float],
    options: SphereOptions = SphereOptions(),
    tolerance: float = 0.02,
    quad_nodes: int = 32,
) -> ScanReport:
    """Log-log slope of M^s_t against 1/2 - 1/(2s), plus the one-sided Jensen bound."""
    s = model.s
    exponent = 0.5 - 1.0 / (2 * s)
    results = [mst(model, ks, t, options, quad_nodes) for t in times]
    values = [r.value for r in results]
    violations = []
    for t, value in zip(times, values):
        reference = t ** exponent
        if s >= 1 and value > reference * (1 + JENSEN_SLACK):
            violations.append(t)
        if s <= 1 and value < reference * (1 - JENSEN_SLACK):
            violations.append(t)
    slope, intercept, residual = fit_line(np.log(times), np.log(values))
    passed = abs(slope - exponent) <= tolerance and not violations
    logging.info(f"M^s_t scan: slope {slope:.4f} (expected {exponent:.4f}), "
                 f"{len(violations)} Jensen violation(s)")
    return ScanReport(
        name="mst",
        abscissae=[float(t) for t in times],
        values=values,
        slope=slope,
        intercept=intercept,
        residual=residual,
        theoretical_slope=exponent,
        tolerance=tolerance,
        passed=passed,
        window=[float(min(times)), float(max(times))],
        extras={
            "jensen_violations": violations,
            "argmax": [r.argmax.tolist() for r in results],
        },
    )


def _log_peak(I: np.ndarray, a: np.ndarray, q: float, s: float) -> np.ndarray:
    """max over rho >= 0 of (q/2) log(1 + a rho^2) - I rho^{2s} / 2, per direction."""
    rho = np.exp(_LOG_RHO)
    h = (q / 2) * np.log1p(a[:, None] * rho ** 2) - 0.5 * I[:, None] * rho ** (2 * s)
    return np.maximum(np.max(h, axis=1), 0.0)


def _log_peak_refined(I: float, a: float, q: float, s: float) -> float:
    coarse = float(_log_peak(np.array([I]), np.array([a]), q, s)[0])
    rho = np.exp(_LOG_RHO)
    h = (q / 2) * np.log1p(a * rho ** 2) - 0.5 * I * rho ** (2 * s)
    i = int(np.argmax(h))
    lo, hi = _LOG_RHO[max(i - 1, 0)], _LOG_RHO[min(i + 1, len(_LOG_RHO) - 1)]
    result = scipy.optimize.minimize_scalar(
        lambda x: -((q / 2) * np.log1p(a * np.exp(2 * x)) - 0.5 * I * np.exp(2 * s * x)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(coarse, float(-result.fun))


def multiplier_sup(
    model: OUModel,
    ks: KalmanStructure,
    W: np.ndarray,
    q: float,
    t: float,
    options: SphereOptions = SphereOptions(),
    quad_nodes: int = 32,
) -> float:
    """
    sup over xi of <W xi>^q exp(-1/2 int_0^t |Q^{1/2} e^{tau B^T} xi|^{2s} dtau).

    Times e^{Tr(B)t/2} this is the operator norm of <W D>^q e^{-tP} on L^2.
    """
    if q == 0:
        return 1.0
    engine = _kalman_engine(model, ks, t, quad_nodes)
    s = model.s

    def peak(sigmas: np.ndarray) -> np.ndarray:
        I = engine.integrate(sigmas, 2 * s)
        image = sigmas @ W.T
        return _log_peak(I, np.sum(image * image, axis=1), q, s)

    _, direction, _ = _sphere_maximize(peak, model.n, options)
    I = float(engine.integrate(direction[None, :], 2 * s)[0])
    a = float(np.sum((W @ direction) ** 2))
    return float(np.exp(_log_peak_refined(I, a, q, s)))


def grid_resolution_time(model: OUModel, grid_max_frequency: float, k: int) -> float:
    """Time below which the k-th weighted seminorm is truncated by the grid."""
    return grid_max_frequency ** (-1.0 / (1.0 / (2 * model.s) + k))


def gevrey_scan(
    model: OUModel,
    ks: KalmanStructure,
    k: int,
    q: float,
    u0: Field,
    times: Sequence[float],
    weight: WeightKind = WeightKind.PROJECTION,
    options: SphereOptions = SphereOptions(),
    tolerance: float = 0.1,
    quad_nodes: int = 32,
    interp_order: int = 5,
) -> GevreyReport:
    """
    Gevrey seminorm scan of ||<W_k D>^q e^{-tP} u0||.

    The data series reports the seminorm of u0 and the bounded-ratio check
    over the grid window. The rate series fits the log-log slope of the
    worst-case multiplier (operator norm) against -q(1/(2s) + k).
    """
    r = require_kalman(ks, "Gevrey scan")
    if k < 0 or k > r:
        raise ParameterError(f"Index k={k} must lie in 0..{r}")
    if q < 0:
        raise ParameterError(f"q must be nonnegative, got {q}")
    times = [float(t) for t in times]
    s = model.s
    exponent = q * (1.0 / (2 * s) + k)
    W = weight_matrix(ks, model.B, model.Q, k, weight == WeightKind.MATRIX)
    bracket = japanese_bracket(W, q)
    norm0 = l2_norm(u0)
    t_res = grid_resolution_time(model, u0.grid.max_frequency, k)

    seminorms, rates = [], []
    for t in times:
        plan = build_plan(model, t, u0.grid, PropagationMode.FORWARD, quad_nodes, interp_order)
        evolved = propagate(plan, u0)
        seminorms.append(weighted_spectral_norm(dft(evolved), bracket))
        rates.append(multiplier_sup(model, ks, W, q, t, options, quad_nodes))

    window = [t for t in times if t >= 5 * t_res]
    excluded = [t for t in times if t < 5 * t_res]
    if excluded:
        logging.info(f"Gevrey scan: {len(excluded)} time(s) below 5 x grid-resolution time {t_res:.3e} excluded")
    in_window = [i for i, t in enumerate(times) if t >= 5 * t_res]
    ratios = [
        seminorms[i] * times[i] ** exponent * np.exp(-0.5 * model.trace * times[i]) / norm0
        for i in in_window
    ]
    bounded = not ratios or max(ratios) <= RATIO_BOUND * float(np.median(ratios))

    if len(in_window) >= 2:
        data_fit = fit_line(np.log([times[i] for i in in_window]),
                            np.log([seminorms[i] for i in in_window]))
    else:
        data_fit = (float("nan"), float("nan"), float("nan"))
    data = ScanReport(
        name="gevrey_data",
        abscissae=times,
        values=seminorms,
        slope=data_fit[0],
        intercept=data_fit[1],
        residual=data_fit[2],
        theoretical_slope=-exponent,
        tolerance=None,
        passed=bounded,
        window=[min(window), max(window)] if window else [],
        excluded=excluded,
        extras={"ratios": ratios, "resolution_time": t_res},
    )
    slope, intercept, residual = fit_line(np.log(times), np.log(rates))
    rate = ScanReport(
        name="gevrey_rate",
        abscissae=times,
        values=rates,
        slope=slope,
        intercept=intercept,
        residual=residual,
        theoretical_slope=-exponent,
        tolerance=tolerance,
        passed=abs(slope + exponent) <= tolerance,
        window=[min(times), max(times)],
    )
    logging.info(f"Gevrey scan k={k}, q={q}: rate slope {slope:.4f} (expected {-exponent:.4f}), "
                 f"data slope {data_fit[0]:.4f}, bounded={bounded}")
    return GevreyReport(k=k, q=q, weight=weight, data=data, rate=rate, ratios=ratios, bounded=bounded)


def gramian_projection_scan(
    model: OUModel,
    ks: KalmanStructure,
    k: int,
    times: Sequence[float],
    tolerance: float = 0.05,
    quad_nodes: int = 32,
) -> ScanReport:
    """Slope of ||Pi_k e^{-tB^T} Q_t^{-1/2}|| against -(1/2 + k)."""
    r = require_kalman(ks, "Gramian projection scan")
    if k < 0 or k > r:
        raise ParameterError(f"Index k={k} must lie in 0..{r}")
    values = []
    for t in times:
        Q_t = gramian(model.B, model.Q, t, quad_nodes)
        eigenvalues, vectors = scipy.linalg.eigh(Q_t.base)
        if np.min(eigenvalues) <= Q_t.eig_tol:
            raise KalmanConditionError(f"Gramian is singular at t={t}")
        inverse_root = (vectors / np.sqrt(eigenvalues)) @ vectors.T
        values.append(float(np.linalg.norm(ks.incr[k] @ mat_exp(model.B.T, -t) @ inverse_root, 2)))
    slope, intercept, residual = fit_line(np.log(times), np.log(values))
    expected = -(0.5 + k)
    return ScanReport(
        name="gramian_projection",
        abscissae=[float(t) for t in times],
        values=values,
        slope=slope,
        intercept=intercept,
        residual=residual,
        theoretical_slope=expected,
        tolerance=tolerance,
        passed=abs(slope - expected) <= tolerance,
        window=[float(min(times)), float(max(times))],
    )


def _subelliptic_terms(model: OUModel, ks: KalmanStructure, u: Field, matrix_form: bool) -> tuple[float, float]:
    s = model.s
    r = ks.r
    spectrum = dft(u)
    lhs = 0.0
    for k in range(r + 1):
        W = weight_matrix(ks, model.B, model.Q, k, matrix_form)
        lhs += weighted_spectral_norm(spectrum, japanese_bracket(W, 2 * s / (1 + 2 * k * s)))
    rhs = l2_norm(apply_generator(model, u)) + l2_norm(u)
    drift = l2_norm(apply_drift(model, u))
    return lhs / rhs, drift / rhs


def subelliptic_report(
    model: OUModel,
    ks: KalmanStructure,
    fields: Sequence[Field],
    weight: WeightKind = WeightKind.PROJECTION,
    check_resolution: bool = True,
    support_tol: float = 1e-10,
) -> SubellipticReport:
    """
    Ratios sum_k ||<W_k D>^{2s/(1+2ks)} u|| / (||Pu|| + ||u||) and
    ||<Bx, grad> u|| / (||Pu|| + ||u||) over a family of fields.
    """
    require_kalman(ks, "Subelliptic report")
    matrix_form = weight == WeightKind.MATRIX
    sub, drift, excluded, kept = [], [], [], []
    for index, u in enumerate(fields):
        mass = boundary_mass_fraction(u)
        if mass > support_tol:
            logging.warning(f"Subelliptic report: field {index} excluded, boundary mass {mass:.3e}")
            excluded.append({"index": index, "boundary_mass": mass})
            continue
        a, b = _subelliptic_terms(model, ks, u, matrix_form)
        sub.append(a)
        drift.append(b)
        kept.append(u)

    max_sub = max(sub) if sub else float("nan")
    max_drift = max(drift) if drift else float("nan")
    report = SubellipticReport(
        subelliptic_ratios=sub,
        drift_ratios=drift,
        excluded=excluded,
        max_subelliptic=max_sub,
        max_drift=max_drift,
    )
    if check_resolution and kept:
        fine = [_subelliptic_terms(model, ks, refine_field(u), matrix_form) for u in kept]
        report.refined_max_subelliptic = max(a for a, _ in fine)
        report.refined_max_drift = max(b for _, b in fine)
        report.resolution_change = max(
            abs(report.refined_max_subelliptic - max_sub) / max_sub,
            abs(report.refined_max_drift - max_drift) / max_drift if max_drift > 0 else 0.0,
        )
    return report


def _within(lhs: np.ndarray, rhs: np.ndarray, slack: float) -> np.ndarray:
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return lhs <= rhs + slack * scale


def inequality_oracles(sample_count: int, seed: int = 0, slack: float = 1e-12) -> InequalityReport:
    """
    Randomized check of three power inequalities:

    - (a_1 + ... + a_r)^q <= r^{(q-1)_+} (a_1^q + ... + a_r^q)
    - 2^{-(q-1)_+} |xi|^q - |eta|^q <= |xi - eta|^q
    - ||xi|^q - |eta|^q| <= q 2^{(q-2)_+} (|xi - eta|^q + min(|xi|, |eta|)^{q-1} |xi - eta|)
      for q > 1, and <= |xi - eta|^q for q <= 1
    """
    if sample_count < 1:
        raise ParameterError(f"sample_count must be >= 1, got {sample_count}")
    rng = np.random.default_rng(seed)
    violations = {"power_sum": 0, "reverse_triangle": 0, "difference": 0}
    worst = {key: 0.0 for key in violations}

    def record(key: str, ok: bool, lhs: float, rhs: float) -> None:
        if not ok:
            violations[key] += 1
        worst[key] = max(worst[key], float(lhs - rhs))

    for _ in range(sample_count):
        q = float(rng.uniform(0.0, 5.0)) or 5.0
        r = int(rng.integers(1, 7))
        n = int(rng.integers(1, 5))

        a = rng.exponential(1.0, r) * np.exp(rng.uniform(-3, 3))
        lhs = np.sum(a) ** q
        rhs = r ** max(q - 1, 0) * np.sum(a ** q)
        record("power_sum", bool(_within(np.array(lhs), np.array(rhs), slack)), lhs, rhs)

        xi = rng.standard_normal(n) * np.exp(rng.uniform(-3, 3))
        eta = rng.standard_normal(n) * np.exp(rng.uniform(-3, 3))
        nx, ne, nd = np.linalg.norm(xi), np.linalg.norm(eta), np.linalg.norm(xi - eta)

        lhs = 2.0 ** (-max(q - 1, 0)) * nx ** q - ne ** q
        rhs = nd ** q
        record("reverse_triangle", bool(_within(np.array(lhs), np.array(rhs), slack)), lhs, rhs)

        lhs = abs(nx ** q - ne ** q)
        if q > 1:
            rhs = q * 2.0 ** max(q - 2, 0) * (nd ** q + min(nx, ne) ** (q - 1) * nd)
        else:
            rhs = nd ** q
        record("difference", bool(_within(np.array(lhs), np.array(rhs), slack)), lhs, rhs)

    report = InequalityReport(samples=sample_count, violations=violations, worst=worst)
    logging.info(f"Inequality oracles: {report.total_violations} violation(s) in {sample_count} samples")
    return report
