"""
Command orchestration for the fractional Ornstein-Uhlenbeck toolkit.
"""

import logging
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from .config import ConfigLoader
from .control import (
    blob_indicator,
    doubling_gaps_indicator,
    find_gap_centers,
    full_indicator,
    heat_observability_cost,
    hum_solve,
    lebeau_robbiano_cost_exponent,
    load_bitmap,
    make_thick_set,
    nonthick_counterexample,
    observability_lower_bound,
    spectral_ratio_scan,
    stripes_indicator,
    thickness_check,
    dissipation_scan,
)
from .errors import ConfigError, FieldError, FouError, MatrixError, ParameterError
from .field import gaussian_field, l2_norm, set_fft_workers, wavepacket_field, white_noise_field
from .kalman import analyze_structure, characteristic_exponents, require_kalman
from .matops import as_square_matrix, psd_sqrt
from .models import (
    CgOptions,
    Field,
    Grid,
    HumProblem,
    OUModel,
    PropagationMode,
    RunStats,
    SphereOptions,
    ThickSetSpec,
    Verdict,
    WeightKind,
)
from .propagator import evolve_path
from .regularity import gevrey_scan, mst_scan, subelliptic_report
from .writers import ReportWriter, read_fouf

COMMANDS = (
    'analyze', 'evolve', 'gevrey', 'mst', 'dissipation', 'thickness', 'spectral',
    'observe', 'hum', 'counterexample', 'subelliptic', 'selftest',
)


def build_model(settings: dict[str, Any]) -> OUModel:
    """OUModel from a model section: a preset or explicit B and Q."""
    s = settings.get('s')
    if s is None or not s > 0:
        raise ParameterError(f"model.s must be positive, got {s}")
    preset = settings.get('preset')
    if preset == 'kolmogorov':
        pairs = int(settings.get('n', 1))
        zero, one = np.zeros((pairs, pairs)), np.eye(pairs)
        B = np.block([[zero, one], [zero, zero]])
        Q = 2.0 ** (1.0 / s) * np.block([[zero, zero], [zero, one]])
    elif preset == 'heat':
        dim = int(settings.get('n', 1))
        B = np.zeros((dim, dim))
        Q = 2.0 ** (1.0 / s) * np.eye(dim)
    elif preset is None:
        if settings.get('B') is None or settings.get('Q') is None:
            raise ConfigError("model needs either a preset or both B and Q")
        B = as_square_matrix(settings['B'], 'B')
        Q = as_square_matrix(settings['Q'], 'Q')
        if B.shape != Q.shape:
            raise MatrixError(f"B has shape {B.shape} but Q has shape {Q.shape}")
    else:
        raise ConfigError(f"Unknown model preset '{preset}' (expected kolmogorov or heat)")
    return OUModel(B=B, Q=psd_sqrt(Q), s=float(s))


def build_grid(settings: dict[str, Any], dim: int) -> Grid:
    """Grid from a grid section; scalars broadcast to every axis."""
    L = np.broadcast_to(np.asarray(settings['L'], dtype=float), (dim,))
    N = np.broadcast_to(np.asarray(settings['N']), (dim,))
    if any(float(v) != int(v) for v in N):
        raise FieldError(f"grid.N must be integers, got {settings['N']}")
    return Grid(L=tuple(L), N=tuple(int(v) for v in N))


def build_initial(grid: Grid, settings: dict[str, Any], rng: np.random.Generator) -> Field:
    """Initial field from an initial section."""
    kind = settings.get('kind', 'gaussian')
    if kind == 'gaussian':
        return gaussian_field(grid, settings.get('center'), settings['width'], settings['amplitude'])
    if kind == 'white_noise':
        return white_noise_field(grid, rng, settings.get('taper'))
    if kind == 'wavepackets':
        return wavepacket_field(grid, rng, settings['count'], settings['k_max'], settings['width'],
                                settings.get('spread'))
    if kind == 'file':
        field = read_fouf(Path(settings['path']))
        if field.grid != grid:
            raise FieldError(f"Initial field grid {field.grid} does not match configured grid {grid}")
        return field
    raise ConfigError(f"Unknown initial kind '{kind}'")


def build_omega(grid: Grid, settings: dict[str, Any]) -> tuple[ThickSetSpec, Optional[np.ndarray]]:
    """Observation set and, for doubling gaps, the gap centers."""
    kind = settings.get('kind', 'full')
    centers = None
    if kind == 'full':
        indicator = full_indicator(grid)
    elif kind == 'stripes':
        indicator = stripes_indicator(grid, settings['width'], settings['period'],
                                      settings['axis'], settings['offset'])
    elif kind == 'blob':
        indicator = blob_indicator(grid, settings.get('center', [0.0] * grid.n), settings['radius'])
    elif kind == 'doubling_gaps':
        indicator, centers = doubling_gaps_indicator(grid, settings['k_values'], settings['separator'],
                                                     settings['unit'], settings['axis'])
    elif kind == 'bitmap':
        indicator = load_bitmap(settings['path'], grid)
    else:
        raise ConfigError(f"Unknown omega kind '{kind}'")
    return make_thick_set(grid, indicator, settings['gamma'], settings['a']), centers


class Runner:
    """Runs one CLI command and collects its statistics."""

    def __init__(
        self,
        config: ConfigLoader,
        out_dir: Optional[str] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ):
        self.config = config
        self.output_settings = config.get_output_settings()
        if out_dir:
            self.output_settings['directory'] = out_dir
        self.seed = config.get_seed() if seed is None else int(seed)
        self.numerics = config.get_section('numerics')
        self.threads = threads if threads is not None else self.numerics.get('threads')
        self.writer = ReportWriter(self.output_settings)
        self.stats = RunStats(command='')
        self._model: Optional[OUModel] = None
        self._grid: Optional[Grid] = None

    @contextmanager
    def _stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.stats.timings[name] = round(time.perf_counter() - start, 6)

    @property
    def model(self) -> OUModel:
        if self._model is None:
            self._model = build_model(self.config.get_model_settings())
        return self._model

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            self._grid = build_grid(self.config.get_grid_settings(), self.model.n)
        return self._grid

    @property
    def plan_args(self) -> dict[str, int]:
        return {'quad_nodes': self.numerics['quad_nodes'], 'interp_order': self.numerics['interp_order']}

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def _structure(self):
        return analyze_structure(self.model.B, self.model.Q, self.numerics.get('rank_tol'))

    def _verdict(self, name: str, passed: bool, detail: str = '') -> None:
        self.stats.verdicts.append(Verdict(name=name, passed=bool(passed), detail=detail))
        logging.info(f"Verdict {name}: {'PASS' if passed else 'FAIL'} {detail}".rstrip())

    def _artifact(self, path: Path) -> None:
        self.stats.artifacts.append(path.name)

    def run(self, command: str) -> RunStats:
        """
        Run a command and write its manifest.

        Returns:
            RunStats whose exit_code follows the 0/1/2 contract.
        """
        self.stats = RunStats(command=command)
        handlers: dict[str, Callable[[], None]] = {name: getattr(self, f"_run_{name}") for name in COMMANDS}
        set_fft_workers(self.threads)
        try:
            if command not in handlers:
                raise ConfigError(f"Unknown command '{command}' (expected one of {', '.join(COMMANDS)})")
            logging.info(f"Starting command '{command}' with seed {self.seed}")
            with self._stage(command):
                handlers[command]()
        except (FouError, OSError, yaml.YAMLError) as e:
            code = e.code if isinstance(e, FouError) else 'IO'
            self.stats.errors.append({'code': code, 'message': str(e)})
            logging.error(f"Command '{command}' failed [{code}]: {e}")

        try:
            self._artifact(self.writer.write_manifest(self.stats, self.config.to_dict(), self.seed))
            self.writer.write_timings(self.stats)
        except FouError as e:
            self.stats.errors.append({'code': e.code, 'message': str(e)})
            logging.error(f"Could not write manifest: {e}")
        return self.stats

    # Commands

    def _run_analyze(self) -> None:
        ks = self._structure()
        result: dict[str, Any] = {'kalman': ks.to_dict(), 'trace': self.model.trace, 'n': self.model.n}
        if ks.holds:
            result['exponents'] = characteristic_exponents(ks, self.model.s).to_dict()
        self.stats.results['analysis'] = result
        self._artifact(self.writer.write_json('analysis', result))
        self._verdict('kalman_condition', ks.holds, f"r={ks.r}, ranks={list(ks.ranks)}")

    def _run_evolve(self) -> None:
        settings = self.config.get_section('evolve')
        u0 = build_initial(self.grid, self.config.get_section('initial'), self._rng())
        mode = PropagationMode(settings['mode'])
        path = evolve_path(self.model, self.grid, u0, settings['times'], mode, settings['chained'], **self.plan_args)
        self._artifact(self.writer.write_field('initial', u0))
        norm0 = l2_norm(u0)
        rows = []
        for i, (t, snapshot) in enumerate(zip(path.times, path.snapshots)):
            self._artifact(self.writer.write_field(f"evolve_{i:03d}", snapshot))
            rows.append((t, l2_norm(snapshot), mode.norm_bound(self.model.trace, t) * norm0))
        self._artifact(self.writer.write_csv('evolve_norms', ['t', 'norm', 'bound'], rows))
        self.stats.results['evolve'] = {'times': path.times, 'mode': mode.value, 'drift': path.drift}
        self._verdict('norm_bound', all(norm <= bound * (1 + 1e-8) for _, norm, bound in rows))

    def _sphere_options(self, settings: dict[str, Any]) -> SphereOptions:
        return SphereOptions(points=settings['points'], starts=settings['starts'], seed=self.seed)

    def _run_mst(self) -> None:
        settings = self.config.get_section('mst')
        ks = self._structure()
        require_kalman(ks, "mst")
        report = mst_scan(self.model, ks, settings['times'], self._sphere_options(settings),
                          settings['tolerance'], self.numerics['quad_nodes'])
        self._artifact(self.writer.write_scan(report))
        self.stats.results['mst'] = report.to_dict()
        self._verdict('mst_slope', report.passed,
                      f"slope={report.slope:.4f}, expected={report.theoretical_slope:.4f}")

    def _run_gevrey(self) -> None:
        settings = self.config.get_section('gevrey')
        ks = self._structure()
        u0 = build_initial(self.grid, self.config.get_section('initial'), self._rng())
        report = gevrey_scan(
            self.model, ks, settings['k'], settings['q'], u0, settings['times'],
            WeightKind(settings['weight']), self._sphere_options(settings), settings['tolerance'],
            **self.plan_args,
        )
        self._artifact(self.writer.write_scan(report.data))
        self._artifact(self.writer.write_scan(report.rate))
        self.stats.results['gevrey'] = {'data': report.data.to_dict(), 'rate': report.rate.to_dict()}
        self._verdict('gevrey_rate', report.rate.passed,
                      f"slope={report.rate.slope:.4f}, expected={report.rate.theoretical_slope:.4f}")
        self._verdict('gevrey_bounded', report.bounded)

    def _run_dissipation(self) -> None:
        settings = self.config.get_section('dissipation')
        ks = self._structure()
        u0 = build_initial(self.grid, self.config.get_section('initial'), self._rng())
        report = dissipation_scan(self.model, ks, u0, settings['k_values'], settings['times'],
                                  settings['floor'], settings['residual_tolerance'], **self.plan_args)
        k_values = report.extras['k_values']
        rows = [
            (t, k, tail)
            for t, row in zip(report.abscissae, report.extras['tails'])
            for k, tail in zip(k_values, row)
        ]
        self._artifact(self.writer.write_csv('dissipation', ['t', 'k', 'tail'], rows))
        self.stats.results['dissipation'] = report.to_dict()
        self._verdict('dissipation', report.passed, f"c2={report.extras['c2']:.4g}")

    def _omega(self) -> tuple[ThickSetSpec, Optional[np.ndarray]]:
        return build_omega(self.grid, self.config.get_section('omega'))

    def _run_thickness(self) -> None:
        settings = self.config.get_section('thickness')
        omega, _ = self._omega()
        verdict = thickness_check(omega)
        result = verdict.to_dict()
        if settings['gap_k_values']:
            centers = find_gap_centers(self.grid, omega.indicator, settings['gap_k_values'],
                                       self.config.get_section('omega')['unit'], settings['max_gap_fraction'])
            result['gap_centers'] = centers.tolist()
        self.stats.results['thickness'] = result
        self._artifact(self.writer.write_json('thickness', result))
        self._verdict('thick', verdict.thick, f"min_fraction={verdict.min_fraction:.4f}")

    def _run_spectral(self) -> None:
        settings = self.config.get_section('spectral')
        omega, _ = self._omega()
        K = self.config.get_section('omega')['K']
        report = spectral_ratio_scan(omega, settings['k_values'], settings['samples'], self.seed, K)
        self._artifact(self.writer.write_scan(report))
        self.stats.results['spectral'] = report.to_dict()
        self._verdict('spectral_ratio', report.passed,
                      f"slope={report.slope:.4f}, c1={report.extras['c1']:.4f}")

    def _run_observe(self) -> None:
        settings = self.config.get_section('observe')
        omega, _ = self._omega()
        bound = observability_lower_bound(
            self.model, settings['T'], omega, settings['probes'], settings['nt'], self.seed,
            settings['reseed_rounds'], **self.plan_args,
        )
        result: dict[str, Any] = {'T': settings['T'], 'lower_bound': bound, 'exploratory': self.model.s <= 0.5}
        ks = self._structure()
        if ks.holds and self.model.s > 0.5:
            m = characteristic_exponents(ks, self.model.s).dissipation_exponent
            result['cost_exponent'] = lebeau_robbiano_cost_exponent(1.0, 2 * self.model.s, m)
            if not np.any(self.model.B):
                result['heat_cost_shape'] = heat_observability_cost(
                    omega.gamma, omega.a, settings['T'], self.model.s, settings['constants'])
        self.stats.results['observe'] = result
        self._artifact(self.writer.write_json('observe', result))
        self._verdict('observability_finite', math.isfinite(bound), f"lower_bound={bound:.6e}")

    def _run_hum(self) -> None:
        settings = self.config.get_section('hum')
        omega, _ = self._omega()
        f0 = build_initial(self.grid, self.config.get_section('initial'), self._rng())
        cg = CgOptions(settings['max_iter'], settings['rtol'], settings['stall_window'], settings['stall_factor'])
        problem = HumProblem(self.model, settings['T'], omega, f0, settings['epsilon'], settings['nt'], cg,
                             **self.plan_args)
        solution = hum_solve(problem)
        self._artifact(self.writer.write_field('hum_terminal', solution.terminal_state))
        self._artifact(self.writer.write_field('hum_g_T', solution.g_T))
        for label, index in (('start', 0), ('middle', len(solution.times) // 2), ('end', -1)):
            self._artifact(self.writer.write_field(f"hum_control_{label}", solution.controls[index]))
        self._artifact(self.writer.write_csv(
            'hum_residuals', ['iteration', 'relative_residual'], enumerate(solution.residual_history)))
        result = solution.to_dict()
        norm0 = l2_norm(f0)
        result['terminal_ratio'] = l2_norm(solution.terminal_state) / norm0 if norm0 > 0 else 0.0
        self.stats.results['hum'] = result
        self._verdict('hum_converged', solution.converged, f"iterations={solution.iterations}")
        self._verdict('hum_identity', solution.identity_gap <= 0.05, f"gap={solution.identity_gap:.3%}")

    def _run_counterexample(self) -> None:
        settings = self.config.get_section('counterexample')
        omega, built_centers = self._omega()
        centers = settings['centers'] if settings['centers'] is not None else built_centers
        report = nonthick_counterexample(
            settings['s'], omega, settings['T'], settings['k_values'], centers,
            settings['nt'], settings['unit'], settings['max_gap_fraction'], **self.plan_args,
        )
        self._artifact(self.writer.write_scan(report))
        self.stats.results['counterexample'] = report.to_dict()
        self._verdict('ratio_decreasing', report.passed, f"drop={report.extras['drop']:.3e}")

    def _run_subelliptic(self) -> None:
        settings = self.config.get_section('subelliptic')
        ks = self._structure()
        rng = self._rng()
        width = max(self.grid.L) / 20
        fields = [
            wavepacket_field(self.grid, rng, count=4, k_max=settings['band'], width=width)
            for _ in range(settings['samples'])
        ]
        report = subelliptic_report(self.model, ks, fields, WeightKind(settings['weight']),
                                    settings['check_resolution'])
        rows = list(zip(report.subelliptic_ratios, report.drift_ratios))
        self._artifact(self.writer.write_csv('subelliptic', ['subelliptic_ratio', 'drift_ratio'], rows))
        self.stats.results['subelliptic'] = {
            'max_subelliptic': report.max_subelliptic,
            'max_drift': report.max_drift,
            'refined_max_subelliptic': report.refined_max_subelliptic,
            'refined_max_drift': report.refined_max_drift,
            'resolution_change': report.resolution_change,
            'excluded': report.excluded,
        }
        self._verdict('subelliptic_stable', report.passed, f"change={report.resolution_change}")

    def _run_selftest(self) -> None:
        from .selftest import run_selftest

        settings = self.config.get_section('selftest')
        checks = run_selftest(quick=settings['quick'], seed=self.seed)
        for check in checks:
            self.stats.verdicts.append(check.verdict)
            self.stats.timings[f"selftest.{check.verdict.name}"] = round(check.seconds, 6)
        self._artifact(self.writer.write_csv(
            'selftest', ['check', 'passed', 'detail'],
            [(c.verdict.name, c.verdict.passed, c.verdict.detail) for c in checks],
        ))
        self.stats.results['selftest'] = {c.verdict.name: c.verdict.passed for c in checks}
