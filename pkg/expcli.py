#!/usr/bin/env python3
"""
Experiment CLI - configuration-driven runs of the DQM family
Loads a flat `key = value` config, builds the graph and local objectives,
checks the penalty/compression parameters, runs one variant (or all four)
and writes metrics CSVs with a metadata sidecar.

Usage:
  python expcli.py run configs/desk.cfg --out results/desk
  python expcli.py compare configs/desk.cfg --variants dqm,cdqm,qdqm,ccdqm
  python expcli.py check-params configs/k3_quadratic.cfg
  python expcli.py sweep configs/desk.cfg --key algorithm.c --values 0.25,0.5,1
  python expcli.py compress-test --compressor det_quant --bits 2 --dim 24 --trials 10000
  python expcli.py serve --port 5010
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import analysis
import engine
import netgraph
import objectives as obj_mod
from compressors import (Compressor, CompressorKind, check_unbiased, empirical_delta,
                         gaussian_sampler, make_compressor)
from sim_errors import (CompressionError, ConfigError, DataError, FeasibilityError, GraphError,
                        ObjectiveError, SimulationError)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FEASIBILITY = 2
EXIT_RUNTIME = 3


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format=LOG_FORMAT, force=True)


# ---------------------------------------------------------------------------
# Configuration

@dataclass(frozen=True)
class GraphSection:
    source: str = 'generate'        # generate | file | complete | ring
    n: int = 20
    tau: float = 0.4
    seed: int = 0
    path: Optional[str] = None


@dataclass(frozen=True)
class DataSection:
    source: str = 'synthetic'       # synthetic | csv
    m: int = 10                     # samples per agent
    d: int = 24
    seed: int = 0
    path: Optional[str] = None


@dataclass(frozen=True)
class ObjectiveSection:
    kind: str = 'logistic'          # logistic | quadratic
    lambda_reg: float = 0.01
    condition: float = 10.0


@dataclass(frozen=True)
class AlgorithmSection:
    c: float = 0.5
    schedule: str = 'geometric'     # zero | geometric
    alpha: float = 1.0
    rho: float = 0.9
    compressor: str = 'det_quant'
    bits: int = 2
    top_k: int = 1
    beta: Optional[float] = None
    bit_accounting: str = 'per_link'
    cache_hessian: bool = True
    diagnostics: bool = False
    r_weight: Optional[float] = None


@dataclass(frozen=True)
class AnalysisSection:
    check: bool = True
    window_fraction: float = 0.5


@dataclass(frozen=True)
class RunSection:
    max_iter: int = 500
    tol: float = 1e-12
    seed: int = 0
    replicas: int = 1
    workers: int = 1
    log_every: int = 50


@dataclass(frozen=True)
class OutputSection:
    dir: str = 'results'
    prefix: str = 'run'


@dataclass(frozen=True)
class ExperimentConfig:
    graph: GraphSection = GraphSection()
    data: DataSection = DataSection()
    objective: ObjectiveSection = ObjectiveSection()
    algorithm: AlgorithmSection = AlgorithmSection()
    analysis: AnalysisSection = AnalysisSection()
    run: RunSection = RunSection()
    output: OutputSection = OutputSection()

    def to_text(self) -> str:
        lines = []
        for key in sorted(KEYS):
            section, name = key.split('.')
            lines.append(f"{key} = {_format_value(getattr(getattr(self, section), name))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: Dict[str, str]) -> 'ExperimentConfig':
        return _apply(self, overrides)


def _format_value(value) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ('true', 'yes', 'on', '1'):
        return True
    if low in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional(parse: Callable) -> Callable:
    def inner(text: str):
        return None if text.strip().lower() in ('none', '') else parse(text)
    return inner


def _choice(*options: str) -> Callable[[str], str]:
    def inner(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return inner


def _str(text: str) -> str:
    return text.strip()


KEYS: Dict[str, Callable[[str], object]] = {
    'graph.source': _choice('generate', 'file', 'complete', 'ring'),
    'graph.n': int,
    'graph.tau': float,
    'graph.seed': int,
    'graph.path': _optional(_str),
    'data.source': _choice('synthetic', 'csv'),
    'data.m': int,
    'data.d': int,
    'data.seed': int,
    'data.path': _optional(_str),
    'objective.kind': _choice('logistic', 'quadratic'),
    'objective.lambda_reg': float,
    'objective.condition': float,
    'algorithm.c': float,
    'algorithm.schedule': _choice('zero', 'geometric'),
    'algorithm.alpha': float,
    'algorithm.rho': float,
    'algorithm.compressor': _choice(*(k.value for k in CompressorKind)),
    'algorithm.bits': int,
    'algorithm.top_k': int,
    'algorithm.beta': _optional(float),
    'algorithm.bit_accounting': _choice('per_link', 'per_broadcast'),
    'algorithm.cache_hessian': _parse_bool,
    'algorithm.diagnostics': _parse_bool,
    'algorithm.r_weight': _optional(float),
    'analysis.check': _parse_bool,
    'analysis.window_fraction': float,
    'run.max_iter': int,
    'run.tol': float,
    'run.seed': int,
    'run.replicas': int,
    'run.workers': int,
    'run.log_every': int,
    'output.dir': _str,
    'output.prefix': _str,
}


def _apply(cfg: ExperimentConfig, values: Dict[str, str]) -> ExperimentConfig:
    per_section: Dict[str, Dict[str, object]] = {}
    for key, raw in values.items():
        if key not in KEYS:
            raise ConfigError("unknown key", key=key)
        try:
            value = KEYS[key](raw)
        except ValueError as e:
            raise ConfigError(str(e), key=key)
        section, name = key.split('.')
        per_section.setdefault(section, {})[name] = value
    updated = {s: replace(getattr(cfg, s), **kv) for s, kv in per_section.items()}
    out = replace(cfg, **updated)
    validate_config(out)
    return out


def parse_config_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key", key=key)
        values[key] = value
    return values


def load_config(path=None, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    values: Dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values = parse_config_text(path.read_text(encoding='utf-8'))
    values.update(overrides or {})
    return _apply(ExperimentConfig(), values)


def validate_config(cfg: ExperimentConfig) -> None:
    g, dat, ob, alg, an, run = cfg.graph, cfg.data, cfg.objective, cfg.algorithm, cfg.analysis, cfg.run
    checks = [
        ('graph.n', g.n >= 2, "needs at least 2 agents"),
        ('graph.tau', 0.0 < g.tau <= 1.0, "must lie in (0, 1]"),
        ('graph.path', g.source != 'file' or (g.path is not None and Path(g.path).exists()),
         f"graph file missing: {g.path}"),
        ('data.m', dat.m >= 1, "needs at least one sample per agent"),
        ('data.d', dat.d >= 1, "dimension must be positive"),
        ('data.path', dat.source != 'csv' or (dat.path is not None and Path(dat.path).exists()),
         f"data file missing: {dat.path}"),
        ('data.source', not (dat.source == 'csv' and ob.kind == 'quadratic'),
         "csv data only feeds logistic objectives"),
        ('objective.lambda_reg', ob.lambda_reg >= 0.0, "must be >= 0"),
        ('objective.condition', ob.condition >= 1.0, "must be >= 1"),
        ('algorithm.c', alg.c > 0.0, "must be > 0"),
        ('algorithm.alpha', alg.schedule == 'zero' or alg.alpha > 0.0, "must be > 0"),
        ('algorithm.rho', alg.schedule == 'zero' or 0.0 < alg.rho < 1.0, "must lie in (0, 1)"),
        ('algorithm.bits', alg.bits >= 1, "must be >= 1"),
        ('algorithm.top_k', alg.top_k >= 1, "must be >= 1"),
        ('algorithm.beta', alg.beta is None or alg.beta > 0.0, "must be > 0"),
        ('algorithm.r_weight', alg.r_weight is None or alg.r_weight >= 0.0, "must be >= 0"),
        ('analysis.window_fraction', 0.0 < an.window_fraction <= 1.0, "must lie in (0, 1]"),
        ('run.max_iter', run.max_iter >= 0, "must be >= 0"),
        ('run.tol', run.tol >= 0.0, "must be >= 0"),
        ('run.replicas', run.replicas >= 1, "must be >= 1"),
        ('run.workers', run.workers >= 1, "must be >= 1"),
        ('run.log_every', run.log_every >= 0, "must be >= 0"),
    ]
    for key, ok, message in checks:
        if not ok:
            raise ConfigError(message, key=key)


# ---------------------------------------------------------------------------
# Builders

def build_graph(cfg: ExperimentConfig) -> netgraph.Graph:
    g = cfg.graph
    if g.source == 'file':
        return netgraph.read_graph(g.path)
    if g.source == 'complete':
        return netgraph.complete_graph(g.n)
    if g.source == 'ring':
        return netgraph.ring_graph(g.n)
    graph, _ = netgraph.gen_feasible_graph(g.n, g.tau, g.seed)
    return graph


def build_objectives(cfg: ExperimentConfig, n: int) -> List:
    dat, ob = cfg.data, cfg.objective
    if ob.kind == 'quadratic':
        return obj_mod.gen_synthetic_quadratic(n, dat.d, dat.seed, ob.condition)
    if ob.lambda_reg == 0.0:
        logger.warning("⚠️ unregularized logistic loss: strong convexity is not guaranteed")
    if dat.source == 'csv':
        samples = obj_mod.load_csv(dat.path)
        return obj_mod.partition_round_robin(samples, n, ob.lambda_reg)
    return obj_mod.gen_synthetic_logistic(n, dat.m, dat.d, dat.seed, lambda_reg=ob.lambda_reg)


def build_compressor(cfg: ExperimentConfig, d: int) -> Compressor:
    """The configured compressor at dimension d; parameter errors name their config key"""
    alg = cfg.algorithm
    try:
        return make_compressor(alg.compressor, d, bits=alg.bits, k=alg.top_k)
    except CompressionError as e:
        key = {'top_k': 'algorithm.top_k', 'det_quant': 'algorithm.bits',
               'stoch_quant': 'algorithm.bits'}.get(alg.compressor, 'algorithm.compressor')
        raise ConfigError(str(e), key=key) from e


def build_run_config(cfg: ExperimentConfig, d: int, replica: int = 0) -> engine.RunConfig:
    alg, run = cfg.algorithm, cfg.run
    if alg.schedule == 'geometric':
        schedule = engine.ThresholdSchedule.geometric(alg.alpha, alg.rho)
    else:
        schedule = engine.ThresholdSchedule.zero()
    return engine.RunConfig(
        c=alg.c,
        compressor=build_compressor(cfg, d),
        schedule=schedule,
        max_iter=run.max_iter,
        tol=run.tol,
        seed=run.seed,
        replica=replica,
        bit_accounting=engine.BitAccounting(alg.bit_accounting),
        cache_hessian=alg.cache_hessian,
        diagnostics=alg.diagnostics,
        r_weight=alg.r_weight,
        beta=alg.beta,
        workers=run.workers,
        log_every=run.log_every,
    )


@dataclass
class Problem:
    graph: netgraph.Graph
    objectives: List
    spectra: netgraph.SpectralSummary
    constants: Optional[obj_mod.ConvexityConstants]
    x_star: np.ndarray

    @property
    def d(self) -> int:
        return self.objectives[0].dimension


def build_problem(cfg: ExperimentConfig) -> Problem:
    graph = build_graph(cfg)
    objectives = build_objectives(cfg, graph.n)
    try:
        constants = obj_mod.aggregate_constants([obj_mod.convexity_constants(o) for o in objectives])
    except ObjectiveError as e:
        logger.warning("⚠️ %s", e)
        constants = None
    x_star, f_star = engine.centralized_solve(objectives)
    logger.info("problem: n=%d |E|=%d d=%d f*=%.12g", graph.n, len(graph.edges),
                objectives[0].dimension, f_star)
    return Problem(graph=graph, objectives=objectives, spectra=netgraph.spectra(graph),
                   constants=constants, x_star=x_star)


# ---------------------------------------------------------------------------
# Operations

def check_params(cfg: ExperimentConfig, problem: Problem, strict: bool = False
                 ) -> Optional[analysis.FeasibilityReport]:
    if problem.constants is None:
        if strict:
            raise FeasibilityError("objective constants unavailable; cannot certify parameters")
        return None
    comp = build_compressor(cfg, problem.d)
    delta = comp.delta_bound
    if delta is None:
        message = f"{comp.describe()} has no contraction bound below 1 at d={problem.d}"
        if strict:
            raise FeasibilityError(message)
        logger.warning("⚠️ %s; checking the uncompressed condition only", message)
        delta = 0.0
    report = analysis.theorem1_check(problem.spectra, problem.constants.v, problem.constants.ell,
                                     cfg.algorithm.c, beta=cfg.algorithm.beta, delta=delta,
                                     unbiased=comp.unbiased)
    if not report.passed:
        if strict:
            raise FeasibilityError("parameters fail the convergence condition: " + "; ".join(report.failures))
        logger.warning("⚠️ parameters outside the certified region: %s", "; ".join(report.failures))
    return report


@dataclass
class ExperimentResult:
    records: List[engine.RunRecord]
    mean: pd.DataFrame
    report: Optional[analysis.FeasibilityReport] = None
    paths: List[Path] = field(default_factory=list)


def aggregate_replicas(records: Sequence[engine.RunRecord]) -> pd.DataFrame:
    """Arithmetic mean per iteration over the replicas that reached it"""
    frames = [r.to_frame() for r in records]
    if len(frames) == 1:
        return frames[0]
    stacked = pd.concat(frames, ignore_index=True)
    return stacked.groupby('iter', as_index=False).mean()[engine.METRIC_COLUMNS]


def run_experiment(cfg: ExperimentConfig, strict: bool = False, write: bool = True,
                   problem: Optional[Problem] = None) -> ExperimentResult:
    # 1. Problem and parameter check
    if problem is None:
        problem = build_problem(cfg)
    report = check_params(cfg, problem, strict=strict) if cfg.analysis.check else None

    # 2. Replicas share x0 and the graph; only compressor streams differ
    records = []
    for replica in range(cfg.run.replicas):
        run_cfg = build_run_config(cfg, problem.d, replica=replica)
        sim = engine.init(problem.graph, problem.objectives, run_cfg, x_star=problem.x_star)
        record = sim.run()
        if report is not None and not report.passed:
            record.meta['feasibility'] = 'failed: ' + '; '.join(report.failures)
        records.append(record)
    result = ExperimentResult(records=records, mean=aggregate_replicas(records), report=report)

    # 3. Files
    if write:
        out = Path(cfg.output.dir)
        prefix = cfg.output.prefix
        if len(records) == 1:
            result.paths.append(engine.write_metrics_csv(records[0], out / f"{prefix}_metrics.csv"))
        else:
            for replica, record in enumerate(records):
                result.paths.append(engine.write_metrics_csv(record, out / f"{prefix}_metrics_r{replica}.csv"))
            mean_path = out / f"{prefix}_metrics_mean.csv"
            result.mean.to_csv(mean_path, index=False, float_format='%.17g', na_rep='')
            result.paths.append(mean_path)
        result.paths.append(write_metadata(cfg, records[0], out / f"{prefix}_meta.txt"))
    return result


def write_metadata(cfg: ExperimentConfig, record: engine.RunRecord, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [cfg.to_text().rstrip("\n")]
    lines += [f"# {k} = {v}" for k, v in sorted(record.meta.items())]
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    return path


VARIANT_SETTINGS = {
    engine.Variant.DQM: ('zero', False),
    engine.Variant.C_DQM: ('geometric', False),
    engine.Variant.Q_DQM: ('zero', True),
    engine.Variant.CC_DQM: ('geometric', True),
}


def variant_config(cfg: ExperimentConfig, variant: engine.Variant) -> ExperimentConfig:
    schedule, compressed = VARIANT_SETTINGS[variant]
    compressor = cfg.algorithm.compressor if compressed else 'identity'
    if compressed and compressor == 'identity':
        logger.warning("⚠️ %s requested with the identity compressor", variant.label)
    alg = replace(cfg.algorithm, schedule=schedule, compressor=compressor)
    return replace(cfg, algorithm=alg, output=replace(cfg.output, prefix=f"{cfg.output.prefix}_{variant.value}"))


def parse_variants(text: str) -> List[engine.Variant]:
    out = []
    for token in text.split(','):
        token = token.strip().lower().replace('-', '')
        try:
            out.append(engine.Variant(token))
        except ValueError:
            raise ConfigError(f"unknown variant {token!r}", key='--variants')
    return out


def cost_to_reach(frame: pd.DataFrame, target: float) -> Tuple[float, float, float]:
    """(iterations, transmissions, bits) at the first row with err <= target, NaN if never"""
    hit = frame[frame['err'] <= target]
    if hit.empty:
        return math.nan, math.nan, math.nan
    row = hit.iloc[0]
    return float(row['iter']), float(row['rounds_cum']), float(row['bits_cum'])


def compare_variants(cfg: ExperimentConfig, variants: Sequence[engine.Variant],
                     target: float = 1e-6, write: bool = True,
                     problem: Optional[Problem] = None) -> pd.DataFrame:
    if problem is None:
        problem = build_problem(cfg)
    rows = []
    for variant in variants:
        vcfg = variant_config(cfg, variant)
        result = run_experiment(vcfg, write=write, problem=problem)
        frame = result.mean
        iters, rounds, bits = cost_to_reach(frame, target)
        try:
            rate = analysis.fit_rate(frame['err'].to_numpy(), cfg.analysis.window_fraction).sigma_hat
        except SimulationError:
            rate = math.nan
        rows.append({
            'variant': variant.label,
            'iterations': iters,
            'transmissions': rounds,
            'bits_to_tol': bits,
            'fitted_rate': rate,
            'best_err': float(frame['err'].min()),
        })
    table = pd.DataFrame(rows)
    if write:
        path = Path(cfg.output.dir) / f"{cfg.output.prefix}_compare.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format='%.17g')
    return table


def sweep(cfg: ExperimentConfig, key: str, values: Sequence[str], write: bool = True) -> pd.DataFrame:
    if key not in KEYS:
        raise ConfigError("unknown key", key=key)
    rows = []
    for raw in values:
        point = cfg.with_overrides({key: raw, 'output.prefix': f"{cfg.output.prefix}_{key}_{raw}"})
        result = run_experiment(point, write=write)
        final = result.records[0].final
        rows.append({
            key: raw,
            'iterations': final.iter,
            'final_err': float(result.mean['err'].iloc[-1]),
            'bits_cum': final.bits_cum,
            'rounds_cum': final.rounds_cum,
            'feasible': None if result.report is None else result.report.passed,
        })
    table = pd.DataFrame(rows)
    if write:
        path = Path(cfg.output.dir) / f"{cfg.output.prefix}_sweep.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format='%.17g')
    return table


def compress_test(kind: str, dim: int, bits: int = 2, k: int = 1, trials: int = 10_000,
                  seed: int = 0) -> Dict:
    comp = make_compressor(kind, dim, bits=bits, k=k)
    rng = np.random.default_rng(seed)
    estimate = empirical_delta(comp, gaussian_sampler(dim), trials, rng)
    out = {
        'compressor': comp.describe(),
        'dim': dim,
        'delta_hat': estimate.delta_hat,
        'mean_ratio': estimate.mean_ratio,
        'half_width': estimate.half_width,
        'delta_bound': comp.delta_bound,
        'message_bits': comp.message_bits,
        'unbiased_declared': comp.unbiased,
    }
    if comp.delta_bound is not None:
        out['within_bound'] = estimate.delta_hat <= comp.delta_bound + estimate.half_width
    bias = check_unbiased(comp, rng.standard_normal(dim), max(trials, 1000), rng)
    out['bias_norm'] = bias.bias_norm
    out['bias_band'] = bias.band
    out['bias_passed'] = bias.passed
    return out


# ---------------------------------------------------------------------------
# CLI

def _parse_sets(items: Optional[List[str]]) -> Dict[str, str]:
    out = {}
    for item in items or []:
        if '=' not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split('=', 1)
        out[key.strip()] = value.strip()
    return out


def _config_from_args(args) -> ExperimentConfig:
    overrides = _parse_sets(args.set)
    if args.seed is not None:
        overrides['run.seed'] = str(args.seed)
    if args.out is not None:
        overrides['output.dir'] = args.out
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Event-triggered compressed decentralized ADMM simulator")
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    def experiment_args(p):
        p.add_argument('config', nargs='?', default=None, help='config file (key = value)')
        p.add_argument('--seed', type=int, default=None, help='override run.seed')
        p.add_argument('--out', default=None, help='override output.dir')
        p.add_argument('--set', action='append', metavar='KEY=VALUE', help='override any config key')
        p.add_argument('--strict', action='store_true', help='abort when the parameter check fails')

    experiment_args(sub.add_parser('run', help='run the configured variant'))
    p = sub.add_parser('compare', help='run several variants on one problem')
    experiment_args(p)
    p.add_argument('--variants', default='dqm,cdqm,qdqm,ccdqm')
    p.add_argument('--target', type=float, default=1e-6, help='err level for cost-to-reach')
    experiment_args(sub.add_parser('check-params', help='print the feasibility report'))
    p = sub.add_parser('sweep', help='grid over one config key')
    experiment_args(p)
    p.add_argument('--key', required=True)
    p.add_argument('--values', required=True, help='comma separated')

    p = sub.add_parser('gen-graph', help='sample a connected non-bipartite graph')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--tau', type=float, default=0.4)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)

    p = sub.add_parser('gen-data', help='write a synthetic logistic dataset as CSV')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--m', type=int, default=10)
    p.add_argument('--d', type=int, default=24)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)

    p = sub.add_parser('compress-test', help='empirical contraction and bias of a compressor')
    p.add_argument('--compressor', default='det_quant')
    p.add_argument('--bits', type=int, default=2)
    p.add_argument('--top-k', dest='k', type=int, default=1)
    p.add_argument('--dim', type=int, default=24)
    p.add_argument('--trials', type=int, default=10_000)
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('serve', help='start the REST server')
    p.add_argument('--host', default='0.0.0.0')
    p.add_argument('--port', type=int, default=5010)
    return parser


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg, strict=args.strict)
    final = result.records[-1].final
    print(f"✅ {result.records[0].meta['variant']}: k={final.iter} err={result.mean['err'].iloc[-1]:.3e} "
          f"bits={final.bits_cum} transmissions={final.rounds_cum}")
    for path in result.paths:
        print(f"   📄 {path}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _config_from_args(args)
    variants = parse_variants(args.variants)
    problem = build_problem(cfg)
    if args.strict:
        check_params(cfg, problem, strict=True)
    table = compare_variants(cfg, variants, target=args.target, problem=problem)
    print(table.to_string(index=False))
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = _config_from_args(args)
    report = check_params(cfg, build_problem(cfg), strict=args.strict)
    if report is None:
        print("⚠️ parameter check unavailable for this objective")
        return EXIT_FEASIBILITY
    for line in report.lines():
        print(line)
    print("✅ parameters feasible" if report.passed else "❌ parameters infeasible")
    return EXIT_OK if report.passed else EXIT_FEASIBILITY


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    table = sweep(cfg, args.key, [v.strip() for v in args.values.split(',') if v.strip()])
    print(table.to_string(index=False))
    return EXIT_OK


def _cmd_gen_graph(args) -> int:
    graph, used = netgraph.gen_feasible_graph(args.n, args.tau, args.seed)
    netgraph.write_graph(graph, args.out)
    s = netgraph.spectra(graph)
    print(f"✅ graph n={graph.n} |E|={len(graph.edges)} seed={used} "
          f"lambda_2={s.lambda_2:.6g} lam_hat_1={s.lam_hat_1:.6g} -> {args.out}")
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    objs = obj_mod.gen_synthetic_logistic(args.n, args.m, args.d, args.seed)
    obj_mod.write_csv(obj_mod.objectives_to_samples(objs), args.out)
    print(f"✅ {args.n * args.m} samples of dimension {args.d} -> {args.out}")
    return EXIT_OK


def _cmd_compress_test(args) -> int:
    out = compress_test(args.compressor, args.dim, bits=args.bits, k=args.k,
                        trials=args.trials, seed=args.seed)
    for key, value in out.items():
        print(f"{key:>18} = {value}")
    ok = out.get('within_bound', True) and (out['bias_passed'] or not out['unbiased_declared'])
    print("✅ compressor behaves as declared" if ok else "❌ compressor violates its declaration")
    return EXIT_OK if ok else EXIT_RUNTIME


def _cmd_serve(args) -> int:
    import simulation_server
    simulation_server.main(host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {
    'run': _cmd_run,
    'compare': _cmd_compare,
    'check-params': _cmd_check,
    'sweep': _cmd_sweep,
    'gen-graph': _cmd_gen_graph,
    'gen-data': _cmd_gen_data,
    'compress-test': _cmd_compress_test,
    'serve': _cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GraphError, DataError, ObjectiveError) as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FeasibilityError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FEASIBILITY
    except SimulationError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
