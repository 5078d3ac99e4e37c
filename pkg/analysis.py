#!/usr/bin/env python3
"""
Analysis - parameter feasibility and empirical convergence rates
Evaluates the linear-convergence condition on (c, beta, delta) from graph
spectra and objective constants, the unbiased-compressor shortcut, the
closed-form beta maximizer and the tail fit of err_k.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import bisect, minimize_scalar
from scipy.stats import linregress

from netgraph import SpectralSummary
from sim_errors import DiagnosticError, FeasibilityError

logger = logging.getLogger(__name__)

BETA_GRID_LO = 1e-3
BETA_GRID_HI = 1e3
BETA_GRID_POINTS = 10_000
ROOT_XTOL = 1e-12


@dataclass
class Corollary1Result:
    delta_max: float
    c_min: float        # inf once delta reaches delta_max
    passed: bool


@dataclass
class FeasibilityReport:
    c: float
    beta: float
    delta: float
    beta_min: float         # beta must exceed ell^2 / (2 c lambda_2 v)
    G_beta: float
    lhs: float              # delta / (1 - sqrt(delta))^2
    rhs: float
    beta_star: float        # closed-form maximizer of F(inf, beta)
    beta_grid: float        # grid + refinement cross-check of beta_star
    F_limit: float          # F(inf, beta_star)
    passed: bool
    failures: List[str] = field(default_factory=list)
    corollary1: Optional[Corollary1Result] = None

    def to_dict(self) -> Dict:
        out = asdict(self)
        out['pass'] = out.pop('passed')
        return out

    def lines(self) -> List[str]:
        rows = [
            ('c', self.c), ('beta', self.beta), ('beta_min', self.beta_min),
            ('delta', self.delta), ('G(beta)', self.G_beta), ('lhs', self.lhs), ('rhs', self.rhs),
            ('beta_star', self.beta_star), ('beta_grid', self.beta_grid), ('F_limit', self.F_limit),
        ]
        if self.corollary1 is not None:
            rows += [('delta_max', self.corollary1.delta_max), ('c_min', self.corollary1.c_min)]
        width = max(len(k) for k, _ in rows)
        out = [f"{k.ljust(width)} = {val:.6g}" for k, val in rows]
        out.append(f"{'pass'.ljust(width)} = {self.passed}")
        out.extend(f"failure: {f}" for f in self.failures)
        return out


@dataclass
class RateFit:
    sigma_hat: float
    start: int          # window [start, stop)
    stop: int
    r2: float
    slope: float


@dataclass
class SigmaHatBranches:
    eta: float
    r: float
    r_lower: float
    r_upper: float
    branches: List[float]
    all_positive: bool


def _check_ranges(v: float, ell: float, c: float, delta: float) -> None:
    if v <= 0 or ell <= 0:
        raise FeasibilityError(f"convexity constants must be positive (v={v}, ell={ell})")
    if ell < v:
        raise FeasibilityError(f"ell={ell} is below v={v}")
    if c <= 0:
        raise FeasibilityError(f"penalty parameter c must be > 0, got {c}")
    if not (0.0 <= delta < 1.0):
        raise FeasibilityError(f"delta must lie in [0, 1), got {delta}")


def beta_lower_bound(s: SpectralSummary, v: float, ell: float, c: float) -> float:
    return ell ** 2 / (2.0 * c * s.lambda_2 * v)


def g_beta(s: SpectralSummary, v: float, ell: float, c: float, beta: float) -> float:
    lam2 = s.lambda_2
    return (c * s.lam_hat_1 / 2.0
            - 2.0 * c * beta * lam2 * ell ** 2 / (2.0 * c * beta * lam2 * v - ell ** 2)
            - (c ** 2 * s.lam_hat_n ** 2 + 4.0 * ell ** 2) / (c * beta * lam2))


def g_beta_expanded(s: SpectralSummary, v: float, ell: float, c: float, beta: float) -> float:
    """Same quantity written with the factor 2 left in the middle term"""
    lam2 = s.lambda_2
    return (c * s.lam_hat_1 / 2.0
            - 4.0 * ell ** 2 * c * beta * lam2 / (4.0 * c * beta * lam2 * v - 2.0 * ell ** 2)
            - (c ** 2 * s.lam_hat_n ** 2 + 4.0 * ell ** 2) / (c * beta * lam2))


def lhs_delta(delta: float) -> float:
    return delta / (1.0 - math.sqrt(delta)) ** 2


def F_value(s: SpectralSummary, v: float, ell: float, c: float, beta: float) -> float:
    """Right-hand side of the delta condition; -inf outside beta > beta_min"""
    lam2, lamn = s.lambda_2, s.lambda_n
    if beta <= beta_lower_bound(s, v, ell, c):
        return -math.inf
    num = (s.lam_hat_1 / 2.0
           - 4.0 * ell ** 2 * lam2 * beta / (4.0 * c * beta * lam2 * v - 2.0 * ell ** 2)
           - (c ** 2 * s.lam_hat_n ** 2 + 4.0 * ell ** 2) / (c ** 2 * beta * lam2))
    return num / (3.0 * lamn + 2.0 * beta * lamn + lamn ** 2 / (beta * lam2))


def F_limit(s: SpectralSummary, beta: float) -> float:
    lam2, lamn = s.lambda_2, s.lambda_n
    num = s.lam_hat_1 / 2.0 - s.lam_hat_n ** 2 / (beta * lam2)
    return num / (3.0 * lamn + 2.0 * beta * lamn + lamn ** 2 / (beta * lam2))


def beta_star(s: SpectralSummary) -> float:
    """Closed-form global maximizer of F(inf, beta)"""
    u = s.lam_hat_n ** 2 / (s.lambda_2 * s.lam_hat_1)
    return 2.0 * u + math.sqrt(4.0 * u ** 2 + 0.5 * s.lambda_n / s.lambda_2 + 3.0 * u)


def _grid_argmax(fn, lo: float, hi: float, points: int) -> float:
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    values = np.array([fn(b) for b in grid])
    i = int(np.argmax(values))
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    if right <= left:
        return float(grid[i])
    res = minimize_scalar(lambda b: -fn(b), bounds=(left, right), method='bounded',
                          options={'xatol': 1e-12 * right})
    return float(res.x) if -res.fun >= values[i] else float(grid[i])


def grid_beta_star(s: SpectralSummary, lo: float = BETA_GRID_LO, hi: Optional[float] = None,
                   points: int = BETA_GRID_POINTS) -> float:
    if hi is None:
        # F(inf, beta) is negative below 2u, so its peak sits well inside 100u
        u = s.lam_hat_n ** 2 / (s.lambda_2 * s.lam_hat_1)
        hi = max(BETA_GRID_HI, 100.0 * u)
    return _grid_argmax(lambda b: F_limit(s, b), lo, hi, points)


def best_beta(s: SpectralSummary, v: float, ell: float, c: float, points: int = 2000) -> float:
    """beta maximizing F(c, beta) over beta > beta_min"""
    b_min = beta_lower_bound(s, v, ell, c)
    lo = b_min * (1.0 + 1e-9)
    hi = max(BETA_GRID_HI, 1e3 * b_min)
    return _grid_argmax(lambda b: F_value(s, v, ell, c, b), lo, hi, points)


def theorem1_check(s: SpectralSummary, v: float, ell: float, c: float,
                   beta: Optional[float] = None, delta: float = 0.0,
                   unbiased: bool = False) -> FeasibilityReport:
    _check_ranges(v, ell, c, delta)
    if not (s.connected and s.non_bipartite):
        raise FeasibilityError("spectra do not satisfy the graph assumptions")
    if beta is None:
        beta = best_beta(s, v, ell, c)
    if beta <= 0:
        raise FeasibilityError(f"beta must be > 0, got {beta}")

    # 1. Precondition on beta
    failures = []
    b_min = beta_lower_bound(s, v, ell, c)
    if beta <= b_min:
        failures.append(f"precondition violated: beta={beta:.6g} <= ell^2/(2c lambda_2 v)={b_min:.6g}")

    # 2. Both sides of the delta condition
    try:
        G = g_beta(s, v, ell, c, beta)
    except ZeroDivisionError:
        G = -math.inf
    rhs = G / (3.0 * c * s.lambda_n + 2.0 * c * beta * s.lambda_n
               + c * s.lambda_n ** 2 / (beta * s.lambda_2))
    lhs = lhs_delta(delta)
    if G <= 0:
        failures.append(f"G(beta)={G:.6g} is not positive")
    if not lhs < rhs:
        failures.append(f"delta condition fails: {lhs:.6g} >= {rhs:.6g}")

    # 3. Closed-form beta* and its numerical cross-check
    b_star = beta_star(s)
    b_grid = grid_beta_star(s)
    if abs(b_grid - b_star) > 1e-4 * b_star:
        logger.warning("⚠️ beta* closed form %.8g differs from grid maximizer %.8g", b_star, b_grid)

    report = FeasibilityReport(
        c=c, beta=beta, delta=delta, beta_min=b_min, G_beta=G, lhs=lhs, rhs=rhs,
        beta_star=b_star, beta_grid=b_grid, F_limit=F_limit(s, b_star),
        passed=not failures, failures=failures,
    )
    if unbiased:
        report.corollary1 = corollary1_check(s, v, ell, delta)
    logger.debug("feasibility: %s", "; ".join(report.lines()))
    return report


def corollary1_check(s: SpectralSummary, v: float, ell: float, delta: float) -> Corollary1Result:
    """Unbiased compressors: delta bound and minimal c"""
    _check_ranges(v, ell, 1.0, delta)
    target = s.lam_hat_1 / (3.0 * s.lambda_n)
    root = bisect(lambda x: x ** 2 - target * (1.0 - x) ** 2, 0.0, 1.0, xtol=ROOT_XTOL)
    delta_max = root ** 2
    gap = (1.0 - math.sqrt(delta)) ** 2
    denom = s.lam_hat_1 * gap - 3.0 * s.lambda_n * delta
    c_min = (ell ** 2 / v) * 2.0 * gap / denom if denom > 0 else math.inf
    return Corollary1Result(delta_max=delta_max, c_min=c_min, passed=delta < delta_max and denom > 0)


def fit_rate(err: Sequence[float], window_fraction: float = 0.5) -> RateFit:
    """Least-squares slope of log err_k over the final window"""
    if not (0.0 < window_fraction <= 1.0):
        raise ValueError(f"window_fraction must lie in (0, 1], got {window_fraction}")
    series = np.asarray(err, dtype=float)
    nonpos = np.flatnonzero(series <= 0)
    stop = int(nonpos[0]) if nonpos.size else series.size
    start = int(math.floor(stop * (1.0 - window_fraction)))
    if stop - start < 2:
        raise DiagnosticError(f"need at least two positive points to fit a rate (window {start}..{stop})")
    k = np.arange(start, stop, dtype=float)
    fit = linregress(k, np.log(series[start:stop]))
    r2 = float(fit.rvalue ** 2) if np.isfinite(fit.rvalue) else 0.0
    return RateFit(sigma_hat=float(math.exp(fit.slope)), start=start, stop=stop,
                   r2=r2, slope=float(fit.slope))


def _xi(s: SpectralSummary, c: float, beta: float):
    lamn, lam2 = s.lambda_n, s.lambda_2
    xi2 = 1.5 * c * lamn + c * lamn ** 2 / (2.0 * beta * lam2)
    xi1 = xi2 + 2.0 * c * beta * lamn
    return xi1, xi2


def lyapunov_r_weight(s: SpectralSummary, c: float, beta: float, delta: float) -> float:
    """Lower end of the admissible bracket for the error weight r"""
    if not (0.0 <= delta < 1.0):
        raise FeasibilityError(f"delta must lie in [0, 1), got {delta}")
    xi1, xi2 = _xi(s, c, beta)
    root = math.sqrt(delta)
    return (xi2 + xi1 * root) / (1.0 - root)


def sigma_hat_branches(s: SpectralSummary, v: float, ell: float, c: float,
                       beta: float, delta: float) -> SigmaHatBranches:
    """Numerators of the contraction-factor minimum at one admissible (eta, r)"""
    _check_ranges(v, ell, c, delta)
    lam2, lamn = s.lambda_2, s.lambda_n
    xi1, xi2 = _xi(s, c, beta)
    root = math.sqrt(delta)
    ratio = delta / (1.0 - root)
    denom_eta = 2.0 * c * lam2 * v - ell ** 2 / beta
    eta = 1.000001 * c * lam2 / denom_eta if denom_eta > 0 else math.inf

    r_lower = lyapunov_r_weight(s, c, beta, delta)
    if ratio > 0:
        r_upper = ((c * s.lam_hat_1 - 4.0 * eta * ell ** 2) / (2.0 * ratio)
                   - (c ** 2 * s.lam_hat_n ** 2 + 4.0 * ell ** 2) / (c * lam2 * ratio * beta) - xi1)
        r = 0.5 * (r_lower + r_upper)
    else:
        r_upper = math.inf
        r = 2.0 * r_lower

    first = ((1.0 - root) / (root + 2.0 * c * lamn ** 2 * (1.0 + root) / (r * lam2))
             - lam2 * (xi1 + xi2 - (1.0 - root) * xi1)
             / (root * r * lam2 + 2.0 * c * lamn ** 2 * (1.0 + root)))
    second = ((c * lam2 * (c * s.lam_hat_1 - 2.0 * r * ratio - 2.0 * xi1 * ratio - 4.0 * eta * ell ** 2)
               - 2.0 * (c ** 2 * s.lam_hat_n ** 2 + 4.0 * ell ** 2) / beta)
              / (8.0 * c ** 2 * s.lam_hat_n ** 2 + 32.0 * ell ** 2 + 4.0 * c ** 2 * lamn ** 2
                 + 4.0 * c * lam2 * r * ratio))
    third = (c * lam2 * (2.0 * v - eta) - ell ** 2 / beta) / (c ** 2 * lam2 * s.lam_hat_n + ell ** 2)
    branches = [float(first), float(second), float(third)]
    ok = r_lower < r_upper and all(np.isfinite(b) and b > 0 for b in branches)
    return SigmaHatBranches(eta=eta, r=r, r_lower=r_lower, r_upper=r_upper,
                            branches=branches, all_positive=bool(ok))


def c_sweep_until_pass(s: SpectralSummary, v: float, ell: float, delta: float,
                       beta: Optional[float] = None, c0: float = 1.0,
                       max_doublings: int = 60) -> Optional[float]:
    """First c in c0, 2 c0, 4 c0, ... that passes the feasibility check"""
    c = c0
    for _ in range(max_doublings + 1):
        if theorem1_check(s, v, ell, c, beta=beta, delta=delta).passed:
            return c
        c *= 2.0
    return None
