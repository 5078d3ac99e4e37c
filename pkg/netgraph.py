#!/usr/bin/env python3
"""
Network graph - communication topology and its spectra
Builds undirected agent graphs, the signed/unsigned Laplacians and the
edge-incidence operator that the feasibility conditions and the dual
recursion consume.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple

import networkx as nx
import numpy as np
from scipy.linalg import eigh

from sim_errors import GraphError

logger = logging.getLogger(__name__)

EIG_TOL = 1e-9          # zero test for eigenvalues
MAX_GRAPH_ATTEMPTS = 100


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on agents 0..n-1"""
    n: int
    edges: FrozenSet[Tuple[int, int]]   # (i, j) with i < j

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"agent count must be positive, got {self.n}")
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop on node {i + 1}")
            if not (0 <= i < j < self.n):
                raise GraphError(f"edge ({i + 1}, {j + 1}) out of range or not ordered")

    @classmethod
    def from_pairs(cls, n: int, pairs) -> 'Graph':
        edges = set()
        for i, j in pairs:
            if i == j:
                raise GraphError(f"self-loop on node {i + 1}")
            edges.add((min(i, j), max(i, j)))
        return cls(n=n, edges=frozenset(edges))

    @cached_property
    def adjacency(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        for i, j in self.edges:
            W[i, j] = 1.0
            W[j, i] = 1.0
        return W

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @cached_property
    def _neighbors(self) -> Dict[int, Tuple[int, ...]]:
        nbrs: Dict[int, List[int]] = {i: [] for i in range(self.n)}
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return {i: tuple(sorted(v)) for i, v in nbrs.items()}

    def neighbors(self, i: int) -> Tuple[int, ...]:
        return self._neighbors[i]

    def sorted_edges(self) -> List[Tuple[int, int]]:
        return sorted(self.edges)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    """Ascending spectra of L = D - W and L_s = D + W"""
    lam: np.ndarray = field(repr=False)
    lam_hat: np.ndarray = field(repr=False)
    connected: bool
    non_bipartite: bool

    @property
    def lambda_2(self) -> float:
        return float(self.lam[1]) if len(self.lam) > 1 else 0.0

    @property
    def lambda_n(self) -> float:
        return float(self.lam[-1])

    @property
    def lam_hat_1(self) -> float:
        return float(self.lam_hat[0])

    @property
    def lam_hat_n(self) -> float:
        return float(self.lam_hat[-1])


@dataclass(frozen=True, eq=False)
class EdgeOperator:
    """Signed / unsigned incidence with L = 1/2 M^T M and L_s = 1/2 M_s^T M_s"""
    M: np.ndarray
    M_s: np.ndarray


@dataclass
class ValidationReport:
    passed: bool
    failures: List[str]

    def __str__(self):
        if self.passed:
            return "assumptions satisfied"
        return "; ".join(self.failures)


def laplacians(g: Graph) -> Tuple[np.ndarray, np.ndarray]:
    """(L, L_s) = (D - W, D + W)"""
    D = np.diag(g.degrees)
    W = g.adjacency
    return D - W, D + W


def gen_random_graph(n: int, tau: float, seed: int) -> Graph:
    """Erdős–Rényi sample: every pair is an edge with probability tau"""
    if n < 2:
        raise GraphError(f"need at least 2 agents, got {n}")
    if not (0.0 < tau <= 1.0):
        raise GraphError(f"connectivity ratio tau must lie in (0, 1], got {tau}")
    sample = nx.gnp_random_graph(n, tau, seed=seed)
    return Graph.from_pairs(n, sample.edges())


def gen_feasible_graph(n: int, tau: float, seed: int,
                       max_attempts: int = MAX_GRAPH_ATTEMPTS) -> Tuple[Graph, int]:
    """Resample with seed, seed+1, ... until the graph is connected and non-bipartite"""
    for attempt in range(max_attempts):
        g = gen_random_graph(n, tau, seed + attempt)
        report = validate_assumptions(spectra(g))
        if report.passed:
            if attempt > 0:
                logger.info("graph accepted after %d resamples (seed %d)", attempt, seed + attempt)
            return g, seed + attempt
        logger.debug("graph sample with seed %d rejected: %s", seed + attempt, report)
    raise GraphError(f"no connected non-bipartite graph in {max_attempts} samples "
                     f"(n={n}, tau={tau}, seed={seed})")


def complete_graph(n: int) -> Graph:
    if n < 2:
        raise GraphError(f"need at least 2 agents, got {n}")
    return Graph.from_pairs(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def ring_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError(f"a ring needs at least 3 agents, got {n}")
    return Graph.from_pairs(n, [(i, (i + 1) % n) for i in range(n)])


def spectra(g: Graph) -> SpectralSummary:
    L, L_s = laplacians(g)
    lam = eigh(L, eigvals_only=True)
    lam_hat = eigh(L_s, eigvals_only=True)
    connected = g.n >= 2 and lam[1] > EIG_TOL
    return SpectralSummary(
        lam=lam,
        lam_hat=lam_hat,
        connected=bool(connected),
        non_bipartite=bool(lam_hat[0] > EIG_TOL),
    )


def validate_assumptions(s: SpectralSummary) -> ValidationReport:
    failures = []
    if not s.connected:
        failures.append("graph not connected")
    if not s.non_bipartite:
        failures.append("L_s not positive definite")
    return ValidationReport(passed=not failures, failures=failures)


def incidence(g: Graph) -> EdgeOperator:
    """One row per ordered edge, both orientations (2|E| rows)"""
    rows = 2 * len(g.edges)
    M = np.zeros((rows, g.n))
    M_s = np.zeros((rows, g.n))
    r = 0
    for i, j in g.sorted_edges():
        for a, b in ((i, j), (j, i)):
            M[r, a], M[r, b] = 1.0, -1.0
            M_s[r, a], M_s[r, b] = 1.0, 1.0
            r += 1
    return EdgeOperator(M=M, M_s=M_s)


# ---------------------------------------------------------------------------
# Edge-list file: "n <count>" then one 1-indexed "i j" pair per line, i < j

def read_graph(path) -> Graph:
    path = Path(path)
    if not path.exists():
        raise GraphError(f"graph file not found: {path}")
    n: Optional[int] = None
    edges = set()
    with open(path, encoding='utf-8') as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 2 or parts[0] != 'n':
                    raise GraphError("expected header 'n <count>'", line=lineno)
                try:
                    n = int(parts[1])
                except ValueError:
                    raise GraphError(f"bad agent count {parts[1]!r}", line=lineno)
                continue
            if len(parts) != 2:
                raise GraphError(f"expected 'i j', got {line!r}", line=lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphError(f"non-integer node in {line!r}", line=lineno)
            if i == j:
                raise GraphError(f"self-loop on node {i}", line=lineno)
            if i > j:
                raise GraphError(f"pair must satisfy i < j, got {i} {j}", line=lineno)
            if i < 1 or j > n:
                raise GraphError(f"node out of range 1..{n}", line=lineno)
            if (i - 1, j - 1) in edges:
                raise GraphError(f"duplicate edge {i} {j}", line=lineno)
            edges.add((i - 1, j - 1))
    if n is None:
        raise GraphError(f"empty graph file: {path}")
    return Graph(n=n, edges=frozenset(edges))


def write_graph(g: Graph, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(f"n {g.n}\n")
        for i, j in g.sorted_edges():
            fh.write(f"{i + 1} {j + 1}\n")
