#!/usr/bin/env python3
"""
Local objectives - per-agent f_i with exact derivatives
Quadratic and regularized logistic losses, their convexity constants,
synthetic data generators and CSV ingestion.
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh, eigvalsh
from scipy.special import expit

from sim_errors import DataError, ObjectiveError

logger = logging.getLogger(__name__)

LABEL_FLIP_RATE = 0.1


class ObjectiveKind(Enum):
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class ConvexityConstants:
    """Strong convexity modulus v and gradient Lipschitz constant ell"""
    v: float
    ell: float


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """f(x) = 1/2 x^T A x - b^T x"""
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
            raise ObjectiveError(f"A {A.shape} and b {b.shape} are inconsistent")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ObjectiveError("A must be symmetric")
        if eigvalsh(A)[0] <= 0:
            raise ObjectiveError("A must be positive definite")
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'b', b)

    kind = ObjectiveKind.QUADRATIC

    @property
    def dimension(self) -> int:
        return self.b.shape[0]

    def evaluate(self, x: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        Ax = self.A @ x
        return 0.5 * float(x @ Ax) - float(self.b @ x), Ax - self.b, self.A

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.A


@dataclass(frozen=True, eq=False)
class LogisticObjective:
    """f(x) = 1/m sum log(1 + exp(-b_j a_j^T x)) + lambda_reg/2 ||x||^2"""
    features: np.ndarray = field(repr=False)   # m x d
    labels: np.ndarray = field(repr=False)     # m, entries in {-1, +1}
    lambda_reg: float = 0.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).ravel()
        if a.shape[0] < 1:
            raise ObjectiveError("logistic objective needs at least one sample")
        if a.shape[0] != y.shape[0]:
            raise ObjectiveError(f"{a.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ObjectiveError("labels must be -1 or +1")
        if self.lambda_reg < 0:
            raise ObjectiveError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        object.__setattr__(self, 'features', a)
        object.__setattr__(self, 'labels', y)

    kind = ObjectiveKind.LOGISTIC

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.features.shape[0]

    def evaluate(self, x: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        margins = self.labels * (self.features @ x)
        value = float(np.mean(np.logaddexp(0.0, -margins)))
        value += 0.5 * self.lambda_reg * float(x @ x)
        return value, self.gradient(x, margins), self.hessian(x, margins)

    def gradient(self, x: np.ndarray, margins=None) -> np.ndarray:
        if margins is None:
            margins = self.labels * (self.features @ x)
        weights = -self.labels * expit(-margins)
        return self.features.T @ weights / self.m + self.lambda_reg * x

    def hessian(self, x: np.ndarray, margins=None) -> np.ndarray:
        if margins is None:
            margins = self.labels * (self.features @ x)
        s = expit(margins)
        curvature = s * (1.0 - s)
        H = (self.features.T * curvature) @ self.features / self.m
        H += self.lambda_reg * np.eye(self.dimension)
        return 0.5 * (H + H.T)


LocalObjective = Union[QuadraticObjective, LogisticObjective]


def _check_point(obj: LocalObjective, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != obj.dimension:
        raise ObjectiveError(f"point has dimension {x.shape[0]}, objective expects {obj.dimension}")
    return x


def value_grad_hess(obj: LocalObjective, x) -> Tuple[float, np.ndarray, np.ndarray]:
    return obj.evaluate(_check_point(obj, x))


def gradient(obj: LocalObjective, x) -> np.ndarray:
    return obj.gradient(_check_point(obj, x))


def hessian(obj: LocalObjective, x) -> np.ndarray:
    return obj.hessian(_check_point(obj, x))


def convexity_constants(obj: LocalObjective) -> ConvexityConstants:
    if obj.kind is ObjectiveKind.QUADRATIC:
        eig = eigvalsh(obj.A)
        return ConvexityConstants(v=float(eig[0]), ell=float(eig[-1]))
    if obj.lambda_reg <= 0:
        raise ObjectiveError("not strongly convex: logistic loss needs lambda_reg > 0")
    gram = obj.features.T @ obj.features / obj.m
    # sigmoid curvature is at most 1/4
    top = float(eigh(gram, eigvals_only=True)[-1])
    return ConvexityConstants(v=obj.lambda_reg, ell=obj.lambda_reg + top / 4.0)


def aggregate_constants(constants: Sequence[ConvexityConstants]) -> ConvexityConstants:
    """v = min_i v_i, ell = max_i ell_i"""
    if not constants:
        raise ObjectiveError("no objectives given")
    return ConvexityConstants(v=min(c.v for c in constants), ell=max(c.ell for c in constants))


def total_value_grad_hess(objectives: Sequence[LocalObjective], x) -> Tuple[float, np.ndarray, np.ndarray]:
    """Derivatives of f(x) = sum_i f_i(x)"""
    value, grad, hess = 0.0, 0.0, 0.0
    for obj in objectives:
        v, g, h = value_grad_hess(obj, x)
        value, grad, hess = value + v, grad + g, hess + h
    return value, grad, hess


# ---------------------------------------------------------------------------
# Data generation

def gen_synthetic_logistic(n: int, m: int, d: int, seed: int,
                           lambda_reg: float = 0.01,
                           flip_rate: float = LABEL_FLIP_RATE) -> List[LogisticObjective]:
    """Gaussian features, labels from a planted separator with flip_rate noise"""
    if min(n, m, d) < 1:
        raise DataError(f"agents, samples and dimension must be positive (n={n}, m={m}, d={d})")
    rng = np.random.default_rng(seed)
    planted = rng.standard_normal(d)
    objectives = []
    for _ in range(n):
        a = rng.standard_normal((m, d))
        labels = np.where(a @ planted >= 0, 1.0, -1.0)
        flips = rng.random(m) < flip_rate
        labels[flips] *= -1.0
        objectives.append(LogisticObjective(features=a, labels=labels, lambda_reg=lambda_reg))
    return objectives


def gen_synthetic_quadratic(n: int, d: int, seed: int, condition: float = 10.0) -> List[QuadraticObjective]:
    """Random rotations of diag spectra spread over [1, condition]"""
    if min(n, d) < 1:
        raise DataError(f"agents and dimension must be positive (n={n}, d={d})")
    if condition < 1.0:
        raise DataError(f"condition number must be >= 1, got {condition}")
    rng = np.random.default_rng(seed)
    objectives = []
    for _ in range(n):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eig = rng.uniform(1.0, condition, size=d)
        eig[0] = 1.0
        A = (Q * eig) @ Q.T
        objectives.append(QuadraticObjective(A=0.5 * (A + A.T), b=rng.standard_normal(d)))
    return objectives


# ---------------------------------------------------------------------------
# CSV ingestion: rows of "label,f1,...,fd"

_LABELS = {'1': 1.0, '+1': 1.0, '-1': -1.0, '0': -1.0}


def _coerce_label(token: str, lineno: int) -> float:
    token = token.strip()
    if token in _LABELS:
        return _LABELS[token]
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"label {token!r} is not numeric", line=lineno)
    if value == 1.0:
        return 1.0
    if value in (-1.0, 0.0):
        return -1.0
    raise DataError(f"label {token!r} outside {{-1, +1, 0, 1}}", line=lineno)


def load_csv(path) -> List[Tuple[float, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    samples = []
    dim = None
    with open(path, newline='', encoding='utf-8') as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError("expected label followed by at least one feature", line=lineno)
            label = _coerce_label(row[0], lineno)
            try:
                features = np.array([float(cell) for cell in row[1:]])
            except ValueError:
                raise DataError(f"malformed feature in {','.join(row)!r}", line=lineno)
            if not np.all(np.isfinite(features)):
                raise DataError("non-finite feature", line=lineno)
            if dim is None:
                dim = features.shape[0]
            elif features.shape[0] != dim:
                raise DataError(f"inconsistent dimension: expected {dim} features, "
                                f"got {features.shape[0]}", line=lineno)
            samples.append((label, features))
    if not samples:
        raise DataError(f"no samples in {path}")
    return samples


def write_csv(samples: Sequence[Tuple[float, np.ndarray]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        for label, features in samples:
            writer.writerow([int(label)] + [repr(float(f)) for f in features])


def partition_round_robin(samples: Sequence[Tuple[float, np.ndarray]], n: int,
                          lambda_reg: float) -> List[LogisticObjective]:
    """Sample k goes to agent k mod n"""
    if len(samples) < n:
        raise DataError(f"{len(samples)} samples cannot cover {n} agents")
    objectives = []
    for i in range(n):
        mine = samples[i::n]
        objectives.append(LogisticObjective(
            features=np.vstack([f for _, f in mine]),
            labels=np.array([lab for lab, _ in mine]),
            lambda_reg=lambda_reg,
        ))
    return objectives


def objectives_to_samples(objectives: Sequence[LogisticObjective]) -> List[Tuple[float, np.ndarray]]:
    """Interleave agent datasets so partition_round_robin restores them"""
    out = []
    m_max = max(obj.m for obj in objectives)
    for j in range(m_max):
        for obj in objectives:
            if j < obj.m:
                out.append((float(obj.labels[j]), obj.features[j]))
    return out
