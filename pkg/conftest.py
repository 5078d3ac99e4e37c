#!/usr/bin/env python3
"""Shared builders for the test suite"""

import numpy as np
import pytest

import engine
import netgraph
import objectives as obj_mod
from compressors import make_compressor


@pytest.fixture
def k3():
    return netgraph.complete_graph(3)


@pytest.fixture
def k3_spectra(k3):
    return netgraph.spectra(k3)


def quadratic_problem(n: int, d: int, seed: int, tau: float = 0.6, condition: float = 5.0):
    graph, _ = netgraph.gen_feasible_graph(n, tau, seed)
    objs = obj_mod.gen_synthetic_quadratic(n, d, seed, condition=condition)
    return graph, objs


def logistic_problem(n: int, m: int, d: int, seed: int, tau: float = 0.5, lambda_reg: float = 0.05):
    graph, _ = netgraph.gen_feasible_graph(n, tau, seed)
    objs = obj_mod.gen_synthetic_logistic(n, m, d, seed, lambda_reg=lambda_reg)
    return graph, objs


def run_config(d: int, c: float = 1.0, compressor: str = 'identity', bits: int = 2,
               schedule=None, **kwargs) -> engine.RunConfig:
    return engine.RunConfig(
        c=c,
        compressor=make_compressor(compressor, d, bits=bits),
        schedule=schedule or engine.ThresholdSchedule.zero(),
        **kwargs,
    )


@pytest.fixture
def small_quadratic():
    return quadratic_problem(6, 3, seed=11)


@pytest.fixture
def small_logistic():
    return logistic_problem(6, 8, 4, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
