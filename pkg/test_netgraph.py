#!/usr/bin/env python3
"""
Network graph tests
Sampling, spectra, assumption checks, incidence operators and the edge-list format.
"""

import math

import networkx as nx
import numpy as np
import pytest

import netgraph
from netgraph import Graph
from sim_errors import GraphError


class TestSampling:
    def test_two_agents_full_ratio_gives_single_edge(self):
        for seed in (0, 1, 7):
            g = netgraph.gen_random_graph(2, 1.0, seed)
            assert g.edges == frozenset({(0, 1)})

    def test_edge_count_matches_ratio(self):
        g = netgraph.gen_random_graph(100, 0.4, seed=5)
        mean = 0.4 * 4950
        sd = math.sqrt(4950 * 0.4 * 0.6)
        assert abs(len(g.edges) - mean) <= 3 * sd

    def test_deterministic_given_seed(self):
        a = netgraph.gen_random_graph(30, 0.3, seed=9)
        b = netgraph.gen_random_graph(30, 0.3, seed=9)
        assert a.edges == b.edges

    @pytest.mark.parametrize("n,tau", [(5, 0.0), (5, 1.5), (1, 0.5)])
    def test_rejects_bad_parameters(self, n, tau):
        with pytest.raises(GraphError):
            netgraph.gen_random_graph(n, tau, seed=0)

    def test_feasible_graph_passes_assumptions(self):
        g, used = netgraph.gen_feasible_graph(12, 0.3, seed=2)
        assert used >= 2
        assert netgraph.validate_assumptions(netgraph.spectra(g)).passed

    def test_feasible_graph_gives_up(self):
        # two agents can only form a bipartite graph
        with pytest.raises(GraphError, match="no connected non-bipartite"):
            netgraph.gen_feasible_graph(2, 1.0, seed=0, max_attempts=3)


class TestSpectra:
    def test_triangle(self, k3_spectra):
        np.testing.assert_allclose(k3_spectra.lam, [0.0, 3.0, 3.0], atol=1e-12)
        np.testing.assert_allclose(k3_spectra.lam_hat, [1.0, 1.0, 4.0], atol=1e-12)
        assert k3_spectra.lambda_2 == pytest.approx(3.0)
        assert k3_spectra.lam_hat_n == pytest.approx(4.0)

    def test_even_ring_is_bipartite(self):
        report = netgraph.validate_assumptions(netgraph.spectra(netgraph.ring_graph(4)))
        assert not report.passed
        assert report.failures == ["L_s not positive definite"]

    def test_odd_ring_passes(self):
        assert netgraph.validate_assumptions(netgraph.spectra(netgraph.ring_graph(5))).passed

    def test_disconnected(self):
        g = Graph.from_pairs(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        report = netgraph.validate_assumptions(netgraph.spectra(g))
        assert "graph not connected" in report.failures

    def test_agrees_with_networkx(self):
        checked_connected = 0
        for seed in range(40):
            n = 3 + seed % 28
            g = netgraph.gen_random_graph(n, 0.3, seed)
            s = netgraph.spectra(g)
            G = g.to_networkx()
            assert s.connected == nx.is_connected(G)
            if s.connected:
                checked_connected += 1
                assert s.non_bipartite == (not nx.is_bipartite(G))
            else:
                # L_s is singular as soon as one component is bipartite (isolated vertices included)
                parts = [G.subgraph(c) for c in nx.connected_components(G)]
                assert s.non_bipartite == all(not nx.is_bipartite(p) for p in parts)
        assert checked_connected > 0

    def test_disconnected_with_isolated_vertex(self):
        g = Graph.from_pairs(4, [(0, 1), (1, 2), (0, 2)])
        s = netgraph.spectra(g)
        assert not s.connected
        assert not s.non_bipartite
        assert not nx.is_bipartite(g.to_networkx())

    def test_laplacian_row_sums(self):
        g = netgraph.gen_random_graph(15, 0.5, seed=4)
        L, L_s = netgraph.laplacians(g)
        np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(L_s.sum(axis=1), 2.0 * g.degrees)


class TestIncidence:
    def test_factorizes_both_laplacians(self):
        g, _ = netgraph.gen_feasible_graph(8, 0.5, seed=1)
        op = netgraph.incidence(g)
        L, L_s = netgraph.laplacians(g)
        assert op.M.shape == (2 * len(g.edges), g.n)
        np.testing.assert_allclose(0.5 * op.M.T @ op.M, L, atol=1e-12)
        np.testing.assert_allclose(0.5 * op.M_s.T @ op.M_s, L_s, atol=1e-12)

    def test_neighbors_sorted(self):
        g = Graph.from_pairs(4, [(2, 0), (0, 1), (3, 0)])
        assert g.neighbors(0) == (1, 2, 3)
        assert g.neighbors(3) == (0,)


class TestEdgeListFile:
    def test_write_then_read(self, tmp_path):
        g, _ = netgraph.gen_feasible_graph(10, 0.4, seed=3)
        path = tmp_path / "g.txt"
        netgraph.write_graph(g, path)
        assert path.read_text().splitlines()[0] == "n 10"
        assert netgraph.read_graph(path) == g

    @pytest.mark.parametrize("body,line,fragment", [
        ("n 3\n1 2\n1 2\n", 3, "duplicate"),
        ("n 3\n2 2\n", 2, "self-loop"),
        ("n 3\n1 2\n3 1\n", 3, "i < j"),
        ("n 3\n1 4\n", 2, "out of range"),
        ("# triangle\n3\n", 2, "header"),
        ("n 3\n1 x\n", 2, "non-integer"),
    ])
    def test_errors_carry_line_numbers(self, tmp_path, body, line, fragment):
        path = tmp_path / "bad.txt"
        path.write_text(body)
        with pytest.raises(GraphError, match=fragment) as info:
            netgraph.read_graph(path)
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}:")

    def test_missing_file(self, tmp_path):
        with pytest.raises(GraphError, match="not found"):
            netgraph.read_graph(tmp_path / "nope.txt")
