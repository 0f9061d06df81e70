import math
from itertools import combinations, product

import numpy as np
import pytest

from oracles import brute_force_reliability, random_cluster
from consrel.errors import ComputationError, ParamError
from consrel.exact import (
    ClusterParams,
    ReliabilityResult,
    activation_probability,
    exact_reliability,
    exact_reliability_iid,
    multi_instance_reliability,
    node_only_reliability,
)
from consrel.protocols import GraphKind, builtin_protocol, default_fault_threshold, protocol_family
from consrel.rng import substream


def binom_tail(n, k, p):
    return sum(math.comb(n, x) * p**x * (1 - p) ** (n - x) for x in range(k, n + 1))


class TestActivationProbability:
    def test_one_to_many_is_downlink(self):
        params = ClusterParams.iid(4, 1, 1.0, 0.9)
        assert activation_probability(GraphKind.ONE_TO_MANY, 2, params, {0, 1, 2, 3}) == 0.9

    def test_many_to_one_is_uplink(self):
        params = ClusterParams(4, 1, 1.0, 0.9, [0.5, 0.6, 0.7, 0.8], 0.9)
        assert activation_probability(GraphKind.MANY_TO_ONE, 3, params, {0, 1, 2, 3}) == 0.8

    def test_many_to_many_perfect_links(self):
        params = ClusterParams.iid(4, 1, 1.0, 1.0)
        assert activation_probability(GraphKind.MANY_TO_MANY, 0, params, {0, 1, 2, 3}) == 1.0

    def test_many_to_many_enumerated_value(self):
        # 3 senders at 0.9 each, need >= 2 deliveries: 3*0.81*0.1 + 0.729
        params = ClusterParams.iid(4, 1, 1.0, 0.9)
        got = activation_probability(GraphKind.MANY_TO_MANY, 0, params, {0, 1, 2, 3})
        assert got == pytest.approx(0.972, abs=1e-12)

    def test_node_not_in_prior_set(self):
        params = ClusterParams.iid(4, 1, 1.0, 0.9)
        with pytest.raises(ParamError) as err:
            activation_probability(GraphKind.MANY_TO_MANY, 0, params, {1, 2, 3})
        assert err.value.code == "NODE_NOT_IN_PRIOR_SET"

    def test_conditional_transition_normalizes(self):
        # For a fixed prior set, subset probabilities built from activation
        # probabilities must sum to 1 over all subsets (thresholds ignored).
        rng = np.random.default_rng(5)
        params = random_cluster(rng, 5, 1)
        prior = {0, 2, 3, 4}
        for kind in GraphKind:
            act = {i: activation_probability(kind, i, params, prior) for i in prior}
            total = 0.0
            members = sorted(prior)
            for bits in product((0, 1), repeat=len(members)):
                p = 1.0
                for i, b in zip(members, bits):
                    p *= act[i] if b else 1.0 - act[i]
                total += p
            assert total == pytest.approx(1.0, abs=1e-12)


class TestExactReliability:
    def test_raft_example(self):
        res = exact_reliability(builtin_protocol("raft"), ClusterParams.iid(3, 1, 1.0, 0.9))
        expected = sum(math.comb(3, x) * 0.81**x * 0.19 ** (3 - x) for x in (2, 3))
        assert res.p_c == pytest.approx(expected, abs=1e-12)
        assert res.p_c == pytest.approx(0.905418, abs=1e-6)
        assert res.method == "exact"

    @pytest.mark.parametrize("name", ["raft", "paxos", "pbft", "hotstuff", "hotstuff_variant"])
    def test_all_probabilities_one(self, name):
        res = exact_reliability(builtin_protocol(name), ClusterParams.iid(4, 1, 1.0, 1.0))
        assert res.p_c == 1.0 and res.p_f == 0.0

    def test_dead_links_mean_certain_failure(self):
        res = exact_reliability(builtin_protocol("raft"), ClusterParams.iid(3, 1, 1.0, 0.0))
        assert res.p_c == 0.0

    @pytest.mark.parametrize("name", ["raft", "paxos", "pbft", "hotstuff"])
    def test_matches_brute_force(self, name):
        rng = np.random.default_rng(17)
        g = builtin_protocol(name)
        for n in (2, 3, 4):
            f = default_fault_threshold(protocol_family(name), n)
            params = random_cluster(rng, n, f)
            expected = brute_force_reliability(g, params)
            assert exact_reliability(g, params).p_c == pytest.approx(expected, abs=1e-12)

    def test_enumeration_cap(self):
        with pytest.raises(ComputationError) as err:
            exact_reliability(builtin_protocol("raft"), ClusterParams.iid(11, 5, 1.0, 0.9))
        assert err.value.code == "N_TOO_LARGE"
        with pytest.raises(ComputationError) as err:
            exact_reliability(builtin_protocol("pbft"), ClusterParams.iid(9, 3, 1.0, 0.9))
        assert err.value.code == "N_TOO_LARGE"

    def test_monotone_in_every_parameter(self):
        rng = np.random.default_rng(23)
        g = builtin_protocol("pbft")
        for _ in range(3):
            params = random_cluster(rng, 4, 1, lo=0.5, hi=0.95)
            base = exact_reliability(g, params).p_c
            bumped = ClusterParams(
                4, 1,
                np.minimum(params.node_reliability + 0.04, 1.0),
                params.link_down, params.link_up, params.link_mesh,
            )
            assert exact_reliability(g, bumped).p_c >= base - 1e-12
            mesh = np.array(params.link_mesh)
            mesh[0, 1] = min(mesh[0, 1] + 0.05, 1.0)
            bumped = ClusterParams(4, 1, params.node_reliability, params.link_down, params.link_up, mesh)
            assert exact_reliability(g, bumped).p_c >= base - 1e-12
            down = np.array(params.link_down)
            down[2] = min(down[2] + 0.05, 1.0)
            bumped = ClusterParams(4, 1, params.node_reliability, down, params.link_up, params.link_mesh)
            assert exact_reliability(g, bumped).p_c >= base - 1e-12


class TestExactReliabilityIid:
    def test_matches_heterogeneous_path(self):
        res = exact_reliability_iid(builtin_protocol("raft"), 3, 1, 1.0, 0.9)
        assert res.p_c == pytest.approx(0.905418, abs=1e-6)
        het = exact_reliability(builtin_protocol("raft"), ClusterParams.iid(3, 1, 1.0, 0.9))
        assert res.p_c == pytest.approx(het.p_c, abs=1e-12)

    @pytest.mark.parametrize("name", ["raft", "paxos", "pbft", "hotstuff", "hotstuff_variant"])
    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_iid_agreement_property(self, name, n):
        f = default_fault_threshold(protocol_family(name), n)
        g = builtin_protocol(name)
        rng = np.random.default_rng(n * 101)
        for _ in range(3):
            p_n, p_l = rng.uniform(0.6, 1.0, 2)
            a = exact_reliability(g, ClusterParams.iid(n, f, p_n, p_l)).p_c
            b = exact_reliability_iid(g, n, f, p_n, p_l).p_c
            assert a == pytest.approx(b, abs=1e-12)

    def test_pbft_perfect_links_reduces_to_node_binomial(self):
        res = exact_reliability_iid(builtin_protocol("pbft"), 12, 4, 0.99, 1.0)
        assert res.p_c == pytest.approx(binom_tail(12, 8, 0.99), abs=1e-14)

    def test_trivial_one(self):
        assert exact_reliability_iid(builtin_protocol("hotstuff"), 7, 2, 1.0, 1.0).p_c == 1.0

    def test_tiny_failure_rates_survive_rounding(self):
        res = exact_reliability_iid(builtin_protocol("raft"), 12, 6, 1.0, 1.0 - 1e-6)
        # p_jf ~ 2e-6 per node, failure needs 7 nodes: ~ C(12,7) * (2e-6)^7
        assert 0.0 < res.p_f < 1e-35
        assert res.p_c == 1.0  # complement rounds to 1 in float


class TestNodeOnlyReliability:
    def test_binomial_example(self):
        res = node_only_reliability(builtin_protocol("raft"), ClusterParams.iid(4, 1, 0.9, 0.5))
        assert res.p_c == pytest.approx(binom_tail(4, 3, 0.9), abs=1e-12)
        assert res.p_c == pytest.approx(0.9477, abs=1e-12)

    def test_perfect_nodes(self):
        res = node_only_reliability(builtin_protocol("pbft"), ClusterParams.iid(4, 1, 1.0, 0.7))
        assert res.p_c == 1.0

    def test_two_nodes_no_tolerance(self):
        params = ClusterParams(2, 0, [0.5, 0.5], 1.0, 1.0, 1.0)
        assert node_only_reliability(builtin_protocol("raft"), params).p_c == pytest.approx(0.25)

    def test_equals_exact_with_perfect_links(self):
        rng = np.random.default_rng(3)
        params = random_cluster(rng, 5, 2)
        perfect = params.with_perfect_links()
        for name in ("raft", "pbft"):
            a = node_only_reliability(builtin_protocol(name), params).p_c
            b = exact_reliability(builtin_protocol(name), perfect).p_c
            assert a == pytest.approx(b, abs=1e-12)


class TestMultiInstance:
    def test_w_must_be_positive(self):
        with pytest.raises(ParamError) as err:
            multi_instance_reliability(builtin_protocol("raft"), ClusterParams.iid(3, 1, 1.0, 0.9), 0)
        assert err.value.code == "W_NONPOSITIVE"

    def test_single_instance_degenerates(self):
        params = ClusterParams.iid(3, 1, 0.95, 0.9)
        g = builtin_protocol("raft")
        single = exact_reliability(g, params).p_c
        assert multi_instance_reliability(g, params, 1, "exact") == pytest.approx(single, abs=1e-12)
        assert multi_instance_reliability(g, params, 1, "approx") == pytest.approx(single, abs=1e-12)

    def test_approx_arithmetic_with_perfect_nodes(self):
        # with p_N = 1 the node-only term is 1, so approx = w*p_c - (w-1)
        g = builtin_protocol("raft")
        params = ClusterParams.iid(3, 1, 1.0, 0.998735)
        p_c = exact_reliability(g, params).p_c
        got = multi_instance_reliability(g, params, 5, "approx")
        assert got == pytest.approx(5 * p_c - 4, abs=1e-12)

    def test_approx_clamps(self):
        params = ClusterParams.iid(3, 1, 0.9, 0.5)
        assert multi_instance_reliability(builtin_protocol("raft"), params, 50, "approx") == 0.0

    def test_exact_vs_monte_carlo(self):
        # Sample the fault set once per run, then draw W independent rounds
        # of link outcomes; compare the all-success frequency.
        g = builtin_protocol("raft")
        n, f, w, runs = 3, 1, 10, 10**6
        p_node, p_link = 0.95, 0.99
        params = ClusterParams.iid(n, f, p_node, p_link)
        expected = multi_instance_reliability(g, params, w, "exact")

        rng = substream(2024, 77)
        ok_runs = 0
        chunk = 10**5
        for _ in range(runs // chunk):
            alive = rng.random((chunk, n)) < p_node
            ok = alive.sum(axis=1) >= n - f
            for _ in range(w):
                down = rng.random((chunk, n)) < p_link
                up = rng.random((chunk, n)) < p_link
                ok &= (alive & down & up).sum(axis=1) >= n - f
            ok_runs += int(ok.sum())
        p_hat = ok_runs / runs
        se = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / runs)
        assert abs(p_hat - expected) <= 3 * se

    def test_exact_mode_brute_force_two_nodes(self):
        # n=2, f=1: success needs both phases to keep >= 1 node.
        params = ClusterParams(2, 1, [0.9, 0.8], [0.95, 0.9], [0.85, 0.99], 1.0)
        g = builtin_protocol("raft")
        w = 3
        total = 0.0
        for bits in product((0, 1), repeat=2):
            p = 1.0
            for i, b in enumerate(bits):
                q = params.node_reliability[i]
                p *= q if b else 1 - q
            alive = [i for i, b in enumerate(bits) if b]
            cond = 0.0
            if alive:
                joint = {i: params.link_down[i] * params.link_up[i] for i in alive}
                for k in range(1, len(alive) + 1):
                    for surv in combinations(alive, k):
                        term = 1.0
                        for i in alive:
                            term *= joint[i] if i in surv else 1 - joint[i]
                        cond += term
            total += p * cond**w
        got = multi_instance_reliability(g, params, w, "exact")
        assert got == pytest.approx(total, abs=1e-12)


class TestReliabilityResult:
    def test_pair_consistency_enforced(self):
        with pytest.raises(ParamError):
            ReliabilityResult(0.7, 0.2, "exact")

    def test_unknown_method_rejected(self):
        with pytest.raises(ParamError):
            ReliabilityResult(0.5, 0.5, "guesswork")

    def test_stored_pair_sums_to_one(self):
        res = ReliabilityResult.from_failure(0.094582, "exact")
        assert abs(res.p_c + res.p_f - 1.0) <= 1e-12
