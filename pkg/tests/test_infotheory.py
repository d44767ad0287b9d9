"""Information identities checked against a second, loop-based implementation."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from actioncodec.infotheory import (
    entropy_bits,
    entropy_identities,
    marginal_token_entropies,
    nll_decomposition,
    plugin_entropy,
    sequence_entropy,
)
from actioncodec.toyworld import ToyWorld, build_toy_world


def loop_entropy(table: np.ndarray) -> float:
    """Oracle: explicit iteration, no vectorized marginalization."""
    total = 0.0
    for value in table.ravel():
        if value > 0:
            total -= value * math.log2(value)
    return total


def loop_marginal(joint: np.ndarray, keep_axes: tuple[int, ...]) -> np.ndarray:
    shape = tuple(joint.shape[a] for a in keep_axes)
    out = np.zeros(shape)
    for idx in itertools.product(*(range(s) for s in joint.shape)):
        key = tuple(idx[a] for a in keep_axes)
        out[key] += joint[idx]
    return out


class TestToyWorld:
    def test_random_table_sums_to_one(self):
        world = build_toy_world({"V": 3, "L": 2, "A": 4, "C": (3, 3)}, seed=7)
        assert abs(world.joint.sum() - 1.0) < 1e-12
        assert np.all(world.joint >= 0)

    def test_cardinality_bounds_enforced(self):
        with pytest.raises(ValueError, match="outside"):
            build_toy_world({"V": 1, "L": 2, "A": 2, "C": 2}, seed=0)
        with pytest.raises(ValueError, match="outside"):
            build_toy_world({"V": 2, "L": 2, "A": 17, "C": 2}, seed=0)

    def test_marginals_match_loop_oracle(self):
        world = build_toy_world({"V": 3, "L": 2, "A": 3, "C": (2, 2)}, seed=13)
        for axes in [(0,), (2,), (0, 1), (3, 4), (0, 1, 3, 4)]:
            np.testing.assert_allclose(
                world.marginal(axes), loop_marginal(world.joint, axes), atol=1e-15
            )

    def test_deterministic_preset_has_zero_conditional_entropy(self):
        world = build_toy_world({"V": 3, "L": 3, "A": 4, "C": (3, 3)}, preset="deterministic")
        report = entropy_identities(world)
        assert abs(report.h_c_given_vl) < 1e-12

    def test_independent_preset_has_zero_mutual_information(self):
        world = build_toy_world({"V": 3, "L": 2, "A": 4, "C": (3,)}, preset="independent", seed=3)
        report = entropy_identities(world)
        assert abs(report.i_c_a) < 1e-10
        assert abs(report.i_c_vl) < 1e-10


class TestEntropyIdentities:
    def test_terms_match_loop_oracle_seed7(self):
        world = build_toy_world({"V": 3, "L": 2, "A": 3, "C": (2, 3)}, seed=7)
        report = entropy_identities(world)
        j = world.joint
        h_vl = loop_entropy(loop_marginal(j, (0, 1)))
        h_vlc = loop_entropy(loop_marginal(j, (0, 1, 3, 4)))
        h_a = loop_entropy(loop_marginal(j, (2,)))
        h_ac = loop_entropy(loop_marginal(j, (2, 3, 4)))
        h_c = loop_entropy(loop_marginal(j, (3, 4)))
        assert abs(report.h_c_given_vl - (h_vlc - h_vl)) < 1e-9
        assert abs(report.h_c_given_a - (h_ac - h_a)) < 1e-9
        assert abs(report.i_c_a - (h_c + h_a - h_ac)) < 1e-9
        assert abs(report.i_c_vl - (h_c + h_vl - h_vlc)) < 1e-9

    def test_identities_hold_on_random_worlds(self):
        for seed in range(10):
            world = build_toy_world({"V": 3, "L": 2, "A": 4, "C": (3, 2)}, seed=seed)
            report = entropy_identities(world)
            assert abs(report.residual_entropy_decomposition) < 1e-9
            assert abs(report.residual_chain_rule) < 1e-9

    def test_mutual_information_non_negative(self):
        world = build_toy_world({"V": 4, "L": 3, "A": 4, "C": (2, 2)}, seed=21)
        report = entropy_identities(world)
        assert report.i_c_a > -1e-12
        assert report.i_c_vl > -1e-12
        for value in report.i_token_vl + report.i_token_history_given_vl:
            assert value > -1e-12


class TestNllDecomposition:
    def test_model_equals_data_gives_zero_kl(self):
        world = build_toy_world({"V": 2, "L": 2, "A": 3, "C": (3,)}, seed=5)
        p_vlc = world.marginal((0, 1, 3))
        p_vl = p_vlc.sum(axis=2, keepdims=True)
        cond = p_vlc / p_vl
        nll, kl, h = nll_decomposition(world, cond)
        assert abs(kl) < 1e-10
        assert abs(nll - h) < 1e-10

    def test_uniform_model_gives_log_cardinality(self):
        world = build_toy_world({"V": 2, "L": 2, "A": 3, "C": (4,)}, seed=6)
        uniform = np.full((2, 2, 4), 0.25)
        nll, kl, h = nll_decomposition(world, uniform)
        assert abs(nll - 2.0) < 1e-12  # log2(4)
        assert abs(nll - (kl + h)) < 1e-9

    def test_identity_on_random_pairs(self):
        for seed in range(8):
            world = build_toy_world({"V": 3, "L": 2, "A": 3, "C": (2, 2)}, seed=seed + 100)
            model = world.random_model_table(seed=seed + 200)
            nll, kl, h = nll_decomposition(world, model)
            # oracle: direct summation with explicit loops
            p = world.marginal((0, 1, 3, 4))
            oracle_nll = 0.0
            for idx in itertools.product(range(3), range(2), range(2), range(2)):
                if p[idx] > 0:
                    oracle_nll -= p[idx] * math.log2(model[idx])
            assert abs(nll - oracle_nll) < 1e-10
            assert abs(nll - (kl + h)) < 1e-9
            assert kl > -1e-12

    def test_support_violation_raises(self):
        world = build_toy_world({"V": 2, "L": 2, "A": 2, "C": (2,)}, preset="deterministic")
        bad = np.zeros((2, 2, 2))
        bad[..., 0] = 1.0
        with pytest.raises(ValueError, match="support"):
            nll_decomposition(world, bad)


class TestCorpusEstimators:
    def test_plugin_entropy_uniform(self):
        samples = np.repeat(np.arange(8), 10)
        assert abs(plugin_entropy(samples) - 3.0) < 1e-12

    def test_sequence_entropy_counts_distinct_rows(self):
        codes = np.array([[0, 1], [0, 1], [2, 3], [2, 3]])
        assert abs(sequence_entropy(codes) - 1.0) < 1e-12

    def test_subadditivity_on_random_corpora(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            codes = rng.integers(0, 8, size=(200, 4))
            h_joint = sequence_entropy(codes)
            h_marginals = marginal_token_entropies(codes).sum()
            assert h_joint <= h_marginals + 1e-9
            assert h_marginals <= 4 * 3.0 + 1e-9
