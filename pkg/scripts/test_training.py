"""
Tests for the loss terms, Adam, the loss trace and the training loop
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError

import tensor_core as tc
import training as tr
from errors import ConfigError, NumericError, ShapeError
from hifinet_model import VARIANTS, HiFiNet, LossWeights


class TestAlignment:
    def test_single_parent_is_zero(self):
        rng = np.random.default_rng(0)
        loss = tr.alignment_term(rng.standard_normal((5, 3)), rng.standard_normal((1, 3)), np.ones((5, 1)), 0.2)
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_indistinguishable_parents(self):
        loss = tr.alignment_term([[1.0, 0.0]], [[0.0, 1.0], [0.0, -1.0]], [[0.6, 0.4]], 0.2)
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_sharp_temperature(self):
        loss = tr.alignment_term([[1.0, 0.0]], [[1.0, 0.0], [-1.0, 0.0]], [[0.9, 0.1]], 0.05)
        assert 0.0 <= loss.item() < 1e-8

    def test_positive_follows_argmax(self):
        # the same child aligned to the far parent pays log(1 + e^(-2/τ)) + 2/τ
        loss = tr.alignment_term([[1.0, 0.0]], [[1.0, 0.0], [-1.0, 0.0]], [[0.1, 0.9]], 0.5)
        assert loss.item() == pytest.approx(4.0 + math.log1p(math.exp(-4.0)), abs=1e-12)

    def test_level_average(self):
        single = tr.alignment_term([[1.0, 0.0]], [[0.0, 1.0], [0.0, -1.0]], [[0.6, 0.4]], 0.2)
        loss = tr.alignment_loss([[1.0, 0.0]], [[0.0, 1.0], [0.0, -1.0]], [[0.6, 0.4]],
                                 [[3.0, 3.0]], [[1.0], [1.0]], 0.2)
        assert loss.item() == pytest.approx(single.item() / 2.0, abs=1e-12)

    def test_no_levels(self):
        assert tr.alignment_loss(np.ones((3, 2)), None, None, None, None, 0.2).item() == 0.0

    def test_bad_shapes(self):
        with pytest.raises(ShapeError):
            tr.alignment_term(np.ones((3, 2)), np.ones((2, 2)), np.ones((3, 3)), 0.2)

    def test_bad_temperature(self):
        with pytest.raises(ConfigError):
            tr.alignment_term(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 1)), 0.0)


class TestReconstruction:
    def test_example(self):
        loss = tr.reconstruction_loss([[1.0, 1.0], [2.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]])
        assert loss.item() == pytest.approx(3.0)

    def test_identical(self):
        h = np.random.default_rng(1).standard_normal((4, 3))
        assert tr.reconstruction_loss(h, h).item() == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tr.reconstruction_loss(np.zeros((2, 2)), np.zeros((3, 2)))


class TestSemantic:
    def test_zero_features_count_edges(self):
        adjacency = np.zeros((4, 4))
        adjacency[0, 1] = adjacency[1, 2] = adjacency[2, 3] = 1.0
        loss = tr.semantic_loss(np.zeros((4, 3)), adjacency, np.zeros((4, 4)), lam=1.0)
        assert loss.item() == pytest.approx(3.0 / 16.0)

    def test_two_segment_oracle(self):
        adjacency = np.array([[0.0, 1.0], [0.0, 0.0]])
        od = np.array([[0.0, 1.0], [1.0, 0.0]])
        loss = tr.semantic_loss([[1.0, 0.0], [0.0, 1.0]], adjacency, od, lam=0.5)
        # target [[0, 1], [0.5, 0]] against the identity Gram matrix
        assert loss.item() == pytest.approx(3.25 / 4.0)

    def test_normalised_gram_ignores_scale(self):
        rng = np.random.default_rng(2)
        h = rng.standard_normal((5, 3))
        adjacency = (rng.random((5, 5)) < 0.3).astype(float)
        od = np.zeros((5, 5))
        a = tr.semantic_loss(h, adjacency, od, 0.5).item()
        b = tr.semantic_loss(h * 7.0, adjacency, od, 0.5).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_raw_gram(self):
        loss = tr.semantic_loss([[2.0]], np.zeros((1, 1)), np.zeros((1, 1)), 0.5, gram="raw")
        assert loss.item() == pytest.approx(16.0)

    def test_row_subset(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal((6, 2))
        adjacency = (rng.random((6, 6)) < 0.3).astype(float)
        od = rng.random((6, 6))
        full = tr.semantic_loss(h, adjacency, od, 0.3).item()
        everything = tr.semantic_loss(h, adjacency, od, 0.3, rows=np.arange(6)).item()
        assert everything == pytest.approx(full, rel=1e-12)

    def test_bad_lambda(self):
        with pytest.raises(ConfigError):
            tr.semantic_loss(np.ones((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), 1.5)

    def test_bad_shapes(self):
        with pytest.raises(ShapeError):
            tr.semantic_loss(np.ones((2, 2)), np.zeros((3, 3)), np.zeros((2, 2)), 0.5)


class TestEntropy:
    def test_one_hot(self):
        assert tr.assignment_entropy(np.eye(3)).item() == pytest.approx(0.0, abs=1e-15)

    def test_uniform(self):
        assert tr.assignment_entropy(np.full((4, 4), 0.25)).item() == pytest.approx(math.log(4.0))

    def test_average_over_levels(self):
        loss = tr.entropy_loss(np.eye(2), np.full((3, 2), 0.5))
        assert loss.item() == pytest.approx(math.log(2.0) / 2.0)

    def test_no_levels(self):
        assert tr.entropy_loss(None, None).item() == 0.0

    def test_decreases_from_uniform_to_one_hot(self):
        uniform, one_hot = np.full((3, 4), 0.25), np.eye(4)[[0, 2, 3]]
        values = [tr.entropy_loss((1 - t) * uniform + t * one_hot).item() for t in np.linspace(0.0, 1.0, 21)]
        assert values[0] == pytest.approx(math.log(4.0))
        assert values[-1] == pytest.approx(0.0, abs=1e-15)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_sharpening_lowers_entropy(self):
        values = []
        for p in (0.5, 0.6, 0.8, 0.95, 1.0):
            values.append(tr.assignment_entropy([[p, 1.0 - p]]).item())
        assert all(a > b for a, b in zip(values, values[1:]))


class TestTotalLoss:
    def _components(self):
        c = tc.constant
        return tr.LossComponents(align=c([[1.0]]), rec=c([[2.0]]), sem=c([[3.0]]), ent=c([[4.0]]))

    def test_weighted_sum(self):
        weights = LossWeights(gamma1=1.0, gamma2=0.5, gamma3=2.0, gamma4=0.0)
        assert tr.total_loss(self._components(), weights).item() == pytest.approx(1.0 + 1.0 + 6.0)

    @pytest.mark.parametrize("selected", range(4))
    def test_single_term(self, selected):
        gammas = {f"gamma{i + 1}": float(i == selected) for i in range(4)}
        value = tr.total_loss(self._components(), LossWeights(**gammas)).item()
        assert value == pytest.approx(selected + 1.0)

    def test_negative_weight(self):
        weights = LossWeights.model_construct(gamma1=-1.0, gamma2=1.0, gamma3=1.0, gamma4=1.0)
        with pytest.raises(ConfigError):
            tr.total_loss(self._components(), weights)

    def test_negative_weight_rejected_by_schema(self):
        with pytest.raises(ValidationError):
            LossWeights(gamma3=-0.1)

    def test_lambda_alias(self):
        assert LossWeights(**{"lambda": 0.25}).lambda_ == 0.25


class TestAdam:
    def _store(self):
        store = tc.ParamStore()
        store.add("w", [[1.0, -2.0]])
        return store

    def test_zero_gradient_is_no_op(self):
        store = self._store()
        tr.adam_step(store, tr.AdamState())
        np.testing.assert_array_equal(store["w"].value, [[1.0, -2.0]])

    def test_first_step_moves_by_lr(self):
        store = self._store()
        store["w"].grad = np.array([[3.0, -0.5]])
        tr.adam_step(store, tr.AdamState(), lr=1e-3)
        np.testing.assert_allclose(store["w"].value, [[1.0 - 1e-3, -2.0 + 1e-3]], atol=1e-9)

    def test_deterministic(self):
        results = []
        for _ in range(2):
            store, state = self._store(), tr.AdamState()
            for step in range(5):
                store["w"].grad = np.array([[0.1 * step, -1.0]])
                tr.adam_step(store, state)
            results.append(store["w"].value.copy())
        np.testing.assert_array_equal(results[0], results[1])

    def test_non_finite_gradient_names_parameter(self):
        store = self._store()
        store["w"].grad = np.array([[np.nan, 0.0]])
        with pytest.raises(NumericError, match="'w'"):
            tr.adam_step(store, tr.AdamState())
        np.testing.assert_array_equal(store["w"].value, [[1.0, -2.0]])


class TestLossTrace:
    def test_csv_round_trip(self, tmp_path):
        trace = tr.LossTrace()
        trace.append(tr.LossRecord(1, 0.1, 0.2, 1 / 3, 0.4, 1.0333333333333334))
        trace.append(tr.LossRecord(2, 0.05, 0.1, 0.3, 0.2, 0.65))
        path = tmp_path / "loss_trace.csv"
        trace.to_csv(path)
        assert path.read_text().splitlines()[0] == ",".join(tr.TRACE_COLUMNS)
        assert tr.LossTrace.from_csv(path).records == trace.records

    def test_empty(self):
        trace = tr.LossTrace()
        assert len(trace) == 0
        assert trace.initial_total is None and trace.final_total is None


class TestTrain:
    def _data(self, toy_bundle, config):
        net, trajs, _, _ = toy_bundle
        return tr.prepare_training_data(net, trajs, config, seed=0)

    def test_zero_epochs(self, toy_bundle, toy_config):
        config = toy_config.model_copy(update={"epochs": 0})
        model, trace = tr.train(config, self._data(toy_bundle, config), seed=0)
        assert len(trace) == 0
        assert isinstance(model, HiFiNet)

    def test_same_seed_same_trace(self, toy_bundle, toy_config):
        data = self._data(toy_bundle, toy_config)
        _, first = tr.train(toy_config, data, seed=3)
        _, second = tr.train(toy_config, data, seed=3)
        assert first.records == second.records

    def test_loss_decreases(self, toy_bundle, toy_config):
        config = toy_config.model_copy(update={"epochs": 30, "lr": 5e-3})
        _, trace = tr.train(config, self._data(toy_bundle, config), seed=0)
        assert len(trace) == 30
        assert [r.epoch for r in trace.records] == list(range(1, 31))
        assert trace.final_total < trace.initial_total

    def test_trace_totals_match_weights(self, toy_bundle, toy_config):
        _, trace = tr.train(toy_config, self._data(toy_bundle, toy_config), seed=0)
        for r in trace.records:
            assert r.total == pytest.approx(r.align + r.rec + r.sem + r.ent, rel=1e-12)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_variants_train(self, toy_bundle, toy_config, variant):
        config = toy_config.model_copy(update={"variant": variant, "epochs": 3})
        model, trace = tr.train(config, self._data(toy_bundle, config), seed=0)
        assert len(trace) == 3
        assert all(math.isfinite(t) for t in trace.totals())
        assert model.embeddings().shape == (12, config.d)

    def test_no_hierarchy_has_no_alignment(self, toy_bundle, toy_config):
        config = toy_config.model_copy(update={"variant": "no_hierarchy", "epochs": 2})
        _, trace = tr.train(config, self._data(toy_bundle, config), seed=0)
        assert all(r.align == 0.0 and r.ent == 0.0 for r in trace.records)

    def test_od_matrix_rows(self, toy_bundle, toy_config):
        od = self._data(toy_bundle, toy_config).od
        sums = od.sum(axis=1)
        assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_total_gradient_matches_finite_differences(self, toy_bundle, toy_config, seed):
        data = self._data(toy_bundle, toy_config)
        model = HiFiNet(toy_config, data.net, seed=seed)

        def objective():
            return tr.evaluate_losses(model, data)[1]

        assert tc.grad_check(objective, model.store) < 1e-4

    @pytest.mark.parametrize("seed", range(10))
    def test_segment_features_stay_off_origin(self, toy_bundle, toy_config, seed):
        h_s = HiFiNet(toy_config, toy_bundle[0], seed=seed).forward().H_S.value
        assert np.linalg.norm(h_s, axis=1).min() > 1e-3


def test_semantic_rows_sampled_above_threshold(toy_config):
    config = toy_config.model_copy(update={"semantic_sample_threshold": 10, "semantic_sample_rows": 4})
    rows = tr.semantic_rows_for_epoch(config, 12, seed=0, epoch=1)
    assert len(rows) == 4 and len(set(rows.tolist())) == 4
    np.testing.assert_array_equal(rows, tr.semantic_rows_for_epoch(config, 12, seed=0, epoch=1))
    assert tr.semantic_rows_for_epoch(toy_config, 12, seed=0, epoch=1) is None
