import numpy as np
import pytest

from gcdlab.model import (
    ModelParams,
    backward,
    config_fingerprint,
    forward,
    init_params,
    load_checkpoint,
    params_to_vector,
    save_checkpoint,
    vector_to_params,
    zero_grads,
)
from gcdlab.numerics import finite_difference_gradient, norm_relative_error
from gcdlab.synthdata import Batch


def toy_batch(rng, b=6, d=8, labeled=3):
    x = rng.normal(size=(b, d))
    return Batch(
        view1=x + rng.normal(size=(b, d)) * 0.05,
        view2=x + rng.normal(size=(b, d)) * 0.05,
        labels=rng.integers(0, 3, size=b),
        mask=np.arange(b) < labeled,
        sample_ids=np.arange(b),
    )


class TestInitParams:
    def test_deterministic(self):
        a = init_params(8, 16, 8, 4, 10, seed=3)
        b = init_params(8, 16, 8, 4, 10, seed=3)
        np.testing.assert_array_equal(params_to_vector(a), params_to_vector(b))

    def test_prototype_bank_size_and_norm(self):
        p = init_params(8, 16, 8, 4, 10, seed=0)
        assert p.prototypes.shape == (10, 8)
        np.testing.assert_allclose(np.linalg.norm(p.prototypes, axis=1), 1.0, atol=1e-12)

    def test_rejects_zero_counts(self):
        with pytest.raises(ValueError):
            init_params(0, 16, 8, 4, 10, seed=0)


class TestForward:
    def test_logits_bounded_by_cauchy_schwarz(self):
        rng = np.random.default_rng(1)
        params = init_params(8, 16, 8, 4, 5, seed=1)
        cache = forward(params, toy_batch(rng))
        for view in (cache.view1, cache.view2):
            assert np.all(view.logits <= 1.0 + 1e-12)
            assert np.all(view.logits >= -1.0 - 1e-12)
            np.testing.assert_allclose(np.linalg.norm(view.z, axis=1), 1.0, atol=1e-9)

    def test_duplicated_sample_duplicates_cache_rows(self):
        rng = np.random.default_rng(2)
        params = init_params(8, 16, 8, 4, 5, seed=2)
        batch = toy_batch(rng)
        dup = Batch(
            view1=np.vstack([batch.view1, batch.view1[:1]]),
            view2=np.vstack([batch.view2, batch.view2[:1]]),
            labels=np.concatenate([batch.labels, batch.labels[:1]]),
            mask=np.concatenate([batch.mask, batch.mask[:1]]),
            sample_ids=np.concatenate([batch.sample_ids, batch.sample_ids[:1]]),
        )
        cache = forward(params, dup)
        np.testing.assert_array_equal(cache.view1.logits[-1], cache.view1.logits[0])
        np.testing.assert_array_equal(cache.view1.z[-1], cache.view1.z[0])

    def test_zero_feature_guard(self):
        # all-zero weights force h == 0; the guarded normalization must not
        # produce NaN/Inf
        params = init_params(4, 8, 6, 3, 4, seed=0)
        for f in ("w1", "b1", "w2", "b2"):
            getattr(params, f)[...] = 0.0
        batch = toy_batch(np.random.default_rng(3), b=4, d=4)
        cache = forward(params, batch)
        assert np.all(np.isfinite(cache.view1.logits))
        np.testing.assert_array_equal(cache.view1.h_hat, 0.0)

    def test_dimension_mismatch_raises(self):
        params = init_params(8, 16, 8, 4, 5, seed=1)
        with pytest.raises(ValueError):
            forward(params, toy_batch(np.random.default_rng(0), d=7))


class TestBackward:
    def setup_method(self):
        self.rng = np.random.default_rng(10)
        self.params = init_params(8, 12, 6, 4, 5, seed=5)
        self.batch = toy_batch(self.rng, b=6, d=8)

    def loss_and_grads(self, params):
        """Synthetic scalar objective touching logits and z of both views."""
        cache = forward(params, self.batch)
        value = (
            np.sum(self.g_logits1 * cache.view1.logits)
            + np.sum(self.g_logits2 * cache.view2.logits)
            + np.sum(self.g_z1 * cache.view1.z)
            + np.sum(self.g_z2 * cache.view2.z)
        )
        return float(value), cache

    def test_zero_loss_grads_give_zero_param_grads(self):
        cache = forward(self.params, self.batch)
        zeros_l = np.zeros_like(cache.view1.logits)
        zeros_z = np.zeros_like(cache.view1.z)
        grads = backward(self.params, cache, zeros_l, zeros_l, zeros_z, zeros_z)
        assert np.all(params_to_vector(grads) == 0.0)

    def test_single_logit_gradient_wrt_prototype(self):
        cache = forward(self.params, self.batch)
        i, k = 2, 3
        g_logits1 = np.zeros_like(cache.view1.logits)
        g_logits1[i, k] = 1.0
        zeros_z = np.zeros_like(cache.view1.z)
        grads = backward(
            self.params, cache, g_logits1, np.zeros_like(g_logits1), zeros_z, zeros_z
        )

        def single_logit(c_row):
            p = self.params.copy()
            p.prototypes[k] = c_row
            return float(forward(p, self.batch).view1.logits[i, k])

        numeric = finite_difference_gradient(single_logit, self.params.prototypes[k].copy())
        assert norm_relative_error(grads.prototypes[k], numeric) < 1e-4

    def test_full_parameter_gradient_matches_finite_differences(self):
        # random linear functional of logits and z; exercises every Jacobian
        cache = forward(self.params, self.batch)
        self.g_logits1 = self.rng.normal(size=cache.view1.logits.shape)
        self.g_logits2 = self.rng.normal(size=cache.view2.logits.shape)
        self.g_z1 = self.rng.normal(size=cache.view1.z.shape)
        self.g_z2 = self.rng.normal(size=cache.view2.z.shape)

        grads = backward(
            self.params, cache, self.g_logits1, self.g_logits2, self.g_z1, self.g_z2
        )

        def f(vec):
            return self.loss_and_grads(vector_to_params(vec, self.params))[0]

        numeric = finite_difference_gradient(f, params_to_vector(self.params))
        assert norm_relative_error(params_to_vector(grads), numeric) < 1e-4

    def test_duplicated_rows_with_mean_reduction_leave_grads_unchanged(self):
        # mean-reduced loss: per-row grads scale with 1/b, so duplicating
        # every row must reproduce the same parameter gradient
        cache = forward(self.params, self.batch)
        b = self.batch.size
        g_l = self.rng.normal(size=cache.view1.logits.shape) / b
        g_z = self.rng.normal(size=cache.view1.z.shape) / b
        zeros_l = np.zeros_like(g_l)
        zeros_z = np.zeros_like(g_z)
        grads_once = backward(self.params, cache, g_l, zeros_l, g_z, zeros_z)

        dup = Batch(
            view1=np.vstack([self.batch.view1, self.batch.view1]),
            view2=np.vstack([self.batch.view2, self.batch.view2]),
            labels=np.concatenate([self.batch.labels] * 2),
            mask=np.concatenate([self.batch.mask] * 2),
            sample_ids=np.concatenate([self.batch.sample_ids] * 2),
        )
        cache2 = forward(self.params, dup)
        g_l2 = np.vstack([g_l, g_l]) / 2.0
        g_z2 = np.vstack([g_z, g_z]) / 2.0
        grads_twice = backward(
            self.params, cache2, g_l2, np.zeros_like(g_l2), g_z2, np.zeros_like(g_z2)
        )
        np.testing.assert_allclose(
            params_to_vector(grads_twice), params_to_vector(grads_once), atol=1e-10
        )


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = init_params(8, 16, 8, 4, 10, seed=9)
        path = str(tmp_path / "ckpt.json")
        save_checkpoint(params, path, config_hash="abc123")
        back, tag = load_checkpoint(path)
        assert tag == "abc123"
        np.testing.assert_array_equal(params_to_vector(back), params_to_vector(params))

    def test_save_is_deterministic(self, tmp_path):
        params = init_params(4, 8, 6, 3, 4, seed=1)
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        save_checkpoint(params, p1, "h")
        save_checkpoint(params, p2, "h")
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other"}', encoding="utf-8")
        with pytest.raises(ValueError):
            load_checkpoint(str(path))

    def test_config_fingerprint_is_order_insensitive(self):
        assert config_fingerprint({"a": 1, "b": 2}) == config_fingerprint({"b": 2, "a": 1})
