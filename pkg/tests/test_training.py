import numpy as np
import pytest

from tvssm.network import (
    LayerSpec,
    NetworkSpec,
    init_network,
    max_stability_budget,
    network_forward,
)
from tvssm.training import (
    NumericFailure,
    TrainConfig,
    adamw_step,
    bptt_gradients,
    fd_check,
    init_optimizer_state,
    loss_mse,
    lr_schedule,
    param_group,
    train,
)


def small_spec(h=2, n=2, k=2, t=8, activation="gelu", layers=1, normalize=True):
    layer = LayerSpec(h=h, n=n, k_a=k, k_b=k, k_c=k,
                      tv_a=True, tv_b=True, tv_c=True, activation=activation)
    return NetworkSpec(1, 1, (layer,) * layers, t=t, normalize=normalize)


class TestLoss:
    def test_exact_match_is_zero(self):
        x = np.random.default_rng(0).standard_normal((2, 3, 4))
        assert loss_mse(x, x) == 0.0

    def test_unit_offset_is_one(self):
        x = np.random.default_rng(1).standard_normal((2, 3, 4))
        assert loss_mse(x + 1.0, x) == pytest.approx(1.0, rel=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 2, 5))
        b = rng.standard_normal((3, 2, 5))
        acc = 0.0
        for i in range(3):
            for j in range(2):
                for t in range(5):
                    acc += (a[i, j, t] - b[i, j, t]) ** 2
        assert loss_mse(a, b) == pytest.approx(acc / 30, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            loss_mse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSchedule:
    def test_warmup_end_hits_base(self):
        total, frac = 200, 0.05
        warm = int(total * frac)
        assert lr_schedule(warm, total, 0.3, frac) == pytest.approx(0.3)

    def test_warmup_is_linear_from_zero(self):
        assert lr_schedule(0, 100, 1.0, 0.1) == 0.0
        assert lr_schedule(5, 100, 1.0, 0.1) == pytest.approx(0.5)

    def test_final_step_near_zero(self):
        lr = lr_schedule(999, 1000, 1.0, 0.05)
        assert 0.0 <= lr < 1e-4

    def test_decay_midpoint_is_half(self):
        total, frac = 210, 0.05
        warm = int(total * frac)  # 10, decay span 200
        mid = warm + (total - warm) // 2
        assert lr_schedule(mid, total, 0.8, frac) == pytest.approx(0.4, rel=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            lr_schedule(10, 10, 1.0)


class TestAdamW:
    def _setup(self):
        spec = small_spec(normalize=False)
        params = init_network(spec, np.random.default_rng(0))
        state = init_optimizer_state(params)
        zeros = {name: np.zeros_like(t) for name, t in params.trainable_tensors()}
        return params, state, zeros

    def test_zero_gradients_no_decay_is_identity(self):
        params, state, zeros = self._setup()
        before = {n: t.copy() for n, t in params.trainable_tensors()}
        adamw_step(params, zeros, state, {"ssm": 0.1, "others": 0.1},
                   {"ssm": 0.0, "others": 0.0})
        for name, tensor in params.trainable_tensors():
            np.testing.assert_array_equal(tensor, before[name])

    def test_first_step_magnitude_is_lr(self):
        params, state, zeros = self._setup()
        name0, tensor0 = params.trainable_tensors()[0]
        before = tensor0.copy()
        grads = dict(zeros)
        grads[name0] = np.ones_like(tensor0)
        lr = 0.05
        adamw_step(params, grads, state, {"ssm": lr, "others": lr},
                   {"ssm": 0.0, "others": 0.0})
        np.testing.assert_allclose(before - tensor0, np.full_like(tensor0, lr), rtol=1e-6)

    def test_decoupled_decay_shrinks(self):
        params, state, zeros = self._setup()
        lr, wd = 0.01, 0.5
        before = {n: t.copy() for n, t in params.trainable_tensors()}
        adamw_step(params, zeros, state, {"ssm": lr, "others": lr},
                   {"ssm": wd, "others": wd})
        for name, tensor in params.trainable_tensors():
            np.testing.assert_allclose(tensor, before[name] * (1 - lr * wd), rtol=1e-14)

    def test_group_assignment(self):
        assert param_group("layer0.a_coeff") == "ssm"
        assert param_group("layer2.b_coeff") == "ssm"
        assert param_group("layer1.c_coeff") == "ssm"
        assert param_group("layer0.c_bias") == "others"
        assert param_group("layer0.norm_scale") == "others"
        assert param_group("mixing3") == "others"

    def test_groups_use_their_own_rates(self):
        params, state, zeros = self._setup()
        ones = {name: np.ones_like(t) for name, t in params.trainable_tensors()}
        before = {n: t.copy() for n, t in params.trainable_tensors()}
        adamw_step(params, ones, state, {"ssm": 0.1, "others": 0.0},
                   {"ssm": 0.0, "others": 0.0})
        for name, tensor in params.trainable_tensors():
            moved = np.abs(tensor - before[name]).max()
            if param_group(name) == "ssm":
                assert moved > 0.05
            else:
                assert moved == 0.0

    def test_non_finite_gradient_raises(self):
        params, state, zeros = self._setup()
        bad = dict(zeros)
        name0 = next(iter(bad))
        bad[name0] = np.full_like(bad[name0], np.nan)
        with pytest.raises(NumericFailure):
            adamw_step(params, bad, state, {"ssm": 0.1, "others": 0.1},
                       {"ssm": 0.0, "others": 0.0})


class TestGradients:
    def test_reference_fd_configuration(self):
        rng = np.random.default_rng(0)
        spec = small_spec(h=2, n=2, k=2, t=8, activation="gelu")
        params = init_network(spec, rng)
        x = rng.standard_normal((2, 1, 8))
        y = rng.standard_normal((2, 1, 8))
        report = fd_check(params, x, y, step=1e-6, tolerance=1e-5)
        assert report.ok, report.summary()

    def test_fd_multi_layer_identity_no_norm(self):
        rng = np.random.default_rng(1)
        spec = small_spec(h=2, n=2, k=3, t=6, activation="identity",
                          layers=2, normalize=False)
        params = init_network(spec, rng)
        x = rng.standard_normal((3, 1, 6))
        y = rng.standard_normal((3, 1, 6))
        report = fd_check(params, x, y)
        assert report.ok, report.summary()

    def test_fd_dense_transition(self):
        rng = np.random.default_rng(2)
        layer = LayerSpec(h=2, n=2, k_a=2, k_b=2, k_c=2, tv_a=True, tv_b=True,
                          tv_c=True, activation="gelu", diag_a=False)
        spec = NetworkSpec(1, 1, (layer,), t=6)
        params = init_network(spec, rng)
        x = rng.standard_normal((2, 1, 6))
        y = rng.standard_normal((2, 1, 6))
        report = fd_check(params, x, y)
        assert report.ok, report.summary()

    def test_perfect_prediction_zero_gradients(self):
        rng = np.random.default_rng(3)
        spec = small_spec()
        params = init_network(spec, rng)
        x = rng.standard_normal((2, 1, 8))
        y = network_forward(params, x, training=True)
        loss, grads = bptt_gradients(params, x, y)
        assert loss == 0.0
        for g in grads.values():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_two_step_hand_gradient(self):
        # scalar neuron, identity everything: out[0] = w1*bias,
        # out[1] = w1*(c*b*w0*u0 + bias); differentiate the MSE by hand
        layer = LayerSpec(h=1, n=1, tv_a=True, tv_b=True, tv_c=True)
        spec = NetworkSpec(1, 1, (layer,), t=2, normalize=False)
        params = init_network(spec, np.random.default_rng(4))
        w0 = 0.7
        w1 = -1.3
        params.mixings[0][:] = w0
        params.mixings[1][:] = w1
        a = float(params.layers[0].a_coeff[0, 0, 0])
        b = float(params.layers[0].b_coeff[0, 0, 0, 0])
        c = float(params.layers[0].c_coeff[0, 0, 0, 0])
        u0, u1 = 0.9, -0.2
        t0, t1 = 0.3, 1.1
        x = np.array([[[u0, u1]]])
        y = np.array([[[t0, t1]]])
        loss, grads = bptt_gradients(params, x, y)
        out0 = 0.0
        out1 = w1 * c * b * w0 * u0
        assert loss == pytest.approx(((out0 - t0) ** 2 + (out1 - t1) ** 2) / 2, rel=1e-12)
        dc_hand = (out1 - t1) * w1 * b * w0 * u0  # d(mean)/dc, factor 2/2 cancels
        assert grads["layer0.c_coeff"][0, 0, 0, 0] == pytest.approx(dc_hand, rel=1e-12)
        db_hand = (out1 - t1) * w1 * c * w0 * u0
        assert grads["layer0.b_coeff"][0, 0, 0, 0] == pytest.approx(db_hand, rel=1e-12)
        # the transition never acts in two steps from a zero state
        assert grads["layer0.a_coeff"][0, 0, 0] == 0.0
        del a

    def test_corrupted_gradient_is_flagged(self, monkeypatch):
        import tvssm.training as tr
        rng = np.random.default_rng(5)
        spec = small_spec(t=6)
        params = init_network(spec, rng)
        x = rng.standard_normal((2, 1, 6))
        y = rng.standard_normal((2, 1, 6))

        real = tr.bptt_gradients

        def corrupted(params, inputs, targets):
            loss, grads = real(params, inputs, targets)
            grads["layer0.c_coeff"] = -grads["layer0.c_coeff"]
            return loss, grads

        monkeypatch.setattr(tr, "bptt_gradients", corrupted)
        report = tr.fd_check(params, x, y)
        assert "layer0.c_coeff" in report.failures

    def test_large_step_warns(self):
        rng = np.random.default_rng(6)
        spec = small_spec(t=4)
        params = init_network(spec, rng)
        x = rng.standard_normal((1, 1, 4))
        y = rng.standard_normal((1, 1, 4))
        with pytest.warns(RuntimeWarning, match="truncation"):
            fd_check(params, x, y, step=1e-1, tolerance=1.0)

    def test_too_many_parameters_rejected(self):
        spec = NetworkSpec(1, 1, (LayerSpec(h=64, n=32, k_a=4, k_b=4, k_c=4,
                                            tv_a=True, tv_b=True, tv_c=True),), t=8)
        params = init_network(spec, np.random.default_rng(0))
        with pytest.raises(ValueError, match="1e4"):
            fd_check(params, np.zeros((1, 1, 8)), np.zeros((1, 1, 8)))


def make_toy_data(rng, n=48, t=16):
    x = rng.standard_normal((n, 1, t))
    y = 0.5 * np.roll(x, 1, axis=2)
    y[:, :, 0] = 0.0
    return x, y


class TestTrainLoop:
    def test_zero_learning_rate_is_a_no_op(self):
        rng = np.random.default_rng(7)
        x, y = make_toy_data(rng)
        spec = small_spec(t=16, activation="identity", normalize=False)
        cfg = TrainConfig(epochs=3, batch_size=16, lr_ssm=0.0, lr_others=0.0,
                          seed=1, recalibrate_norm=False)
        params, history = train(spec, (x, y), cfg)
        fresh = init_network(spec, np.random.default_rng([1, 17]))
        for (name, t1), (_, t2) in zip(params.trainable_tensors(), fresh.trainable_tensors()):
            np.testing.assert_array_equal(t1, t2, err_msg=name)
        assert history["train_loss"][0] == pytest.approx(history["train_loss"][-1], rel=1e-12)

    def test_training_reduces_loss(self):
        rng = np.random.default_rng(8)
        x, y = make_toy_data(rng, n=64)
        spec = small_spec(h=4, n=2, k=2, t=16, activation="identity")
        cfg = TrainConfig(epochs=20, batch_size=16, lr_ssm=5e-3, lr_others=2e-2,
                          wd_others=0.0, seed=2)
        params, history = train(spec, (x, y), cfg)
        assert history["train_loss"][-1] < 0.2 * history["train_loss"][0]

    def test_determinism(self):
        rng = np.random.default_rng(9)
        x, y = make_toy_data(rng)
        spec = small_spec(t=16)
        cfg = TrainConfig(epochs=2, batch_size=16, seed=5)
        p1, h1 = train(spec, (x, y), cfg)
        p2, h2 = train(spec, (x, y), cfg)
        for (name, t1), (_, t2) in zip(p1.trainable_tensors(), p2.trainable_tensors()):
            np.testing.assert_array_equal(t1, t2, err_msg=name)
        for key in h1:
            np.testing.assert_array_equal(h1[key], h2[key], err_msg=key)

    def test_stability_budget_holds_throughout(self):
        rng = np.random.default_rng(10)
        x, y = make_toy_data(rng)
        spec = small_spec(t=16)
        cfg = TrainConfig(epochs=4, batch_size=16, lr_ssm=0.05, lr_others=0.05, seed=6)
        params, history = train(spec, (x, y), cfg)
        assert all(b < 1.0 for b in history["max_a_budget"])
        assert max_stability_budget(params) < 1.0

    def test_validation_history(self):
        rng = np.random.default_rng(11)
        x, y = make_toy_data(rng, n=32)
        vx, vy = make_toy_data(rng, n=8)
        spec = small_spec(t=16)
        cfg = TrainConfig(epochs=2, batch_size=16, seed=7)
        _, history = train(spec, (x, y, vx, vy), cfg)
        assert len(history["val_loss"]) == 2
        assert all(np.isfinite(v) for v in history["val_loss"])

    def test_segmenting_long_sequences(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((4, 1, 64))
        y = rng.standard_normal((4, 1, 64))
        spec = small_spec(t=16)
        cfg = TrainConfig(epochs=1, batch_size=8, segment_length=16, seed=8)
        params, history = train(spec, (x, y), cfg)
        assert len(history["train_loss"]) == 1

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_numeric_failure_saves_checkpoint(self, tmp_path):
        rng = np.random.default_rng(13)
        x, y = make_toy_data(rng, n=8)
        x[0, 0, 0] = np.inf
        spec = small_spec(t=16, normalize=False)
        cfg = TrainConfig(epochs=1, batch_size=8, seed=9, shuffle=False,
                          recalibrate_norm=False)
        with pytest.raises(NumericFailure):
            train(spec, (x, y), cfg, checkpoint_dir=tmp_path)
        assert (tmp_path / "last_good.ckpt").exists()
