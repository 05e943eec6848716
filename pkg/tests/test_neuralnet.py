import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outbreaknet.features import ScalerParams
from outbreaknet.neuralnet import (
    ACT_IDENTITY,
    ACT_RELU,
    AdamState,
    BadArchitectureError,
    CheckpointFormatError,
    DenseLayer,
    DimMismatchError,
    EmptyDatasetError,
    HyperParams,
    Network,
    NonFiniteLossError,
    ShapeMismatchError,
    TraceMismatchError,
    adam_step,
    backward,
    batch_gradients,
    forward,
    grad_check,
    init_network,
    load_checkpoint,
    loss,
    max_gradient_error,
    predict,
    save_checkpoint,
    train,
)


def manual_net(*layers):
    sizes = [np.asarray(layers[0][0]).shape[1]] + [np.asarray(w).shape[0] for w, _, _ in layers]
    return Network(
        layers=[
            DenseLayer(np.asarray(w, dtype=float), np.asarray(b, dtype=float), act)
            for w, b, act in layers
        ],
        layer_sizes=tuple(sizes),
    )


class TestInitNetwork:
    def test_deterministic_per_seed(self):
        a = init_network([4, 8, 1], seed=7)
        b = init_network([4, 8, 1], seed=7)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_different_seeds_differ(self):
        a = init_network([4, 8, 1], seed=1)
        b = init_network([4, 8, 1], seed=2)
        assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_too_few_sizes(self):
        with pytest.raises(BadArchitectureError):
            init_network([4], seed=0)

    def test_output_must_be_scalar(self):
        with pytest.raises(BadArchitectureError):
            init_network([4, 3], seed=0)

    def test_nonpositive_size(self):
        with pytest.raises(BadArchitectureError):
            init_network([4, 0, 1], seed=0)

    def test_default_architecture_has_five_dense_layers(self):
        net = init_network([204, 256, 128, 64, 32, 1], seed=0)
        assert len(net.layers) == 5
        assert [l.activation for l in net.layers] == [ACT_RELU] * 4 + [ACT_IDENTITY]

    def test_biases_zero_and_weights_bounded(self):
        net = init_network([9, 4, 1], seed=0)
        for layer, fan_in in zip(net.layers, (9, 4)):
            assert np.all(layer.bias == 0.0)
            assert np.all(np.abs(layer.weights) <= 1.0 / np.sqrt(fan_in))


class TestForward:
    def test_single_relu_unit(self):
        net = manual_net(([[2.0]], [-1.0], ACT_RELU))
        trace = forward(net, [3.0])
        assert trace.activations[0][0] == 5.0  # 2*3 - 1

    def test_relu_clips_negative(self):
        net = manual_net((np.eye(2), [0.0, 0.0], ACT_RELU))
        trace = forward(net, [-1.0, 2.0])
        np.testing.assert_array_equal(trace.activations[0], [0.0, 2.0])

    def test_zero_network_predicts_zero(self):
        net = manual_net(([[0.0, 0.0]], [0.0], ACT_IDENTITY))
        assert forward(net, [5.0, -3.0]).prediction == 0.0

    def test_dim_mismatch(self):
        net = init_network([4, 2, 1], seed=0)
        with pytest.raises(DimMismatchError):
            forward(net, [1.0, 2.0])

    def test_hidden_activations_nonnegative(self):
        net = init_network([6, 8, 4, 1], seed=3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            trace = forward(net, rng.normal(size=6))
            for layer, act in zip(net.layers, trace.activations):
                if layer.activation == ACT_RELU:
                    assert np.all(act >= 0.0)


class TestLoss:
    def test_zero_at_match_with_zero_weights(self):
        net = manual_net(([[0.0]], [0.0], ACT_IDENTITY))
        assert loss(1.0, 1.0, net, 0.5) == (0.0, 0.0)

    def test_lambda_zero_identity(self):
        net = init_network([3, 2, 1], seed=0)
        data, reg = loss(2.0, 1.0, net, 0.0)
        assert data == reg == 1.0

    def test_weight_square_sum(self):
        net = manual_net(([[1.0, 2.0], [3.0, 4.0]], [9.0, 9.0], ACT_RELU),
                         ([[0.0, 0.0]], [9.0], ACT_IDENTITY))
        data, reg = loss(5.0, 5.0, net, 0.1)
        assert data == 0.0
        assert reg == pytest.approx(0.1 * 30.0)  # biases excluded

    def test_strictly_increasing_in_lambda(self):
        net = init_network([4, 3, 1], seed=1)
        values = [loss(2.0, 0.0, net, lam)[1] for lam in (0.0, 1e-4, 1e-2, 1.0)]
        assert values == sorted(values)
        assert len(set(values)) == len(values)


class TestBackward:
    def test_zero_gradients_at_loss_minimum(self):
        net = init_network([3, 4, 1], seed=5)
        x = np.array([0.3, -0.2, 0.9])
        trace = forward(net, x)
        grads = backward(net, trace, target=trace.prediction, l2_lambda=0.0)
        for g in grads:
            np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_single_linear_layer_hand_value(self):
        net = manual_net(([[1.0]], [0.0], ACT_IDENTITY))
        trace = forward(net, [2.0])
        grads = backward(net, trace, target=0.0, l2_lambda=0.0)
        assert grads[0][0, 0] == pytest.approx(8.0)  # 2*(2-0)*2
        assert grads[1][0] == pytest.approx(4.0)

    def test_l2_term_in_weight_gradient(self):
        net = manual_net(([[3.0]], [0.0], ACT_IDENTITY))
        trace = forward(net, [0.0])
        grads = backward(net, trace, target=0.0, l2_lambda=0.5)
        assert grads[0][0, 0] == pytest.approx(2.0 * 0.5 * 3.0)  # data part is zero
        assert grads[1][0] == 0.0

    def test_relu_subgradient_at_zero_is_zero(self):
        net = manual_net(([[1.0]], [-2.0], ACT_RELU), ([[3.0]], [1.0], ACT_IDENTITY))
        trace = forward(net, [2.0])  # pre-activation exactly 0
        assert trace.pre_activations[0][0] == 0.0
        grads = backward(net, trace, target=0.0, l2_lambda=0.0)
        assert grads[0][0, 0] == 0.0
        assert grads[1][0] == 0.0

    def test_trace_mismatch_detected(self):
        net = init_network([3, 4, 1], seed=0)
        other = init_network([3, 5, 1], seed=0)
        trace = forward(other, [1.0, 2.0, 3.0])
        with pytest.raises(TraceMismatchError):
            backward(net, trace, 0.0, 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        net = init_network([5, 8, 1], seed=seed)
        x = rng.normal(size=5)
        target = float(rng.normal())
        assert grad_check(net, x, target, l2_lambda=1e-3, h=1e-5) < 1e-5


class TestAdamStep:
    def test_zero_gradient_keeps_parameters(self):
        params = [np.zeros(3)]
        state = AdamState.for_params(params)
        adam_step(state, params, [np.zeros(3)], HyperParams())
        np.testing.assert_array_equal(params[0], np.zeros(3))

    def test_two_step_hand_trace(self):
        hp = HyperParams(learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8)
        params = [np.zeros(1)]
        state = AdamState.for_params(params)
        g = np.array([2.0])

        adam_step(state, params, [g], hp)
        m1 = 0.9 * 0.0 + 0.1 * 2.0
        v1 = 0.999 * 0.0 + 0.001 * 4.0
        m1_hat = m1 / (1 - 0.9**1)
        v1_hat = v1 / (1 - 0.999**1)
        theta1 = 0.0 - 0.001 * m1_hat / (np.sqrt(v1_hat) + 1e-8)
        assert state.t == 1
        assert state.m[0][0] == pytest.approx(m1, abs=1e-12)
        assert state.v[0][0] == pytest.approx(v1, abs=1e-12)
        assert m1_hat == pytest.approx(2.0, abs=1e-12)
        assert v1_hat == pytest.approx(4.0, abs=1e-12)
        assert params[0][0] == pytest.approx(theta1, abs=1e-12)
        assert params[0][0] == pytest.approx(-0.000999999995, abs=1e-12)

        adam_step(state, params, [g], hp)
        m2 = 0.9 * m1 + 0.1 * 2.0
        v2 = 0.999 * v1 + 0.001 * 4.0
        m2_hat = m2 / (1 - 0.9**2)
        v2_hat = v2 / (1 - 0.999**2)
        theta2 = theta1 - 0.001 * m2_hat / (np.sqrt(v2_hat) + 1e-8)
        assert state.t == 2
        assert state.m[0][0] == pytest.approx(m2, abs=1e-12)
        assert state.v[0][0] == pytest.approx(v2, abs=1e-12)
        assert m2_hat == pytest.approx(2.0, abs=1e-12)
        assert v2_hat == pytest.approx(4.0, abs=1e-12)
        assert params[0][0] == pytest.approx(theta2, abs=1e-12)
        assert params[0][0] == pytest.approx(-0.002, abs=1e-9)

    def test_shape_mismatch(self):
        params = [np.zeros(3)]
        state = AdamState.for_params(params)
        with pytest.raises(ShapeMismatchError):
            adam_step(state, params, [np.zeros(4)], HyperParams())

    def test_step_counter_counts_invocations(self):
        params = [np.zeros(2)]
        state = AdamState.for_params(params)
        for i in range(5):
            adam_step(state, params, [np.ones(2)], HyperParams())
        assert state.t == 5

    @given(st.floats(min_value=1e-2, max_value=1e6, allow_nan=False))
    @settings(max_examples=50)
    def test_first_step_bound(self, g_mag):
        hp = HyperParams()
        for sign in (1.0, -1.0):
            params = [np.zeros(1)]
            state = AdamState.for_params(params)
            adam_step(state, params, [np.array([sign * g_mag])], hp)
            step = abs(params[0][0])
            assert step < hp.learning_rate
            assert step > 0.999 * hp.learning_rate


def linear_rows(n=60, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    X = rng.uniform(0, 1, size=(n, dim))
    y = X @ w * 0.3 + 0.2
    return [(X[i], float(y[i])) for i in range(n)]


class TestTrain:
    def test_zero_epochs_noop(self):
        net = init_network([3, 4, 1], seed=0)
        before = [p.copy() for p in net.parameters()]
        history = train(net, linear_rows(), HyperParams(epochs=0))
        assert history.epoch_losses == []
        for b, p in zip(before, net.parameters()):
            assert np.array_equal(b, p)

    def test_deterministic_for_fixed_seed(self):
        rows = linear_rows()
        hp = HyperParams(epochs=5, seed=11)
        net_a = init_network([3, 8, 1], seed=2)
        hist_a = train(net_a, rows, hp)
        net_b = init_network([3, 8, 1], seed=2)
        hist_b = train(net_b, rows, hp)
        assert hist_a.epoch_losses == hist_b.epoch_losses
        for pa, pb in zip(net_a.parameters(), net_b.parameters()):
            assert np.array_equal(pa, pb)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            train(init_network([3, 4, 1], seed=0), [], HyperParams())

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatchError):
            train(init_network([5, 4, 1], seed=0), linear_rows(dim=3), HyperParams())

    def test_non_finite_loss_reports_epoch(self):
        rows = [(np.array([1e150]), 0.0), (np.array([-1e150]), 1.0)]
        net = manual_net(([[1e150]], [0.0], ACT_IDENTITY))
        with pytest.raises(NonFiniteLossError) as err:
            train(net, rows, HyperParams(epochs=3, learning_rate=1.0))
        assert err.value.epoch == 0

    def test_loss_decreases_on_easy_problem(self):
        rows = linear_rows(n=80)
        net = init_network([3, 16, 8, 1], seed=1)
        history = train(net, rows, HyperParams(epochs=150, seed=1))
        assert history.final_data_loss < history.epoch_losses[0][0] * 0.05
        assert history.final_data_loss < 1e-3

    def test_batch_gradients_equal_mean_of_per_sample(self):
        rng = np.random.default_rng(3)
        net = init_network([4, 6, 3, 1], seed=3)
        X = rng.normal(size=(7, 4))
        y = rng.normal(size=7)
        lam = 1e-3
        batched = batch_gradients(net, X, y, lam)

        per_sample = None
        for i in range(7):
            trace = forward(net, X[i])
            grads = backward(net, trace, y[i], lam)
            # L2 term enters the mean once, matching the regularized batch loss
            if per_sample is None:
                per_sample = [g / 7.0 for g in grads]
            else:
                per_sample = [acc + g / 7.0 for acc, g in zip(per_sample, grads)]
        # undo the L2 over-counting from summing per-sample regularized grads
        for idx, layer in enumerate(net.layers):
            per_sample[2 * idx] += 2.0 * lam * layer.weights * (1.0 - 7.0 / 7.0)
        for b, s in zip(batched, per_sample):
            np.testing.assert_allclose(b, s, atol=1e-12)


class TestPredict:
    def test_zero_network_inverts_to_clamped_target_min(self):
        net = manual_net(([[0.0, 0.0]], [0.0], ACT_IDENTITY))
        scaler = ScalerParams(mins=(0.0, 0.0), maxs=(1.0, 1.0), target_min=50.0, target_max=150.0)
        assert predict(net, scaler, [0.2, 0.4]) == 50.0

    def test_negative_inverse_clamps_to_zero(self):
        net = manual_net(([[0.0]], [-1.0], ACT_IDENTITY))
        scaler = ScalerParams(mins=(0.0,), maxs=(1.0,), target_min=2.0, target_max=12.3)
        # raw output -1 inverse-scales to 2 - 10.3 = -8.3, clamped
        assert predict(net, scaler, [0.0]) == 0.0


class TestGradCheck:
    def test_near_zero_at_stationary_point(self):
        # all-zero parameters predict 0 for any input: a true loss minimum
        net = manual_net((np.zeros((6, 4)), np.zeros(6), ACT_RELU),
                         (np.zeros((1, 6)), np.zeros(1), ACT_IDENTITY))
        x = np.array([0.1, -0.5, 0.3, 0.8])
        assert grad_check(net, x, target=0.0, l2_lambda=0.0, h=1e-5) < 1e-8

    def test_detects_corrupted_bias_gradient(self):
        net = init_network([4, 6, 1], seed=9)
        rng = np.random.default_rng(1)
        x = rng.normal(size=4)
        target = 0.7
        trace = forward(net, x)
        grads = backward(net, trace, target, 0.0)
        grads[1] = grads[1].copy()
        grads[1][0] += 0.1
        assert max_gradient_error(net, grads, x, target, 0.0, h=1e-5) > 1e-2

    def test_rejects_nonpositive_h(self):
        net = init_network([2, 2, 1], seed=0)
        with pytest.raises(ValueError):
            grad_check(net, [0.0, 0.0], 0.0, 0.0, h=0.0)


class TestCheckpoint:
    def _scaler(self):
        return ScalerParams(
            mins=(0.0, -1.5, 2.25), maxs=(1.0, 3.5, 2.25), target_min=10.0, target_max=5000.0
        )

    def test_round_trip_bit_exact(self, tmp_path):
        net = init_network([3, 5, 2, 1], seed=13)
        path_a = tmp_path / "a.ckpt"
        path_b = tmp_path / "b.ckpt"
        save_checkpoint(path_a, net, self._scaler())
        loaded_net, loaded_scaler = load_checkpoint(path_a)
        save_checkpoint(path_b, loaded_net, loaded_scaler)
        assert path_a.read_bytes() == path_b.read_bytes()
        for orig, loaded in zip(net.layers, loaded_net.layers):
            assert np.array_equal(orig.weights, loaded.weights)
            assert np.array_equal(orig.bias, loaded.bias)
            assert orig.activation == loaded.activation
        assert loaded_scaler == self._scaler()

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda text: "WRONGNET v1 sizes=2,1\n" + text.split("\n", 1)[1],
            lambda text: text.split("\n", 1)[0] + "\n",  # drop everything after header
            lambda text: text.replace("SCALER fields=3", "SCALER fields=x"),
            lambda text: "\n".join(text.splitlines()[:-1]) + "\n",  # drop TARGET line
            lambda text: text.replace("e+00", "e+zz", 1),
        ],
    )
    def test_malformed_checkpoints_raise_structured_errors(self, tmp_path, mutate):
        net = init_network([2, 2, 1], seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, net, self._scaler())
        path.write_text(mutate(path.read_text()))
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)
