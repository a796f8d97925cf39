import numpy as np
import pytest

import dmia.denoiser as denoiser_mod
from dmia import (
    CheckpointCorruptError,
    InvalidArgumentError,
    SeededRng,
    TrainConfig,
    build_linear_schedule,
    forward_noise,
    gaussian_vector,
    gradient_check,
    init_predictor,
    load_checkpoint,
    save_checkpoint,
    train,
    training_loss,
)


@pytest.fixture(scope="module")
def schedule():
    return build_linear_schedule(100, 1e-4, 0.002)


class PerfectPredictor:
    """Stub that returns the exact noise it was told about."""

    def __init__(self, eps):
        self.eps = eps
        self.query_count = 0

    def predict_eps(self, xt, t):
        self.query_count += 1
        return self.eps


class ZeroPredictor:
    def __init__(self, dim):
        self.dim = dim
        self.query_count = 0

    def predict_eps(self, xt, t):
        self.query_count += 1
        return np.zeros(self.dim)


class TestInitPredictor:
    def test_same_seed_identical(self):
        a = init_predictor(8, [16], SeededRng(1).stream(3))
        b = init_predictor(8, [16], SeededRng(1).stream(3))
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_different_seeds_differ(self):
        a = init_predictor(8, [16], SeededRng(1).stream(3))
        b = init_predictor(8, [16], SeededRng(2).stream(3))
        assert any(not np.array_equal(wa, wb) for wa, wb in zip(a.weights, b.weights))

    def test_output_dim_matches_input(self):
        model = init_predictor(64, [32, 32], SeededRng(5))
        out = model.predict_eps(np.zeros(64), 10)
        assert out.shape == (64,)

    def test_empty_hidden_dims_rejected(self):
        with pytest.raises(InvalidArgumentError):
            init_predictor(8, [], SeededRng(1))


class TestPredictEps:
    def test_deterministic_and_counts(self):
        model = init_predictor(6, [12], SeededRng(9))
        x = np.linspace(-0.5, 0.5, 6)
        before = model.query_count
        a = model.predict_eps(x, 7)
        b = model.predict_eps(x, 7)
        np.testing.assert_array_equal(a, b)
        assert model.query_count == before + 2

    def test_dim_mismatch_rejected(self):
        model = init_predictor(6, [12], SeededRng(9))
        with pytest.raises(InvalidArgumentError):
            model.predict_eps(np.zeros(5), 1)

    def test_untrained_mse_near_one_per_coordinate(self, schedule):
        # Monte-Carlo: an untrained predictor is essentially uncorrelated
        # with the drawn noise, so E||eps - eps_hat||^2 / dim ~ 1.
        dim = 16
        model = init_predictor(dim, [32, 32], SeededRng(31))
        rng = SeededRng(32)
        n = 2000
        total = 0.0
        for _ in range(n):
            x0 = rng.generator.uniform(-1, 1, dim)
            t = int(rng.generator.integers(1, schedule.total_steps + 1))
            eps = gaussian_vector(rng, dim)
            xt = forward_noise(schedule, x0, t, eps)
            resid = eps - model.predict_eps(xt, t)
            total += resid @ resid
        per_coord = total / (n * dim)
        assert abs(per_coord - 1.0) < 0.3


class TestTrainingLoss:
    def test_perfect_predictor_zero_loss(self, schedule):
        rng = SeededRng(41)
        x0 = rng.generator.uniform(-1, 1, 8)
        # Feed the stub the exact eps the loss routine will draw.
        probe_rng = SeededRng(42)
        t = int(probe_rng.generator.integers(1, schedule.total_steps + 1))
        eps = gaussian_vector(probe_rng, 8)
        model = PerfectPredictor(eps)
        loss = training_loss(model, schedule, [x0], SeededRng(42))
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_zero_predictor_loss_near_dim(self, schedule):
        # E||eps||^2 = dim; Monte Carlo over many draws.
        dim = 8
        model = ZeroPredictor(dim)
        rng = SeededRng(43)
        batch = rng.generator.uniform(-1, 1, (500, dim))
        loss = training_loss(model, schedule, batch, SeededRng(44))
        se = np.sqrt(2.0 * dim / 500)
        assert abs(loss - dim) < 4 * se

    def test_nonnegative(self, schedule):
        model = init_predictor(4, [8], SeededRng(45))
        batch = SeededRng(46).generator.uniform(-1, 1, (10, 4))
        assert training_loss(model, schedule, batch, SeededRng(47)) >= 0.0

    def test_empty_batch_rejected(self, schedule):
        model = init_predictor(4, [8], SeededRng(45))
        with pytest.raises(InvalidArgumentError):
            training_loss(model, schedule, np.empty((0, 4)), SeededRng(1))


class TestTrain:
    def test_single_sample_memorization(self):
        # Coarse stage then a low-rate settling stage; the probe loss lands
        # deep in the memorization regime.
        dim = 4
        sched = build_linear_schedule(50, 0.01, 0.05)
        model = init_predictor(dim, [64, 64], SeededRng(51).stream(3))
        data = SeededRng(52).generator.uniform(-1, 1, (1, dim))
        train(model, sched, data, TrainConfig(epochs=3000, batch_size=1, learning_rate=5e-3, seed=7))
        trace = train(model, sched, data, TrainConfig(epochs=2000, batch_size=1, learning_rate=5e-4, seed=8))
        assert trace[-1] < 0.05 * dim

    def test_zero_learning_rate_constant_trace(self, schedule):
        model = init_predictor(4, [8], SeededRng(53))
        data = SeededRng(54).generator.uniform(-1, 1, (8, 4))
        config = TrainConfig(epochs=20, batch_size=4, learning_rate=0.0, seed=7)
        trace = train(model, schedule, data, config)
        assert len(set(trace)) == 1

    def test_deterministic_final_parameters(self, schedule):
        data = SeededRng(55).generator.uniform(-1, 1, (16, 4))
        config = TrainConfig(epochs=50, batch_size=8, learning_rate=1e-3, seed=11)
        params = []
        for _ in range(2):
            model = init_predictor(4, [8], SeededRng(56).stream(3))
            train(model, schedule, data, config)
            params.append([w.copy() for w in model.weights])
        for wa, wb in zip(*params):
            np.testing.assert_array_equal(wa, wb)

    def test_loss_trend_nonincreasing_on_toy_set(self, schedule):
        model = init_predictor(4, [32], SeededRng(57).stream(3))
        data = SeededRng(58).generator.uniform(-1, 1, (8, 4))
        config = TrainConfig(epochs=200, batch_size=4, learning_rate=2e-3, seed=3)
        trace = np.asarray(train(model, schedule, data, config))
        smoothed = np.convolve(trace, np.ones(10) / 10, mode="valid")
        assert smoothed[-1] < smoothed[0]
        # Trailing-window trend never climbs back above an early-window level.
        assert smoothed[-1] == pytest.approx(smoothed.min(), abs=0.1 * smoothed[0])

    def test_batch_larger_than_dataset_rejected(self, schedule):
        model = init_predictor(4, [8], SeededRng(59))
        data = SeededRng(60).generator.uniform(-1, 1, (4, 4))
        with pytest.raises(InvalidArgumentError):
            train(model, schedule, data, TrainConfig(epochs=1, batch_size=8))


class TestGradientCheck:
    def test_analytic_matches_finite_differences(self, schedule):
        model = init_predictor(3, [6, 5], SeededRng(61).stream(3), time_embed_dim=8)
        x0 = SeededRng(62).generator.uniform(-1, 1, 3)
        err = gradient_check(model, schedule, x0, SeededRng(63))
        assert err < 1e-4

    def test_corrupted_gradient_detected(self, schedule, monkeypatch):
        model = init_predictor(3, [6], SeededRng(64).stream(3), time_embed_dim=8)
        x0 = SeededRng(65).generator.uniform(-1, 1, 3)
        real_backward = denoiser_mod._backward

        def corrupted(model_, cache, d_out):
            grads_w, grads_b = real_backward(model_, cache, d_out)
            grads_w[0] = grads_w[0] * 1.5
            return grads_w, grads_b

        monkeypatch.setattr(denoiser_mod, "_backward", corrupted)
        err = gradient_check(model, schedule, x0, SeededRng(66))
        assert err > 1e-2

    def test_zero_parameter_model_vacuous(self, schedule):
        class IdentityStub:
            weights = []
            biases = []

        assert gradient_check(IdentityStub(), schedule, np.zeros(3), SeededRng(1)) == 0.0

    def test_too_many_parameters_rejected(self, schedule):
        model = init_predictor(64, [128, 128], SeededRng(67))
        with pytest.raises(InvalidArgumentError):
            gradient_check(model, schedule, np.zeros(64), SeededRng(1))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, schedule):
        model = init_predictor(5, [7, 6], SeededRng(71).stream(3), time_embed_dim=8)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.query_count == 0
        x = np.linspace(-1, 1, 5)
        np.testing.assert_array_equal(model.predict_eps(x, 3), loaded.predict_eps(x, 3))

    def test_truncated_rejected(self, tmp_path):
        model = init_predictor(5, [7], SeededRng(72))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        path.write_bytes(path.read_bytes()[:-20])
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        model = init_predictor(5, [7], SeededRng(73))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        raw = bytearray(path.read_bytes())
        raw[4:6] = (99).to_bytes(2, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointCorruptError, match="version"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)

    def test_crc_mismatch_rejected(self, tmp_path):
        model = init_predictor(5, [7], SeededRng(74))
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        raw = bytearray(path.read_bytes())
        raw[30] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)
