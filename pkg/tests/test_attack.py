import math

import numpy as np
import pytest

from dmia import (
    AttackConfig,
    InvalidArgumentError,
    NoiseSequence,
    SeededRng,
    aggregation_centroid,
    aggregation_density,
    aggregation_l1,
    aggregation_mse,
    aggregation_volume,
    attack_sample,
    build_linear_schedule,
    collect_noise_sequence,
    forward_noise,
    inject_noise,
    init_predictor,
    membership_score,
)
from dmia.attack import aggregate


@pytest.fixture(scope="module")
def schedule():
    return build_linear_schedule(100, 1e-4, 0.002)


class ConstantPredictor:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.query_count = 0

    def predict_eps(self, xt, t):
        self.query_count += 1
        return self.value.copy()


class FixedDrawRng:
    """Test double whose gaussian draws come from a fixed queue."""

    def __init__(self, draws):
        self._draws = [np.asarray(d, dtype=np.float64) for d in draws]

        class _Gen:
            def __init__(self, outer):
                self.outer = outer

            def standard_normal(self, dim):
                draw = self.outer._draws.pop(0)
                assert draw.size == dim
                return draw

        self._gen = _Gen(self)

    @property
    def generator(self):
        return self._gen


class TestAttackConfig:
    def test_defaults(self):
        cfg = AttackConfig()
        assert (cfg.attack_t, cfg.k, cfg.stride_m, cfg.sigma) == (80, 5, 10, 0.1)
        assert cfg.timesteps() == (80, 70, 60, 50, 40)

    def test_trajectory_underflow_rejected(self):
        with pytest.raises(InvalidArgumentError):
            AttackConfig(attack_t=30, k=5, stride_m=10)

    def test_k_below_two_rejected(self):
        with pytest.raises(InvalidArgumentError):
            AttackConfig(k=1)

    def test_bad_metric_rejected(self):
        with pytest.raises(InvalidArgumentError):
            AttackConfig(metric="l3")


class TestInjectNoise:
    def test_direct_zero_noise_limit(self, schedule):
        cfg = AttackConfig(injection_mode="direct", sigma=1e-12)
        x0 = np.array([0.25, -0.5])
        noisy, _ = inject_noise(schedule, x0, cfg, SeededRng(1))
        np.testing.assert_allclose(noisy, x0, atol=1e-10)

    def test_schedule_mode_hand_value(self):
        # alpha_bar(1) = 0.99 exactly, eps pinned to (1, 1).
        sched = build_linear_schedule(2, 0.01, 0.01)
        cfg = AttackConfig(attack_t=1, k=2, stride_m=1, injection_mode="schedule")
        noisy, eps = inject_noise(sched, [1.0, 0.0], cfg, FixedDrawRng([[1.0, 1.0]]))
        np.testing.assert_array_equal(eps, [1.0, 1.0])
        np.testing.assert_allclose(noisy, [1.09499, 0.1], atol=1e-4)

    def test_deterministic_across_runs(self, schedule):
        cfg = AttackConfig()
        x0 = np.linspace(-0.5, 0.5, 4)
        a = inject_noise(schedule, x0, cfg, SeededRng(5).stream(4, 9))
        b = inject_noise(schedule, x0, cfg, SeededRng(5).stream(4, 9))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestCollectNoiseSequence:
    def test_constant_predictor_constant_sequence(self, schedule):
        model = ConstantPredictor([0.3, -0.3])
        cfg = AttackConfig(k=4)
        seq = collect_noise_sequence(schedule, model, np.array([0.1, 0.2]), cfg)
        assert seq.k == 4
        for row in seq.eps_hats:
            np.testing.assert_array_equal(row, [0.3, -0.3])

    def test_exactly_k_queries(self, schedule):
        model = init_predictor(4, [8], SeededRng(7))
        cfg = AttackConfig()
        before = model.query_count
        collect_noise_sequence(schedule, model, np.zeros(4), cfg)
        assert model.query_count - before == 5

    def test_k2_timesteps(self, schedule):
        model = ConstantPredictor([0.0, 0.0])
        cfg = AttackConfig(k=2)
        seq = collect_noise_sequence(schedule, model, np.zeros(2), cfg)
        assert seq.timesteps == (80, 70)

    def test_attack_t_beyond_schedule_rejected(self):
        sched = build_linear_schedule(50, 1e-4, 0.002)
        model = ConstantPredictor([0.0])
        with pytest.raises(InvalidArgumentError):
            collect_noise_sequence(sched, model, np.zeros(1), AttackConfig())


def two_point_sequence():
    return NoiseSequence(
        eps_hats=np.array([[0.0, 0.0], [2.0, 0.0]]), timesteps=(80, 70)
    )


class TestAggregationMetrics:
    def test_l1_hand_value(self):
        assert aggregation_l1(two_point_sequence()) == pytest.approx(1.0)

    def test_mse_hand_value(self):
        assert aggregation_mse(two_point_sequence()) == pytest.approx(2.0)

    def test_centroid_hand_value(self):
        assert aggregation_centroid(two_point_sequence()) == pytest.approx(1.0)

    def test_density_hand_value(self):
        # delta -> 0 limit: (1/2)(1/2 + 1/2) = 0.5
        assert aggregation_density(two_point_sequence(), delta=1e-15) == pytest.approx(0.5)

    def test_density_identical_entries(self):
        seq = np.zeros((3, 2))
        assert aggregation_density(seq, delta=1e-10) == pytest.approx(1e10, rel=1e-6)

    def test_identical_entries_zero(self):
        seq = np.ones((4, 3))
        for fn in (aggregation_l1, aggregation_mse, aggregation_centroid, aggregation_volume):
            assert fn(seq) == pytest.approx(0.0, abs=1e-12)

    def test_volume_triangle_shoelace(self):
        # 2-D shoelace oracle: area of {(0,0),(1,0),(0,1)} = 0.5.
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        x, y = pts[:, 0], pts[:, 1]
        shoelace = 0.5 * abs(
            sum(x[i] * y[(i + 1) % 3] - x[(i + 1) % 3] * y[i] for i in range(3))
        )
        assert aggregation_volume(pts) == pytest.approx(shoelace, rel=1e-12)
        assert shoelace == 0.5

    def test_volume_tetrahedron_triple_product(self):
        # Triple-product oracle: volume of the unit corner tetrahedron = 1/6.
        pts = np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
        edges = pts[1:] - pts[0]
        triple = abs(np.dot(edges[0], np.cross(edges[1], edges[2]))) / 6.0
        assert aggregation_volume(pts) == pytest.approx(triple, rel=1e-12)
        assert triple == pytest.approx(1.0 / 6.0)

    def test_volume_collinear_zero(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        assert aggregation_volume(pts) == 0.0

    def test_permutation_invariance(self):
        rng = SeededRng(17)
        for _ in range(25):
            k = int(rng.generator.integers(2, 6))
            dim = int(rng.generator.integers(k, k + 6))
            eps = rng.generator.standard_normal((k, dim))
            perm = rng.generator.permutation(k)
            for name in ("l1", "l2", "centroid", "density", "volume"):
                a = aggregate(eps, name)
                b = aggregate(eps[perm], name)
                assert a == pytest.approx(b, rel=1e-9, abs=1e-12), name

    def test_translation_invariance(self):
        rng = SeededRng(18)
        for _ in range(25):
            k, dim = 4, 6
            eps = rng.generator.standard_normal((k, dim))
            shift = rng.generator.standard_normal(dim)
            for fn in (aggregation_l1, aggregation_mse, aggregation_centroid, aggregation_volume):
                assert fn(eps) == pytest.approx(fn(eps + shift), rel=1e-9, abs=1e-12)

    def test_scaling_laws(self):
        # L1 ~ s, MSE ~ s^2, centroid ~ s, volume ~ s^(k-1).
        rng = SeededRng(19)
        for _ in range(25):
            k, dim = 4, 6
            s = float(rng.generator.uniform(0.5, 3.0))
            eps = rng.generator.standard_normal((k, dim))
            assert aggregation_l1(s * eps) == pytest.approx(s * aggregation_l1(eps), rel=1e-9)
            assert aggregation_mse(s * eps) == pytest.approx(s**2 * aggregation_mse(eps), rel=1e-9)
            assert aggregation_centroid(s * eps) == pytest.approx(
                s * aggregation_centroid(eps), rel=1e-9
            )
            assert aggregation_volume(s * eps) == pytest.approx(
                s ** (k - 1) * aggregation_volume(eps), rel=1e-9
            )


class TestMembershipScore:
    def test_log_one_is_zero(self):
        assert membership_score(1.0, delta=1e-300) == pytest.approx(0.0, abs=1e-12)

    def test_zero_aggregation_hand_value(self):
        assert membership_score(0.0, delta=1e-10) == pytest.approx(23.0258509, abs=1e-6)

    def test_strictly_decreasing(self):
        rng = SeededRng(23)
        values = np.sort(rng.generator.uniform(0.0, 10.0, 50))
        scores = [membership_score(float(v), 1e-10) for v in values]
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_negative_rejected(self):
        with pytest.raises(InvalidArgumentError):
            membership_score(-0.1, 1e-10)


class TestAttackSample:
    def test_constant_predictor_maximal_score(self, schedule):
        for metric in ("l1", "l2", "centroid", "volume"):
            cfg = AttackConfig(metric=metric)
            model = ConstantPredictor(np.full(3, 0.2))
            rec = attack_sample(schedule, model, np.zeros(3), cfg, SeededRng(29).stream(4, 0))
            assert rec.score == pytest.approx(-math.log(cfg.delta))
            assert rec.queries == 5

    def test_same_seed_same_score(self, schedule):
        model = init_predictor(4, [8, 8], SeededRng(30))
        cfg = AttackConfig()
        x0 = np.linspace(-0.4, 0.4, 4)
        a = attack_sample(schedule, model, x0, cfg, SeededRng(31).stream(4, 1))
        b = attack_sample(schedule, model, x0, cfg, SeededRng(31).stream(4, 1))
        assert a.score == b.score

    def test_density_orientation_matches_dispersion(self, schedule):
        # A tight sequence must outscore a dispersed one under every metric,
        # including the inverted-orientation density metric.
        rng = SeededRng(32)
        x0 = rng.generator.uniform(-0.5, 0.5, 4)
        tight = init_predictor(4, [8, 8], SeededRng(33))
        for metric in ("l2", "density"):
            cfg = AttackConfig(metric=metric)
            rec_model = attack_sample(schedule, tight, x0, cfg, SeededRng(34).stream(4, 2))
            const = ConstantPredictor(np.full(4, 0.1))
            rec_const = attack_sample(schedule, const, x0, cfg, SeededRng(34).stream(4, 2))
            assert rec_const.score > rec_model.score, metric


class TestNoiseSequenceValidation:
    def test_uneven_stride_rejected(self):
        with pytest.raises(InvalidArgumentError):
            NoiseSequence(eps_hats=np.zeros((3, 2)), timesteps=(80, 70, 65))

    def test_single_entry_rejected(self):
        with pytest.raises(InvalidArgumentError):
            NoiseSequence(eps_hats=np.zeros((1, 2)), timesteps=(80,))
