import numpy as np
import pytest

from metacenter.errors import ConfigurationError
from metacenter.hydrostatics import make_box_hull
from metacenter.seaway import RawDataset, SeawaySpec, generate_dataset
from metacenter.training import (
    LossCurve,
    TrainConfig,
    compare,
    compute_stats,
    evaluate,
    render_loss_curve_svg,
    split_dataset,
    standardize,
    train,
)


@pytest.fixture(scope="module")
def hull():
    return make_box_hull(4.0, 2.0, 1.0, 1025.0 * 4.0)


@pytest.fixture(scope="module")
def small_dataset(hull):
    return generate_dataset(hull, SeawaySpec(duration=20.0, seed=3), trials=4)


def _linear_dataset(n_trials=3, n=300, seed=0):
    """Synthetic sanity set: positions are an exact linear map of attitudes."""
    rng = np.random.default_rng(seed)
    a_map = np.array([[30.0, -10.0, 4.0], [5.0, 25.0, -8.0], [-12.0, 6.0, 40.0]])
    parts = []
    for tid in range(n_trials):
        att = rng.normal(0.0, 0.12, size=(n, 3))
        parts.append(RawDataset(
            trial=np.full(n, tid), t=np.arange(n) / 10.0,
            attitudes=att, positions=att @ a_map.T))
    return RawDataset(
        trial=np.concatenate([p.trial for p in parts]),
        t=np.concatenate([p.t for p in parts]),
        attitudes=np.concatenate([p.attitudes for p in parts]),
        positions=np.concatenate([p.positions for p in parts]))


class TestSplit:
    def test_fraction_rounding(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        assert len(test_ds.trial_ids()) == 1
        assert len(train_ds.trial_ids()) == 3

    def test_minimum_one_test_trial(self, hull):
        ds = generate_dataset(hull, SeawaySpec(duration=5.0, seed=1), trials=2)
        train_ds, test_ds = split_dataset(ds, 0.2, seed=0)
        assert len(train_ds.trial_ids()) == 1
        assert len(test_ds.trial_ids()) == 1

    def test_single_trial_rejected(self, hull):
        ds = generate_dataset(hull, SeawaySpec(duration=5.0, seed=1), trials=1)
        with pytest.raises(ConfigurationError, match="more trials"):
            split_dataset(ds, 0.2, seed=0)

    def test_deterministic(self, small_dataset):
        a = split_dataset(small_dataset, 0.25, seed=5)
        b = split_dataset(small_dataset, 0.25, seed=5)
        np.testing.assert_array_equal(a[1].trial, b[1].trial)

    def test_whole_trials_only(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=2)
        assert set(train_ds.trial_ids()) & set(test_ds.trial_ids()) == set()


class TestStandardize:
    def test_train_moments(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        (x_tr, y_tr), (x_te, _), stats = standardize(train_ds, test_ds)
        assert np.abs(x_tr.mean(axis=0)).max() < 1e-10
        np.testing.assert_allclose(x_tr.std(axis=0), 1.0, atol=1e-10)
        assert np.abs(y_tr.mean(axis=0)).max() < 1e-10
        # test split standardized with train stats: generally off-center
        assert np.abs(x_te.mean(axis=0)).max() > 1e-10

    def test_round_trip(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        stats = compute_stats(train_ds)
        z = (train_ds.attitudes - stats.input_mean) / stats.input_std
        back = z * stats.input_std + stats.input_mean
        np.testing.assert_allclose(back, train_ds.attitudes, atol=1e-12)

    def test_zero_variance_clamped(self):
        ds = RawDataset(trial=np.zeros(10), t=np.arange(10.0),
                        attitudes=np.zeros((10, 3)),
                        positions=np.random.default_rng(0).normal(size=(10, 3)))
        with pytest.warns(UserWarning, match="zero-variance"):
            stats = compute_stats(ds)
        np.testing.assert_array_equal(stats.input_std, 1.0)


class TestTrain:
    def test_zero_learning_rate_flat_curve(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        cfg = TrainConfig(iterations=50, learning_rate=0.0, seed=1, eval_every=10)
        result = train("fc", train_ds, test_ds, cfg)
        assert len(set(result.curve.train_mse)) == 1
        assert len(set(result.curve.test_mse)) == 1

    def test_deterministic_curves(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        cfg = TrainConfig(iterations=60, seed=7, eval_every=20, batch_size=32)
        a = train("grnn", train_ds, test_ds, cfg)
        b = train("grnn", train_ds, test_ds, cfg)
        assert a.curve.train_mse == b.curve.train_mse
        assert a.curve.test_mse == b.curve.test_mse
        for pa, pb in zip(a.regressor.network.params(), b.regressor.network.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_fc_fits_linear_target(self):
        ds = _linear_dataset()
        train_ds, test_ds = split_dataset(ds, 0.34, seed=0)
        cfg = TrainConfig(iterations=3000, seed=0, batch_size=64, eval_every=100)
        result = train("fc", train_ds, test_ds, cfg)
        target_var = float(train_ds.positions.var(axis=0).mean())
        assert result.curve.train_mse[-1] < 1e-3 * target_var

    def test_ts_grnn_needs_hull(self):
        ds = _linear_dataset()
        train_ds, test_ds = split_dataset(ds, 0.34, seed=0)
        with pytest.raises(ConfigurationError, match="hull"):
            train("ts-grnn", train_ds, test_ds, TrainConfig(iterations=5))

    def test_ts_grnn_records_closed_loop_test(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        cfg = TrainConfig(iterations=30, seed=2, eval_every=10, batch_size=32)
        result = train("ts-grnn", train_ds, test_ds, cfg)
        reg = result.regressor
        rep = evaluate(reg, test_ds, "closed_loop")
        assert rep.overall_mse == pytest.approx(result.curve.test_mse[-1], rel=1e-12)

    def test_train_curve_settles(self, small_dataset):
        # over the final fifth of training the smoothed train curve should
        # not climb (tiny plateau jitter allowed)
        train_ds, test_ds = split_dataset(small_dataset, 0.25, seed=0)
        cfg = TrainConfig(iterations=600, seed=4, eval_every=10, batch_size=32)
        curve = train("grnn", train_ds, test_ds, cfg).curve
        tail = [curve.moving_average_train(i, 200)
                for i in range(480, 601, 10)]
        for before, after in zip(tail, tail[1:]):
            assert after <= before * 1.01

    def test_test_set_does_not_influence_training(self, small_dataset):
        # identical checkpoint when the held-out trials change
        train_ds, test_a = split_dataset(small_dataset, 0.25, seed=0)
        half = test_a.subset(np.arange(len(test_a) // 2))
        cfg = TrainConfig(iterations=40, seed=3, eval_every=20, batch_size=16)
        res_a = train("rbf", train_ds, test_a, cfg)
        res_b = train("rbf", train_ds, half, cfg)
        for pa, pb in zip(res_a.regressor.network.params(),
                          res_b.regressor.network.params()):
            np.testing.assert_array_equal(pa, pb)


class TestEvaluate:
    def test_per_trial_and_profile(self, small_dataset):
        train_ds, test_ds = split_dataset(small_dataset, 0.5, seed=0)
        cfg = TrainConfig(iterations=20, seed=0, eval_every=10, batch_size=16)
        result = train("grnn", train_ds, test_ds, cfg)
        rep = evaluate(result.regressor, test_ds)
        assert set(rep.per_trial_mse) == set(int(t) for t in test_ds.trial_ids())
        n_steps = len(test_ds.trial_indices(test_ds.trial_ids()[0]))
        assert len(rep.per_step_mse) == n_steps
        assert np.isfinite(rep.per_step_mse).all()

    def test_profile_csv(self, small_dataset, tmp_path):
        train_ds, test_ds = split_dataset(small_dataset, 0.5, seed=0)
        cfg = TrainConfig(iterations=20, seed=0, eval_every=10, batch_size=16)
        result = train("fc", train_ds, test_ds, cfg)
        rep = evaluate(result.regressor, test_ds)
        path = tmp_path / "profile.csv"
        rep.save_profile_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,mse"
        assert len(lines) == 1 + len(rep.per_step_mse)


class TestCurveAndReport:
    def test_loss_curve_round_trip(self, tmp_path):
        curve = LossCurve()
        for i in range(10, 110, 10):
            curve.append(i, 100.0 / i, 120.0 / i)
        path = tmp_path / "curve.csv"
        curve.save_csv(path)
        back = LossCurve.load_csv(path)
        assert back.iterations == curve.iterations
        np.testing.assert_array_equal(back.train_mse, curve.train_mse)

    def test_moving_average_window(self):
        curve = LossCurve()
        for i in range(10, 510, 10):
            curve.append(i, float(i), 0.0)
        # points in (300, 500]: 310..500 -> mean 405
        assert curve.moving_average_train(500, 200) == pytest.approx(405.0)

    def test_compare_report_deterministic(self, small_dataset, tmp_path):
        cfg = TrainConfig(iterations=30, seed=9, eval_every=10, batch_size=16)
        rep_a = compare(small_dataset, cfg)
        rep_b = compare(small_dataset, cfg)
        assert rep_a.to_json_text() == rep_b.to_json_text()
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        rep_a.save_artifacts(dir_a)
        rep_b.save_artifacts(dir_b)
        for name in ("report.json", "loss_fc.csv", "loss_ts_grnn.csv"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()

    def test_report_covers_all_kinds(self, small_dataset):
        cfg = TrainConfig(iterations=20, seed=1, eval_every=10, batch_size=16)
        rep = compare(small_dataset, cfg)
        assert set(rep.entries) == {"fc", "rbf", "grnn", "ts-grnn"}
        for kind, e in rep.entries.items():
            assert e.test_rmse_cm == pytest.approx(np.sqrt(e.final_test_mse), rel=1e-12)

    def test_svg_rendering(self, tmp_path):
        curve = LossCurve()
        for i in range(10, 210, 10):
            curve.append(i, 1000.0 / i, 1500.0 / i)
        path = tmp_path / "curve.svg"
        render_loss_curve_svg(curve, path, "demo")
        text = path.read_text()
        assert text.startswith("<svg")
        assert "iteration" in text and "MSE" in text
        assert text.count("<polyline") == 2
