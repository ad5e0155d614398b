import numpy as np
import pytest

from e2eso import scenarios as sc
from e2eso.errors import ConfigError, DataError
from e2eso.solvers import DirichletPrior, GaussianHierarchy, named_prior


def test_streams_do_not_depend_on_how_they_are_cut():
    s = sc.GaussianScenario(seed=3)
    whole = s.sample(0, 1500)
    pieces = [sc.GaussianScenario(seed=3).sample(a, b) for a, b in ((0, 700), (700, 13), (713, 787))]
    for k in ("X", "Y", "Z"):
        assert np.array_equal(whole[k], np.concatenate([p[k] for p in pieces]))
    other = sc.GaussianScenario(seed=4).sample(0, 10)
    assert not np.array_equal(other["X"], whole["X"][:10])


def test_gaussian_sampler_moments():
    h = GaussianHierarchy()
    d = sc.GaussianScenario(h, seed=0).sample(0, 200_000)
    assert abs(d["Z"].mean() - 2.0) < 0.01 and abs(d["Z"].var() - 0.25) < 0.01
    assert abs(np.var(d["Y"] - d["Z"]) - 4.0) < 0.05
    assert d["X"].shape == (200_000, 20)
    # X and Y are conditionally independent given Z: residuals are uncorrelated
    rx = d["X"].mean(axis=1) - d["Z"]
    ry = d["Y"] - d["Z"]
    assert abs(np.corrcoef(rx, ry)[0, 1]) < 0.01


def test_gaussian_observation_outcomes_are_the_samples():
    s = sc.GaussianScenario(seed=0)
    X = s.sample(0, 5)["X"]
    assert np.array_equal(s.obs_outcomes(X), X)


def test_newsvendor_sampler():
    s = sc.NewsvendorScenario(DirichletPrior.uniform(11), 20, seed=1, per_z=5)
    d = s.sample(0, 5000)
    assert d["X"].shape == (5000, 20) and d["X"].min() >= 1 and d["X"].max() <= 11
    assert np.allclose(d["Z"].sum(axis=1), 1.0)
    assert np.array_equal(d["Z"][0], d["Z"][4]) and not np.array_equal(d["Z"][4], d["Z"][5])
    C = s.counts(d["X"])
    assert np.all(C.sum(axis=1) == 20)
    assert np.allclose(s.features(d["X"]), C / 20)
    # Y is drawn from Z: its frequencies follow the mean of Z
    freq = np.bincount(d["Y"] - 1, minlength=11) / 5000
    assert np.allclose(freq, d["Z"].mean(axis=0), atol=0.02)


def test_newsvendor_x_and_y_conditionally_independent():
    s = sc.NewsvendorScenario(DirichletPrior.uniform(3), 20, seed=2, per_z=1)
    d = s.sample(0, 100_000)
    C = s.counts(d["X"]) / 20
    rx = C[:, 0] - d["Z"][:, 0]
    ry = (d["Y"] == 1) - d["Z"][:, 0]
    assert abs(np.corrcoef(rx, ry)[0, 1]) < 0.015


def test_newsvendor_centered_features():
    s = sc.NewsvendorScenario(DirichletPrior.uniform(11), 20, seed=0, center=True, feature_scale=10)
    X = s.sample(0, 3)["X"]
    assert np.allclose(s.features(X), (s.counts(X) / 20 - 1 / 11) * 10)
    with pytest.raises(ConfigError):
        sc.NewsvendorScenario(per_z=0)
    with pytest.raises(ConfigError):
        sc.NewsvendorScenario(feature_scale=0.0)


def test_conditional_targets_carry_the_law_of_y():
    base = sc.NewsvendorScenario(DirichletPrior.uniform(4), 5, seed=0)
    ct = sc.ConditionalTargets(base)
    d = ct.sample(10, 6)
    assert np.array_equal(d["X"], base.sample(10, 6)["X"])
    assert np.array_equal(d["Y"], np.tile(np.arange(1, 5), (6, 1)))
    assert np.array_equal(d["W"], d["Z"])


def test_observation_source_hides_targets():
    src = sc.GaussianScenario(seed=0).observation_only()
    X = src.observations(0, 4)
    assert X.shape == (4, 20)
    assert not hasattr(src, "sample")
    with pytest.raises(AttributeError):
        src.extra = 1


def test_array_scenario_epochs_are_permutations():
    X = np.arange(10.0)[:, None]
    s = sc.ArrayScenario(X, np.arange(10.0), seed=0)
    d = s.sample(0, 20)
    assert sorted(d["X"][:10, 0]) == list(range(10)) and sorted(d["X"][10:, 0]) == list(range(10))
    assert np.array_equal(d["X"][:, 0], d["Y"])
    assert not np.array_equal(d["X"][:10, 0], d["X"][10:, 0])
    assert np.array_equal(sc.ArrayScenario(X, np.arange(10.0), shuffle=False).sample(8, 4)["Y"],
                          [8, 9, 0, 1])
    with pytest.raises(ConfigError):
        sc.ArrayScenario(X, np.arange(3.0))


def test_sample_count_validation():
    with pytest.raises(ConfigError):
        sc.GaussianScenario().sample(0, 0)


def test_convenience_samplers():
    assert sc.sample_gaussian(GaussianHierarchy(), 0, 7)["X"].shape == (7, 20)
    assert sc.sample_newsvendor(DirichletPrior.uniform(11), 20, 0, 7)["Y"].shape == (7,)


# --------------------------------------------------------------------------
# wind
# --------------------------------------------------------------------------

def test_synthetic_wind_is_bounded_and_persistent():
    s = sc.wind_synthetic(seed=0, count=20_000)
    assert len(s) == 20_000 and s.power.min() >= 0 and s.power.max() <= 2.0
    assert np.all(np.diff(s.timestamps.astype(np.int64)) == 10)
    p = s.power - s.power.mean()

    def ac(lag):
        return float(p[:-lag] @ p[lag:] / (p @ p))

    assert ac(1) > ac(3) > ac(6)
    assert np.array_equal(sc.wind_synthetic(seed=0, count=100).power, s.power[:100])
    with pytest.raises(ConfigError):
        sc.wind_synthetic(count=0)


def test_power_curve_shape():
    p = sc.WindSyntheticParams()
    assert sc.power_curve(2.0, p) == 0 and sc.power_curve(12.0, p) == 2.0
    assert sc.power_curve(30.0, p) == 0
    v = np.linspace(3, 12, 50)
    assert np.all(np.diff(sc.power_curve(v, p)) > 0)


def test_thin_and_split():
    s = sc.wind_synthetic(seed=1, count=600)
    t = s.thin(30, offset=1)
    assert np.array_equal(t.power, s.power[1::3])
    with pytest.raises(ConfigError):
        s.thin(20)
    tr, te = s.split(fraction=0.8)
    assert len(tr) == 480 and len(te) == 120
    tr, te = s.split(boundary="2018-01-02T00:00")
    assert len(tr) == 144 and te.timestamps[0] == np.datetime64("2018-01-02T00:00")


def test_observation_specs():
    s = sc.wind_synthetic(seed=2, count=50)
    for kind, dim in (("myopic", 3), ("myopic_incomplete", 1), ("historical", 11), ("lag1", 1)):
        spec = sc.ObservationSpec(kind)
        X, Y, skipped = sc.build_observations(s, spec)
        assert X.shape[1] == dim == spec.dim
        assert len(X) + skipped == 50
    X, Y, _ = sc.build_observations(s, sc.ObservationSpec("historical"))
    # row 0 describes t = 2: current weather, then (weather, power) at t-1 and t-2
    assert np.allclose(X[0, :3], [s.temperature[2], s.speed[2], s.direction[2]])
    assert np.allclose(X[0, 3:7], [s.temperature[1], s.speed[1], s.direction[1], s.power[1]])
    assert np.allclose(X[0, 7:], [s.temperature[0], s.speed[0], s.direction[0], s.power[0]])
    assert Y[0] == s.power[3]
    X, Y, _ = sc.build_observations(s, sc.ObservationSpec("lag1"))
    assert np.array_equal(X[:, 0], s.power[:-1]) and np.array_equal(Y, s.power[1:])
    with pytest.raises(ConfigError):
        sc.ObservationSpec("weekly")


CSV_HEADER = ",ActivePower,WindSpeed,WindDirection,AmbientTemperatue\n"


def write_csv(path, rows):
    path.write_text(CSV_HEADER + "".join(",".join(map(str, r)) + "\n" for r in rows))


def test_ingest_csv_drops_corrupted_rows(tmp_path):
    rows = [
        ("2018-01-01 00:00:00+00:00", 500.0, 6.1, 200.0, 10.0),
        ("2018-01-01 00:10:00+00:00", "", 6.0, 201.0, 10.0),        # missing power
        ("2018-01-01 00:20:00+00:00", 520.0, "nan", 202.0, 10.0),   # not finite
        ("2018-01-01 00:30:00+00:00", 530.0, 6.3, 203.0, 10.1),
        ("2018-01-01 00:30:00+00:00", 531.0, 6.3, 203.0, 10.1),     # repeated time
        ("garbage", 1.0, 1.0, 1.0, 1.0),
        ("2018-01-01 00:40:00+00:00", 540.0, 6.4, 204.0, 10.2),
    ]
    p = tmp_path / "wind.csv"
    write_csv(p, rows)
    s = sc.ingest_wind_csv(p, power_scale=1e-3)
    assert len(s) == 3 and s.dropped == 4 and s.raw_count == 7
    assert np.allclose(s.power, [0.5, 0.53, 0.54])
    assert s.record(1).wind_speed == 6.3 and len(s.records()) == 3


def test_ingest_csv_thinning_and_column_map(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("time;P;V;D;T\n" + "".join(
        f"2019-05-01T{h:02d}:{m:02d};{h + m};5;90;12\n" for h in range(2) for m in range(0, 60, 10)))
    cmap = {"timestamp": "time", "active_power": "P", "wind_speed": "V",
            "wind_direction": "D", "temperature": "T"}
    s = sc.ingest_wind_csv(p, frequency=60, column_map=cmap, delimiter=";")
    assert len(s) == 2 and np.allclose(s.power, [0, 1])


def test_ingest_csv_errors(tmp_path):
    with pytest.raises(DataError):
        sc.ingest_wind_csv(tmp_path / "missing.csv")
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="missing columns"):
        sc.ingest_wind_csv(p)
    p.write_text("")
    with pytest.raises(DataError):
        sc.ingest_wind_csv(p)


def test_export_csv_round_trip(tmp_path):
    p = tmp_path / "o.csv"
    sc.export_csv(p, {"a": np.array([1.5, 2.25]), "b": np.array([1, 2])})
    assert p.read_text().splitlines() == ["a,b", "1.5,1", "2.25,2"]


def test_degenerate_gaussian_observations_equal_z():
    d = sc.GaussianScenario(GaussianHierarchy(var_y=0.0), seed=0).sample(0, 5)
    assert np.allclose(d["X"], d["Z"][:, None]) and np.allclose(d["Y"], d["Z"])


def test_newsvendor_marginal_and_limits():
    Y = sc.NewsvendorScenario(DirichletPrior.uniform(11), 20, seed=3).sample(0, 100_000)["Y"]
    assert np.allclose(np.bincount(Y - 1, minlength=11) / Y.size, 1 / 11, atol=0.005)
    alpha = np.ones(11)
    alpha[6] = 1e6
    Y = sc.NewsvendorScenario(DirichletPrior(alpha), 20, seed=0).sample(0, 1000)["Y"]
    assert np.mean(Y == 7) > 0.99
    # the shifted test prior puts more mass on high demand than the training prior
    Y_hi = sc.NewsvendorScenario(named_prior("shift_high"), 20, seed=0).sample(0, 20_000)["Y"]
    assert Y_hi.mean() > 6.0


def test_ingest_clean_rows_and_thinning(tmp_path):
    t0 = np.datetime64("2018-01-01T00:00")
    rows = [(f"{str(t0 + i * np.timedelta64(10, 'm')).replace('T', ' ')}:00+00:00",
             float(i), 5.0, 90.0, 10.0) for i in range(10)]
    p = tmp_path / "c.csv"
    write_csv(p, rows)
    assert len(sc.ingest_wind_csv(p)) == 10
    write_csv(p, rows[:9])
    assert np.array_equal(sc.ingest_wind_csv(p, frequency=30).power, [0.0, 3.0, 6.0])


def test_historical_window_arithmetic():
    s = sc.wind_synthetic(seed=0, count=4)
    X, _, skipped = sc.build_observations(s.thin(10), sc.ObservationSpec("historical"))
    assert X.shape == (1, 11) and skipped == 3
    short = sc.wind_synthetic(seed=0, count=3)
    X, _, skipped = sc.build_observations(short, sc.ObservationSpec("historical"))
    assert X.shape == (0, 11) and skipped == 3
