from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fypum.data import (CsvSchema, DatasetError, DecisionMakers, Rows, SyntheticSpec, generate_synthetic,
                        generate_synthetic_stack, load_csv, rng_for, sample_choices, subsample,
                        swissmetro_schema, write_csv)
from fypum.estimators import estimate_fy_nag
from fypum.losses import ChoiceDataset
from fypum.perturbation import Perturbation
from fypum.pum import choice_probabilities
from fypum.simplex import SolverConfig

FIXTURES = Path(__file__).parent / "fixtures"
BETA = np.array([1.0, 2.0, 0.5])


def spec(**kw):
    base = dict(N=50, K=3, d=3, beta_true=BETA, family=Perturbation.shannon(), seed=1)
    base.update(kw)
    return SyntheticSpec(**base)


class TestSynthetic:
    def test_no_noise_shares_features(self):
        data = generate_synthetic(spec(N=2, noise_sd=0.0))
        np.testing.assert_array_equal(data.X[0], data.X[1])

    def test_deterministic(self):
        a, b = generate_synthetic(spec()), generate_synthetic(spec())
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)
        c = generate_synthetic(spec(seed=2))
        assert not np.array_equal(a.X, c.X)

    def test_base_features_in_range(self):
        data = generate_synthetic(spec(N=1, noise_sd=0.0, feature_base_scale=0.3))
        assert np.all(np.abs(data.X) <= 0.3)

    def test_stack_matches_single(self):
        seeds = [3, 17, 2 ** 63 + 5]
        X, y = generate_synthetic_stack(spec(), seeds)
        for r, s in enumerate(seeds):
            single = generate_synthetic(spec(seed=s))
            np.testing.assert_array_equal(X[r], single.X)
            np.testing.assert_array_equal(y[r], single.y)

    def test_zero_beta_uniform_choices(self):
        data = generate_synthetic(spec(N=10_000, beta_true=np.zeros(3)))
        freq = np.bincount(data.y, minlength=3) / data.N
        band = 3 * np.sqrt((1 / 3) * (2 / 3) / data.N)
        assert np.all(np.abs(freq - 1 / 3) <= band)

    @pytest.mark.parametrize("pert", [Perturbation.shannon(), Perturbation.quadratic(2.0), Perturbation.cauchy(0.5)])
    def test_label_frequencies_match_model(self, pert):
        rng = rng_for(123)
        v = np.array([0.4, -0.3, 0.1, 0.0])
        p = choice_probabilities(pert, v)
        n = 100_000
        freq = np.bincount(sample_choices(pert, v, rng, size=n), minlength=4) / n
        assert np.all(np.abs(freq - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12)

    def test_large_sample_recovers_beta(self):
        data = generate_synthetic(spec(N=100_000, seed=7))
        res = estimate_fy_nag(Perturbation.shannon(), data, SolverConfig(tol_kkt=1e-8))
        assert np.linalg.norm(res.beta - BETA) < 0.05

    @pytest.mark.parametrize("kw", [dict(N=0), dict(noise_sd=-1.0), dict(beta_true=np.ones(2)), dict(seed=-1)])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            spec(**kw)


class TestCsv:
    def availability_schema(self):
        return CsvSchema({"train": ["train_time", "train_cost"], "car": ["car_time", "car_cost"]}, "choice",
                         id_column="id", availability_columns={"car": "car_av"})

    def test_availability_filter(self):
        data = load_csv(FIXTURES / "availability_mini.csv", self.availability_schema())
        assert data.N == 2
        assert data.meta["dropped"] == {"unavailable": 1, "invalid_choice": 0}
        np.testing.assert_array_equal(data.y, [0, 1])
        np.testing.assert_array_equal(data.ids, [1, 3])

    def test_availability_filter_off(self):
        data = load_csv(FIXTURES / "availability_mini.csv", self.availability_schema(), filter_availability=False)
        assert data.N == 3

    def test_swissmetro_fixture(self):
        data = load_csv(FIXTURES / "swissmetro_mini.csv", swissmetro_schema())
        # 10 rows: row 5 has the car unavailable, row 8 has choice code 0
        assert (data.N, data.K, data.d) == (8, 3, 6)
        assert data.meta["dropped"] == {"unavailable": 1, "invalid_choice": 1}
        np.testing.assert_array_equal(data.y, [1, 1, 1, 0, 2, 2, 1, 0])
        np.testing.assert_array_equal(data.ids, [1, 1, 1, 2, 2, 3, 3, 4])
        # first row, train: ASCs (1, 0), TT 112, CO 48, HE 120, GA 0
        np.testing.assert_array_equal(data.X[0, 0], [1, 0, 112, 48, 120, 0])
        np.testing.assert_array_equal(data.X[3, 1], [0, 1, 63, 42, 20, 1])
        np.testing.assert_array_equal(data.X[3, 2], [0, 0, 72, 52, 0, 0])

    def test_round_trip_exact(self, tmp_path):
        data = generate_synthetic(spec(N=40, seed=9))
        data = ChoiceDataset(data.X, data.y, np.arange(40) // 4)
        schema = write_csv(tmp_path / "d.csv", data)
        back = load_csv(tmp_path / "d.csv", schema)
        np.testing.assert_array_equal(back.X, data.X)
        np.testing.assert_array_equal(back.y, data.y)
        np.testing.assert_array_equal(back.ids, data.ids)
        assert back.X.tobytes() == data.X.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=6, max_size=6))
    def test_round_trip_any_float(self, tmp_path_factory, vals):
        X = np.array(vals).reshape(1, 2, 3)
        data = ChoiceDataset(X, [1])
        path = tmp_path_factory.mktemp("rt") / "d.csv"
        back = load_csv(path, write_csv(path, data))
        assert back.X.tobytes() == data.X.tobytes()

    def test_missing_column(self, tmp_path):
        (tmp_path / "d.csv").write_text("choice,a_x\n0,1.0\n")
        schema = CsvSchema({"a": ["a_x"], "b": ["b_x"]}, "choice")
        with pytest.raises(DatasetError, match="'b_x'"):
            load_csv(tmp_path / "d.csv", schema)

    def test_non_numeric(self, tmp_path):
        (tmp_path / "d.csv").write_text("choice,a_x,b_x\n0,1.0,2.0\n1,abc,2.0\n")
        schema = CsvSchema({"a": ["a_x"], "b": ["b_x"]}, "choice")
        with pytest.raises(DatasetError, match="row 1"):
            load_csv(tmp_path / "d.csv", schema)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_csv(tmp_path / "nope.csv", swissmetro_schema())

    def test_undeclared_choice_dropped(self, tmp_path):
        (tmp_path / "d.csv").write_text("choice,a_x,b_x\na,1.0,2.0\nzzz,1.0,2.0\n1,3.0,4.0\n")
        data = load_csv(tmp_path / "d.csv", CsvSchema({"a": ["a_x"], "b": ["b_x"]}, "choice"))
        assert data.N == 2 and data.meta["dropped"]["invalid_choice"] == 1
        np.testing.assert_array_equal(data.y, [0, 1])

    def test_standardize_inverse(self):
        schema = swissmetro_schema()
        raw = load_csv(FIXTURES / "swissmetro_mini.csv", schema)
        z = load_csv(FIXTURES / "swissmetro_mini.csv", schema, standardize=True)
        sc = z.meta["scaler"]
        np.testing.assert_allclose(z.X * np.array(sc["scale"]) + np.array(sc["mean"]), raw.X, rtol=1e-12)
        flat = z.X.reshape(-1, z.d)
        np.testing.assert_allclose(flat[:, 2:5].mean(axis=0), 0, atol=1e-12)

    def test_schema_validation(self):
        with pytest.raises(ValueError):
            CsvSchema({"a": ["x", "y"], "b": ["z"]}, "choice")
        with pytest.raises(ValueError):
            CsvSchema({"a": ["x"]}, "choice", choice_codes={"1": "nope"})


class TestSubsample:
    @pytest.fixture
    def panel(self):
        data = generate_synthetic(spec(N=45, seed=4))
        return ChoiceDataset(data.X, data.y, np.repeat(np.arange(5), 9))

    def test_full_rows_is_permutation(self, panel):
        sub = subsample(panel, Rows(panel.N), seed=1)
        order = np.lexsort(sub.X.reshape(sub.N, -1).T)
        ref = np.lexsort(panel.X.reshape(panel.N, -1).T)
        np.testing.assert_array_equal(sub.X[order], panel.X[ref])
        np.testing.assert_array_equal(sub.y[order], panel.y[ref])

    def test_one_decision_maker(self, panel):
        sub = subsample(panel, DecisionMakers(1), seed=3)
        assert sub.N == 9 and np.unique(sub.ids).size == 1

    def test_deterministic(self, panel):
        a = subsample(panel, DecisionMakers(2), seed=8)
        b = subsample(panel, DecisionMakers(2), seed=8)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.ids, b.ids)

    def test_rows_preserved(self, panel):
        sub = subsample(panel, Rows(10), seed=5)
        assert (sub.K, sub.d) == (panel.K, panel.d)
        for x, y, i in zip(sub.X, sub.y, sub.ids):
            match = [n for n in range(panel.N) if np.array_equal(panel.X[n], x)]
            assert len(match) == 1 and panel.y[match[0]] == y and panel.ids[match[0]] == i

    @pytest.mark.parametrize("mode", [Rows(46), Rows(0), DecisionMakers(6)])
    def test_too_large(self, panel, mode):
        with pytest.raises(ValueError):
            subsample(panel, mode, seed=0)

    def test_needs_ids(self):
        with pytest.raises(ValueError):
            subsample(generate_synthetic(spec(N=5)), DecisionMakers(1), seed=0)
