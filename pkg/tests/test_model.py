import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracmaxent.model import (
    CASES,
    CaseSpec,
    CompoundModel,
    LossDataError,
    LossSample,
    ParameterError,
    case_data,
    load_losses,
    simulate_compound,
    simulate_severities,
    split_observed_test,
    write_losses,
)


class TestCompoundModel:
    def test_rejects_bad_parameters(self):
        for args in [(0, 0, 1), (-1, 0, 1), (1, 0, 0), (1, 0, -0.5), (1, np.nan, 1)]:
            with pytest.raises(ParameterError):
                CompoundModel(*args)

    def test_moments(self):
        m = CompoundModel(3.0, 0.0, 0.25)
        assert m.zero_mass == pytest.approx(np.exp(-3))
        assert m.mean == pytest.approx(3 * np.exp(0.25**2 / 2))
        assert m.variance == pytest.approx(3 * np.exp(2 * 0.25**2))

    def test_case_table(self):
        assert CASES["case1"].model == CompoundModel(3.0, 0.0, 0.25)
        assert CASES["case5"].model.sigma == 0.5
        assert CASES["case1"].n_observed == 8000 and CASES["case1"].n_test == 1500

    def test_casespec_sizes(self):
        with pytest.raises(ParameterError):
            CaseSpec(CASES["case1"].model, n_observed=0)
        with pytest.raises(ParameterError):
            CaseSpec(CASES["case1"].model, n_test=-1)


class TestSimulation:
    def test_deterministic(self):
        m = CASES["case1"].model
        a = simulate_compound(m, 500, 7)
        b = simulate_compound(m, 500, 7)
        assert a.values.tobytes() == b.values.tobytes()
        assert not np.array_equal(a.values, simulate_compound(m, 500, 8).values)

    def test_zero_fraction_and_mean(self):
        m = CASES["case1"].model
        n = 10**6
        s = simulate_compound(m, n, 2024)
        p0 = np.exp(-3)
        assert abs(s.zero_fraction - p0) <= 4 * np.sqrt(p0 * (1 - p0) / n)
        assert abs(s.values.mean() - 3.0950) <= 4 * np.sqrt(m.variance / n)
        assert s.values.mean() == pytest.approx(3 * np.exp(0.03125), abs=4 * np.sqrt(m.variance / n))
        assert s.values.var() == pytest.approx(m.variance, rel=0.05)

    def test_zero_fraction_small_sample(self):
        for seed in range(5):
            s = simulate_compound(CASES["case1"].model, 8000, seed)
            p0 = np.exp(-3)
            assert abs(s.zero_fraction - p0) <= 4 * np.sqrt(p0 * (1 - p0) / 8000)

    def test_zero_count_matches(self):
        s = simulate_compound(CASES["case2"].model, 2000, 3)
        assert s.zero_count == int(np.sum(s.values == 0))
        assert np.all(s.values >= 0)

    def test_severities_are_lognormal(self):
        m = CompoundModel(2.0, 0.1, 0.25)
        _, x = simulate_compound(m, 20000, 11, return_severities=True)
        assert np.mean(np.log(x)) == pytest.approx(0.1, abs=0.01)
        assert np.std(np.log(x)) == pytest.approx(0.25, abs=0.01)
        # the severity stream is shared with simulate_severities
        np.testing.assert_array_equal(simulate_severities(m, 100, 11), x[:100])

    def test_sums_match_severities(self):
        m = CASES["case1"].model
        s, x = simulate_compound(m, 50, 5, return_severities=True)
        assert s.values.sum() == pytest.approx(x.sum())

    def test_bad_n(self):
        with pytest.raises(ParameterError):
            simulate_compound(CASES["case1"].model, 0, 1)


class TestLossSample:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LossSample(np.array([1.0, -0.1]))

    def test_views(self):
        s = LossSample(np.array([2.0, 0.0, 1.0]))
        np.testing.assert_array_equal(s.sorted(), [0, 1, 2])
        np.testing.assert_array_equal(s.positive(), [2, 1])
        assert s.zero_count == 1 and len(s) == 3

    def test_read_only(self):
        s = LossSample(np.array([1.0]))
        with pytest.raises(ValueError):
            s.values[0] = 5.0


class TestLoadLosses:
    def test_parse(self):
        s = load_losses("0\n1.5\n2.25\n")
        np.testing.assert_array_equal(s.values, [0, 1.5, 2.25])
        assert s.zero_count == 1

    def test_header_autodetect(self):
        assert len(load_losses("loss\n1\n2\n")) == 2
        assert len(load_losses("1\n2\n", header=True)) == 1

    def test_empty(self):
        with pytest.raises(LossDataError, match="empty"):
            load_losses("")

    def test_negative_line_number(self):
        with pytest.raises(LossDataError, match="line 1"):
            load_losses("-1\n")

    def test_malformed_line_number(self):
        with pytest.raises(LossDataError, match="line 3"):
            load_losses("1\n2\nabc\n")

    def test_two_columns(self):
        with pytest.raises(LossDataError, match="line 1"):
            load_losses("1,2\n")

    def test_roundtrip(self):
        s = simulate_compound(CASES["case1"].model, 200, 1)
        buf = io.StringIO()
        write_losses(s, buf, header="loss")
        back = load_losses(buf.getvalue())
        assert back.values.tobytes() == s.values.tobytes()


class TestSplit:
    def test_sizes(self):
        s = simulate_compound(CASES["case1"].model, 9500, 3)
        obs, test = split_observed_test(s, 1500, 9)
        assert len(obs) == 8000 and len(test) == 1500
        np.testing.assert_array_equal(np.sort(np.concatenate([obs.values, test.values])), s.sorted())

    def test_no_split(self):
        s = simulate_compound(CASES["case1"].model, 100, 3)
        obs, test = split_observed_test(s, 0, 1)
        np.testing.assert_array_equal(obs.values, s.values)
        assert len(test) == 0

    def test_deterministic(self):
        s = simulate_compound(CASES["case1"].model, 300, 3)
        a = split_observed_test(s, 50, 4)
        b = split_observed_test(s, 50, 4)
        np.testing.assert_array_equal(a[1].values, b[1].values)

    def test_too_large(self):
        s = simulate_compound(CASES["case1"].model, 10, 3)
        with pytest.raises(ParameterError):
            split_observed_test(s, 10, 1)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(2, 300), frac=st.floats(0, 0.99), seed=st.integers(0, 2**32 - 1))
    def test_partition_property(self, n, frac, seed):
        s = LossSample(np.arange(n, dtype=float))
        k = int(frac * (n - 1))
        obs, test = split_observed_test(s, k, seed)
        assert len(test) == k
        assert set(obs.values).isdisjoint(test.values)
        assert len(obs) + len(test) == n

    def test_case_data_modes(self):
        case = CaseSpec(CASES["case1"].model, 400, 100)
        obs, test = case_data(case, 1)
        assert (len(obs), len(test)) == (400, 100)
        obs2, test2 = case_data(case, 1, independent_test=False)
        assert (len(obs2), len(test2)) == (400, 100)
