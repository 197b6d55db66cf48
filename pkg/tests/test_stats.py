import math

import mpmath as mp
import numpy as np
import pytest

from chronotag.errors import ConfigError, DataError, NumericalError
from chronotag.stats import (
    HYPOTHESES,
    NOT_SUPPORTED,
    SUPPORTED,
    HypothesisOutcome,
    SampleSummary,
    TTestResult,
    hypotheses_csv_rows,
    regularized_incomplete_beta,
    render_hypotheses_markdown,
    student_t_sf,
    summarize,
    welch_t,
)
from chronotag.stats import test_hypotheses as run_hypotheses

mp.mp.dps = 50


def welch_oracle(a, b):
    """Arbitrary-precision direct-formula oracle for the Welch test."""
    a = [mp.mpf(repr(x)) for x in a]
    b = [mp.mpf(repr(x)) for x in b]
    na, nb = len(a), len(b)
    ma, mb = mp.fsum(a) / na, mp.fsum(b) / nb
    va = mp.fsum((x - ma) ** 2 for x in a) / (na - 1)
    vb = mp.fsum((x - mb) ** 2 for x in b) / (nb - 1)
    sa, sb = va / na, vb / nb
    t = (ma - mb) / mp.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
    x = df / (df + t ** 2)
    p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, x, regularized=True)
    return float(t), float(df), float(p)


def sf_quadrature_oracle(t, df):
    """Numerical integration of the t density over (t, inf)."""
    dfv = mp.mpf(repr(df))
    c = mp.gamma((dfv + 1) / 2) / (mp.sqrt(dfv * mp.pi) * mp.gamma(dfv / 2))
    pdf = lambda u: c * (1 + u * u / dfv) ** (-(dfv + 1) / 2)
    return float(mp.quad(pdf, [mp.mpf(repr(t)), mp.inf]))


class TestSummarize:
    def test_constant_sample(self):
        s = summarize([1.0, 1.0, 1.0])
        assert s.mean == 1.0 and s.variance == 0.0 and s.n == 3

    def test_hand_arithmetic(self):
        s = summarize([1.0, 2.0, 3.0])
        assert s.mean == 2.0
        assert s.variance == 1.0

    def test_single_observation_rejected(self):
        with pytest.raises(DataError):
            summarize([4.2])


class TestWelch:
    def test_identical_summaries(self):
        s = SampleSummary(5, 0.5, 0.01)
        res = welch_t(s, s)
        assert res.t_stat == 0.0
        assert res.p_value == pytest.approx(1.0, abs=1e-12)

    def test_frozen_fixture(self):
        # values computed beforehand with the arbitrary-precision oracle
        res = welch_t(summarize([2.1, 2.5, 2.3, 2.7]), summarize([1.9, 2.0, 2.2]))
        assert res.t_stat == pytest.approx(2.3452078799117148, abs=1e-10)
        assert res.df == pytest.approx(4.864321608040201, abs=1e-10)
        assert res.p_value == pytest.approx(0.06738977893750972, abs=1e-10)

    def test_antisymmetry(self):
        a = summarize([0.8, 0.9, 0.85, 0.95])
        b = summarize([0.7, 0.75, 0.72])
        fwd = welch_t(a, b)
        rev = welch_t(b, a)
        assert fwd.t_stat == pytest.approx(-rev.t_stat, abs=1e-14)
        assert fwd.df == pytest.approx(rev.df, abs=1e-14)
        assert fwd.p_value == pytest.approx(rev.p_value, abs=1e-14)

    def test_zero_pooled_variance_rejected(self):
        with pytest.raises(DataError):
            welch_t(SampleSummary(3, 1.0, 0.0), SampleSummary(3, 2.0, 0.0))

    def test_against_oracle_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            na, nb = int(rng.integers(2, 30)), int(rng.integers(2, 30))
            a = [float(v) for v in np.round(rng.normal(0.7, 0.1, size=na), 12)]
            b = [float(v) for v in np.round(rng.normal(0.6, 0.2, size=nb), 12)]
            res = welch_t(summarize(a), summarize(b))
            t, df, p = welch_oracle(a, b)
            assert res.t_stat == pytest.approx(t, abs=1e-10, rel=1e-10)
            assert res.df == pytest.approx(df, abs=1e-10, rel=1e-10)
            assert res.p_value == pytest.approx(p, abs=1e-10, rel=1e-10)


class TestStudentTSf:
    def test_zero_is_half(self):
        assert student_t_sf(0.0, 7.3) == 0.5

    def test_cauchy_closed_form(self):
        # df = 1: sf(t) = 1/2 - arctan(t)/pi
        assert student_t_sf(1.0, 1.0) == pytest.approx(0.25, abs=1e-12)
        for t in (-2.0, -0.3, 0.7, 3.5):
            assert student_t_sf(t, 1.0) == pytest.approx(
                0.5 - math.atan(t) / math.pi, abs=1e-12
            )

    def test_against_quadrature_grid(self):
        for df in (1.0, 2.0, 119.27, 267.34):
            for t in (-4.2575, -1.0, 0.0, 0.5, 1.0, 2.0, 4.2575):
                expected = sf_quadrature_oracle(t, df)
                assert student_t_sf(t, df) == pytest.approx(expected, abs=1e-9), (t, df)

    def test_monotone_decreasing_in_t(self):
        ts = np.linspace(-6, 6, 41)
        for df in (0.5, 3.0, 50.0):
            values = [student_t_sf(float(t), df) for t in ts]
            assert all(a > b for a, b in zip(values, values[1:]))

    def test_symmetry(self):
        for df in (0.7, 5.0, 123.4):
            for t in (0.1, 0.9, 2.7, 5.5):
                assert student_t_sf(t, df) + student_t_sf(-t, df) == pytest.approx(1.0, abs=1e-9)

    def test_invalid_df(self):
        with pytest.raises(NumericalError):
            student_t_sf(1.0, 0.0)


class TestIncompleteBeta:
    def test_bounds(self):
        assert regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0
        assert regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0

    def test_against_mpmath(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = float(rng.uniform(0.1, 50))
            b = float(rng.uniform(0.1, 50))
            x = float(rng.uniform(0.001, 0.999))
            expected = float(mp.betainc(mp.mpf(repr(a)), mp.mpf(repr(b)), 0,
                                        mp.mpf(repr(x)), regularized=True))
            assert regularized_incomplete_beta(x, a, b) == pytest.approx(
                expected, abs=1e-11, rel=1e-11
            )


class TestHypotheses:
    def samples(self, **means):
        rng = np.random.default_rng(7)
        out = {}
        for path in "ABCDEF":
            mu = means.get(path, 0.5)
            out[path] = list(np.clip(rng.normal(mu, 0.02, size=24), 0, 1))
        return out

    def test_identical_samples_not_supported(self):
        base = self.samples()
        same = {p: base["A"] for p in "ABCDEF"}
        outcomes = run_hypotheses(same, alpha=0.005)
        assert all(o.verdict == NOT_SUPPORTED for o in outcomes)
        assert all(o.result.p_value == pytest.approx(1.0) for o in outcomes)

    def test_fixed_pairings(self):
        pairs = [(h.id, h.favored, h.baseline) for h in HYPOTHESES]
        assert pairs == [
            ("H1", "D", "A"),
            ("H2", "C", "E"),
            ("H3", "B", "E"),
            ("H4", "A", "F"),
        ]

    def test_supported_requires_direction(self):
        # D clearly *below* A: p tiny, but direction wrong -> not supported
        samples = self.samples(D=0.3, A=0.9)
        outcomes = run_hypotheses(samples, alpha=0.005)
        h1 = outcomes[0]
        assert h1.result.p_value < 0.005
        assert h1.verdict == NOT_SUPPORTED

    def test_supported_when_direction_and_p(self):
        samples = self.samples(D=0.9, A=0.3)
        h1 = run_hypotheses(samples, alpha=0.005)[0]
        assert h1.verdict == SUPPORTED
        assert h1.mean_favored > h1.mean_baseline

    def test_alpha_one_supports_all_directionally_ordered(self):
        samples = self.samples(D=0.9, A=0.5, C=0.7, E=0.4, B=0.8, F=0.45)
        outcomes = run_hypotheses(samples, alpha=1.0)
        assert all(o.verdict == SUPPORTED for o in outcomes)

    def test_missing_path_rejected(self):
        samples = self.samples()
        del samples["F"]
        with pytest.raises(DataError, match="H4"):
            run_hypotheses(samples, alpha=0.005)

    def test_bad_alpha_rejected(self):
        with pytest.raises(ConfigError):
            run_hypotheses(self.samples(), alpha=0.0)

    def test_pure_function(self):
        samples = self.samples(D=0.8)
        a = run_hypotheses(samples, alpha=0.01)
        b = run_hypotheses(samples, alpha=0.01)
        assert a == b

    def test_verdict_logic_assertable_from_outputs(self):
        samples = self.samples(D=0.9, A=0.3, B=0.2, E=0.6)
        for o in run_hypotheses(samples, alpha=0.05):
            if o.verdict == SUPPORTED:
                assert o.mean_favored > o.mean_baseline
                assert o.result.p_value < 0.05


class TestRendering:
    def outcome(self):
        spec = HYPOTHESES[0]  # H1: favored D, baseline A
        result = TTestResult(t_stat=4.2575, df=119.27, p_value=0.00003, mean_a=0.9055, mean_b=0.8338)
        return HypothesisOutcome(spec, result, SUPPORTED)

    def test_markdown_row_shape(self):
        md = render_hypotheses_markdown([self.outcome()], alpha=0.005)
        # means are listed path-labelled in alphabetical path order
        assert "| H1 | 4.2575 | 119.27 | 0.0000 | A:0.8338 / D:0.9055 | Supported |" in md

    def test_csv_rows_full_precision(self):
        rows = hypotheses_csv_rows([self.outcome()])
        assert rows[0] == ["hypothesis", "t_stat", "df", "p_value",
                           "mean_favored", "mean_baseline", "verdict"]
        assert rows[1][0] == "H1"
        assert float(rows[1][1]) == 4.2575
        assert rows[1][6] == SUPPORTED
