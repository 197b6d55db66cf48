"""Welch's t-test, the Student-t tail probability, and the hypothesis harness.

The four hypotheses compare fixed pairs of transfer paths on pooled quality
scores. The t statistic is signed favored-minus-baseline; the p-value is
two-sided, and a hypothesis is "Supported" only when p clears alpha AND the
favored mean actually exceeds the baseline mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, DataError, NumericalError


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float  # unbiased, n-1 denominator

    def __post_init__(self) -> None:
        if self.n < 2:
            raise DataError(f"a sample needs at least two observations, got {self.n}")
        if self.variance < 0:
            raise DataError(f"variance must be non-negative, got {self.variance}")


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    df: float
    p_value: float
    mean_a: float
    mean_b: float


def summarize(sample: Sequence[float]) -> SampleSummary:
    """Exact mean and unbiased variance of a sample of size >= 2."""
    n = len(sample)
    if n < 2:
        raise DataError(f"a sample needs at least two observations, got {n}")
    mean = math.fsum(sample) / n
    variance = math.fsum((x - mean) ** 2 for x in sample) / (n - 1)
    return SampleSummary(n=n, mean=mean, variance=variance)


def welch_t(a: SampleSummary, b: SampleSummary) -> TTestResult:
    """Two-sample Welch test: unequal variances, Welch-Satterthwaite df."""
    sa = a.variance / a.n
    sb = b.variance / b.n
    pooled = sa + sb
    if pooled <= 0.0:
        raise DataError("zero pooled standard error: both samples are constant")
    t = (a.mean - b.mean) / math.sqrt(pooled)
    df = pooled * pooled / (sa * sa / (a.n - 1) + sb * sb / (b.n - 1))
    p = 2.0 * student_t_sf(abs(t), df)
    return TTestResult(t_stat=t, df=df, p_value=min(p, 1.0), mean_a=a.mean, mean_b=b.mean)


# ---------------------------------------------------------------------------
# Student-t upper tail via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_CF_TOL = 1e-12
_CF_MAX_ITER = 300
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz scheme."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise NumericalError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for 0 <= x <= 1, a > 0, b > 0."""
    if not (a > 0 and b > 0):
        raise NumericalError(f"incomplete beta requires positive parameters, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise NumericalError(f"degrees of freedom must be positive, got {df}")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    half_tail = 0.5 * regularized_incomplete_beta(x, df / 2.0, 0.5)
    return half_tail if t > 0 else 1.0 - half_tail


# ---------------------------------------------------------------------------
# Hypothesis harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisSpec:
    id: str
    favored: str
    baseline: str
    claim: str


HYPOTHESES: tuple[HypothesisSpec, ...] = (
    HypothesisSpec("H1", favored="D", baseline="A",
                   claim="matching unmarked training beats marked training on unmarked text"),
    HypothesisSpec("H2", favored="C", baseline="E",
                   claim="marker-trained models transfer better to unmarked future text"),
    HypothesisSpec("H3", favored="B", baseline="E",
                   claim="markers at train and eval time help on future text"),
    HypothesisSpec("H4", favored="A", baseline="F",
                   claim="training with more structure beats predicting it"),
)

SUPPORTED = "Supported"
NOT_SUPPORTED = "not Supported"


@dataclass(frozen=True)
class HypothesisOutcome:
    spec: HypothesisSpec
    result: TTestResult
    verdict: str

    @property
    def mean_favored(self) -> float:
        return self.result.mean_a

    @property
    def mean_baseline(self) -> float:
        return self.result.mean_b


def test_hypotheses(matrix, alpha: float = 0.005) -> list[HypothesisOutcome]:
    """Run every hypothesis against pooled quality-score samples per path.

    ``matrix`` is either a results matrix exposing ``samples_by_path()`` or a
    plain mapping of path name to sample list. The t statistic is favored
    minus baseline; verdicts require both p < alpha and a favored-mean
    advantage.
    """
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    samples_by_path = matrix.samples_by_path() if hasattr(matrix, "samples_by_path") else matrix
    outcomes = []
    for spec in HYPOTHESES:
        for path in (spec.favored, spec.baseline):
            if path not in samples_by_path:
                raise DataError(f"hypothesis {spec.id} needs path {path}, which is missing")
        favored = summarize(samples_by_path[spec.favored])
        baseline = summarize(samples_by_path[spec.baseline])
        result = welch_t(favored, baseline)
        verdict = (
            SUPPORTED
            if result.p_value < alpha and favored.mean > baseline.mean
            else NOT_SUPPORTED
        )
        outcomes.append(HypothesisOutcome(spec, result, verdict))
    return outcomes


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

_POOLING_NOTE = (
    "Sample per path: per-type and micro precision/recall/F1, pooled over "
    "models and seeds. Verdicts need p < alpha and a favored-mean advantage."
)


def _mean_cell(outcome: HypothesisOutcome) -> str:
    pairs = sorted(
        [
            (outcome.spec.favored, outcome.mean_favored),
            (outcome.spec.baseline, outcome.mean_baseline),
        ]
    )
    return " / ".join(f"{name}:{value:.4f}" for name, value in pairs)


def render_hypotheses_markdown(outcomes: Sequence[HypothesisOutcome], alpha: float) -> str:
    lines = [
        "# Hypothesis test results",
        "",
        f"alpha = {alpha}",
        "",
        "| Hypothesis | t.stat | df | p-value | Mean | Results |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for o in outcomes:
        r = o.result
        lines.append(
            f"| {o.spec.id} | {r.t_stat:.4f} | {r.df:.2f} | {r.p_value:.4f} "
            f"| {_mean_cell(o)} | {o.verdict} |"
        )
    lines += ["", f"_{_POOLING_NOTE}_", ""]
    return "\n".join(lines)


def hypotheses_csv_rows(outcomes: Sequence[HypothesisOutcome]) -> list[list[str]]:
    rows = [["hypothesis", "t_stat", "df", "p_value", "mean_favored", "mean_baseline", "verdict"]]
    for o in outcomes:
        r = o.result
        rows.append(
            [
                o.spec.id,
                repr(r.t_stat),
                repr(r.df),
                repr(r.p_value),
                repr(o.mean_favored),
                repr(o.mean_baseline),
                o.verdict,
            ]
        )
    return rows
