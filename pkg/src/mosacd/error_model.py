"""Closed-form error analysis of level-wise sepset search, plus simulation.

The stylized setting: a single center node controls whether the pair is
separable, candidate conditioning sets of size k split into those containing
the center (incZ_k = C(M-1, k-1)) and those not (notZ_k = C(M-1, k)), and an
imperfect CI test fires independently per candidate with false positive rate
alpha and false negative rate beta.  The first-hit rule (PC) and the
unanimity rule (CPC) then decide collider versus non-collider.  The module
evaluates the per-level identification probabilities, the collider-to-
non-collider error-odds ratios with their small-rate approximations, a direct
Monte Carlo simulation of the same search, and the expected-false-positive
table over benchmark network sizes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad

__all__ = [
    "StylizedModel",
    "LevelCounts",
    "level_counts",
    "i_factor",
    "LevelProbabilities",
    "level_probabilities",
    "r_ratio",
    "log_r_ratio",
    "r_ratio_approx",
    "StylizedTally",
    "monte_carlo_stylized",
    "expected_fpr_table",
    "fpr_rows_to_csv",
    "ratio_grid",
]

NONCOLLIDER = "noncollider"
COLLIDER = "collider"

CLOSED_SUM_LIMIT = 30  # beyond this the alternating sum cancels catastrophically


class DegenerateModelError(ValueError):
    """The (M, ell) combination leaves an empty candidate bucket."""


@dataclass(frozen=True)
class StylizedModel:
    """Size M of the candidate pool, level ell, and the CI error rates."""

    M: int
    ell: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.ell < 1:
            raise ValueError("ell must be at least 1")
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie strictly inside (0, 1)")

    @property
    def m(self) -> int:
        """Candidates of size ell containing the center."""
        return math.comb(self.M - 1, self.ell - 1)

    @property
    def n(self) -> int:
        """Candidates of size ell not containing the center."""
        return math.comb(self.M - 1, self.ell)


@dataclass(frozen=True)
class LevelCounts:
    """True-sepset / non-sepset counts per bucket at one level."""

    level: int
    s_z: int   # true sepsets containing the center
    u_z: int   # non-sepsets containing the center
    s_nz: int  # true sepsets avoiding the center
    u_nz: int  # non-sepsets avoiding the center

    @property
    def s(self) -> int:
        return self.s_z + self.s_nz

    @property
    def u(self) -> int:
        return self.u_z + self.u_nz


def level_counts(M: int, max_level: int, truth: str) -> list[LevelCounts]:
    """Bucket counts for levels 0..max_level under the given truth label.

    Non-collider truth: every center-containing candidate separates, nothing
    else does.  Collider truth: the mirror image, and the empty set separates
    at level zero.
    """
    if truth not in (NONCOLLIDER, COLLIDER):
        raise ValueError(f"truth must be {NONCOLLIDER!r} or {COLLIDER!r}")
    out = []
    for k in range(max_level + 1):
        if k == 0:
            if truth == NONCOLLIDER:
                out.append(LevelCounts(0, 0, 0, 0, 1))
            else:
                out.append(LevelCounts(0, 0, 0, 1, 0))
            continue
        inc = math.comb(M - 1, k - 1)
        not_ = math.comb(M - 1, k)
        if truth == NONCOLLIDER:
            out.append(LevelCounts(k, inc, 0, 0, not_))
        else:
            out.append(LevelCounts(k, 0, inc, not_, 0))
    return out


def _i_factor_closed_sum(m: int, n: int, a: float, b: float) -> float:
    terms = []
    for i in range(m + 1):
        ci = math.comb(m, i) * (-a) ** i
        for j in range(n + 1):
            terms.append(ci * math.comb(n, j) * (-b) ** j / (i + j + 1))
    return math.fsum(terms)


def _i_factor_quadrature(m: int, n: int, a: float, b: float) -> float:
    def integrand(u: float) -> float:
        return (1.0 - a * u) ** m * (1.0 - b * u) ** n

    value, _err = quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    return value


def i_factor(m: int, n: int, a: float, b: float, method: str = "auto") -> float:
    """Order-averaged no-hit-from-predecessors factor within one level.

    I_{m,n}(a, b) = integral_0^1 (1 - a u)^m (1 - b u)^n du.  The closed
    double binomial sum and adaptive quadrature are independent routes; the
    closed sum uses compensated summation and hands over to quadrature past
    m + n = 30, where the alternating terms cancel catastrophically.
    """
    if m < 0 or n < 0:
        raise ValueError("m and n must be non-negative")
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError("a and b must lie in [0, 1]")
    if m == 0 and n == 0:
        return 1.0
    if n == 0:
        return (1.0 - (1.0 - a) ** (m + 1)) / (a * (m + 1)) if a > 0 else 1.0
    if m == 0:
        return (1.0 - (1.0 - b) ** (n + 1)) / (b * (n + 1)) if b > 0 else 1.0
    if method == "quadrature":
        return _i_factor_quadrature(m, n, a, b)
    if method == "closed-sum":
        if m + n > CLOSED_SUM_LIMIT:
            return _i_factor_quadrature(m, n, a, b)
        return _i_factor_closed_sum(m, n, a, b)
    if method == "auto":
        if m + n > CLOSED_SUM_LIMIT:
            return _i_factor_quadrature(m, n, a, b)
        return _i_factor_closed_sum(m, n, a, b)
    raise ValueError(f"unknown method {method!r}")


def _log_no_hit(s: int, u: int, alpha: float, beta: float) -> float:
    """log of the probability that a whole level registers no hit."""
    if (s and beta == 0.0) or (u and alpha == 1.0):
        return float("-inf")  # a certain hit on this level
    total = 0.0
    if s:
        total += s * math.log(beta)
    if u:
        total += u * math.log1p(-alpha)
    return total


def _log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x <= 0, stable near both ends."""
    if x == float("-inf"):
        return 0.0
    if x >= 0.0:
        raise ValueError("need x < 0")
    if x > -0.693:
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


@dataclass
class LevelProbabilities:
    """Per-level closed forms under one truth label."""

    levels: list[LevelCounts]
    alpha: float
    beta: float
    prev_no_hit: list[float] = field(default_factory=list)
    pr_first_hit: list[float] = field(default_factory=list)
    pr_decision: float = 0.0
    cpc_collider: list[float] = field(default_factory=list)
    cpc_center_saved: list[float] = field(default_factory=list)
    pc_collider: list[float] = field(default_factory=list)
    pc_center_saved: list[float] = field(default_factory=list)


def level_probabilities(
    levels: Sequence[LevelCounts], alpha: float, beta: float
) -> LevelProbabilities:
    """First-hit filtration and per-rule identification probabilities.

    All entries are unconditional (the no-hit weight from earlier levels is
    included); the first-hit events partition the overall decision event, so
    their probabilities sum to it exactly.
    """
    out = LevelProbabilities(levels=list(levels), alpha=alpha, beta=beta)
    a = 1.0 - beta  # hit probability of a true sepset
    b = alpha       # hit probability of a non-sepset
    log_prev = 0.0
    for lc in levels:
        prev = math.exp(log_prev)
        no_hit = math.exp(_log_no_hit(lc.s, lc.u, alpha, beta))
        out.prev_no_hit.append(prev)
        out.pr_first_hit.append(prev * (1.0 - no_hit))

        no_z_hit = math.exp(_log_no_hit(lc.s_z, lc.u_z, alpha, beta))
        no_nz_hit = math.exp(_log_no_hit(lc.s_nz, lc.u_nz, alpha, beta))
        out.cpc_collider.append(prev * no_z_hit * (1.0 - no_nz_hit))
        out.cpc_center_saved.append(prev * no_nz_hit * (1.0 - no_z_hit))

        pc_coll = 0.0
        pc_saved = 0.0
        if lc.s_nz:
            pc_coll += lc.s_nz * a * i_factor(lc.s - 1, lc.u, a, b)
        if lc.u_nz:
            pc_coll += lc.u_nz * b * i_factor(lc.s, lc.u - 1, a, b)
        if lc.s_z:
            pc_saved += lc.s_z * a * i_factor(lc.s - 1, lc.u, a, b)
        if lc.u_z:
            pc_saved += lc.u_z * b * i_factor(lc.s, lc.u - 1, a, b)
        out.pc_collider.append(prev * pc_coll)
        out.pc_center_saved.append(prev * pc_saved)

        log_prev += _log_no_hit(lc.s, lc.u, alpha, beta)
    out.pr_decision = 1.0 - math.exp(log_prev)
    return out


def _model_buckets(model: StylizedModel) -> tuple[int, int]:
    m, n = model.m, model.n
    if m == 0 or n == 0:
        raise DegenerateModelError(
            f"M={model.M}, ell={model.ell} leaves an empty candidate bucket (m={m}, n={n})"
        )
    return m, n


def log_r_ratio(model: StylizedModel, rule: str) -> float:
    """log of the collider-error to non-collider-error odds at the model level."""
    m, n = _model_buckets(model)
    alpha, beta = model.alpha, model.beta
    if rule == "cpc":
        return (
            (m - n) * math.log(beta)
            + _log1mexp(n * math.log1p(-alpha))
            - _log1mexp(m * math.log1p(-alpha))
        )
    if rule == "pc":
        a = 1.0 - beta
        num = i_factor(m, n - 1, a, alpha, method="auto")
        den = i_factor(n, m - 1, a, alpha, method="auto")
        return math.log(n) - math.log(m) + math.log(num) - math.log(den)
    raise ValueError(f"rule must be 'pc' or 'cpc', got {rule!r}")


def r_ratio(model: StylizedModel, rule: str) -> float:
    """Exact error-odds ratio; overflows to inf only past float range."""
    log_r = log_r_ratio(model, rule)
    try:
        return math.exp(log_r)
    except OverflowError:
        return float("inf")


def r_ratio_approx(model: StylizedModel, rule: str) -> float:
    """Small-rate approximations of the error-odds ratios."""
    m, n = _model_buckets(model)
    if rule == "cpc":
        log_r = (m - n) * math.log(model.beta) + math.log(
            (model.M - model.ell) / model.ell
        )
        try:
            return math.exp(log_r)
        except OverflowError:
            return float("inf")
    if rule == "pc":
        base = (n * (n + 1)) / (m * (m + 1))
        correction = 1.0 + model.alpha * (m - n) * (m + n + 1) / ((m + 2) * (n + 2))
        return base * correction
    raise ValueError(f"rule must be 'pc' or 'cpc', got {rule!r}")


@dataclass
class StylizedTally:
    """Monte Carlo outcome counts for the level-wise search."""

    trials: int
    truth: str
    rule: str
    arrivals: list[int]        # trials still undecided entering each level
    collider: list[int]        # decided collider at each level
    center_saved: list[int]    # center in (all) saved sepsets at each level
    mixed: list[int]           # CPC-only: hits on both buckets
    no_decision: int

    def decision_rate(self) -> float:
        return 1.0 - self.no_decision / self.trials

    def collider_rate(self, level: int) -> float:
        return self.collider[level] / self.trials

    def center_saved_rate(self, level: int) -> float:
        return self.center_saved[level] / self.trials

    def conditional_collider_rate(self, level: int) -> float:
        return self.collider[level] / self.arrivals[level] if self.arrivals[level] else 0.0

    def conditional_center_saved_rate(self, level: int) -> float:
        return self.center_saved[level] / self.arrivals[level] if self.arrivals[level] else 0.0

    def summary(self) -> dict:
        def ci95(k: int) -> list[float]:
            p = k / self.trials
            half = 1.96 * math.sqrt(max(p * (1 - p), 1e-300) / self.trials)
            return [max(p - half, 0.0), min(p + half, 1.0)]

        return {
            "trials": self.trials,
            "truth": self.truth,
            "rule": self.rule,
            "decision_rate": self.decision_rate(),
            "levels": [
                {
                    "level": k,
                    "arrivals": self.arrivals[k],
                    "collider": self.collider[k],
                    "collider_rate_ci95": ci95(self.collider[k]),
                    "center_saved": self.center_saved[k],
                    "center_saved_rate_ci95": ci95(self.center_saved[k]),
                    "mixed": self.mixed[k],
                }
                for k in range(len(self.arrivals))
            ],
        }


def monte_carlo_stylized(
    model: StylizedModel, truth: str, rule: str, trials: int, rng
) -> StylizedTally:
    """Simulate the level-wise search through the model's level.

    Per level, every remaining trial draws independent hits in each bucket.
    PC picks the first hit of a uniformly random within-level order — given
    the hit set, the first hitter is uniform among hitters, so a bucket is
    chosen with probability proportional to its hit count.  CPC decides only
    when all hits fall into one bucket.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if rule not in ("pc", "cpc"):
        raise ValueError(f"rule must be 'pc' or 'cpc', got {rule!r}")
    levels = level_counts(model.M, model.ell, truth)
    arrivals, collider, center_saved, mixed = [], [], [], []
    remaining = trials
    a = 1.0 - model.beta
    b = model.alpha
    for lc in levels:
        arrivals.append(remaining)
        if remaining == 0:
            collider.append(0)
            center_saved.append(0)
            mixed.append(0)
            continue
        h_z = rng.binomial(lc.s_z, a, remaining) + rng.binomial(lc.u_z, b, remaining)
        h_nz = rng.binomial(lc.s_nz, a, remaining) + rng.binomial(lc.u_nz, b, remaining)
        total = h_z + h_nz
        hit = total > 0
        if rule == "pc":
            u = rng.random(remaining)
            with np.errstate(divide="ignore", invalid="ignore"):
                frac_z = np.where(total > 0, h_z / np.maximum(total, 1), 0.0)
            first_in_z = hit & (u < frac_z)
            center_saved.append(int(first_in_z.sum()))
            collider.append(int((hit & ~first_in_z).sum()))
            mixed.append(0)
        else:
            all_z = hit & (h_nz == 0)
            none_z = hit & (h_z == 0)
            both = hit & ~all_z & ~none_z
            center_saved.append(int(all_z.sum()))
            collider.append(int(none_z.sum()))
            mixed.append(int(both.sum()))
        remaining -= int(hit.sum())
    return StylizedTally(
        trials=trials,
        truth=truth,
        rule=rule,
        arrivals=arrivals,
        collider=collider,
        center_saved=center_saved,
        mixed=mixed,
        no_decision=remaining,
    )


# -- expected false positive rates over benchmark networks ----------------------


def expected_fpr_table(
    network_stats: Sequence[dict],
    ell_max: int = 3,
    alpha: float = 0.05,
    beta: float = 0.1,
) -> list[dict]:
    """Expected false identification rates, colliders-first vs non-collider-first.

    Per network, M is the node count minus the pair under test; levels
    0..ell_max are searched.  The colliders-first column is the probability of
    a false collider identification when the truth is a non-collider; the
    non-collider-first column the mirror image.  Arc counts and average
    degrees ride along in the stats for context but do not enter the model.
    """
    if ell_max < 1:
        raise ValueError("ell_max must be >= 1")
    rows = []
    for stats in network_stats:
        name = stats["name"]
        nodes = int(stats["nodes"])
        M = nodes - 2
        nc = level_probabilities(level_counts(M, ell_max, NONCOLLIDER), alpha, beta)
        co = level_probabilities(level_counts(M, ell_max, COLLIDER), alpha, beta)
        rows.append(
            {
                "network": name,
                "nodes": nodes,
                "pc_colliders_first": math.fsum(nc.pc_collider),
                "pc_noncolliders_first": math.fsum(co.pc_center_saved),
                "cpc_colliders_first": math.fsum(nc.cpc_collider),
                "cpc_noncolliders_first": math.fsum(co.cpc_center_saved),
            }
        )
    return rows


def _format_rate(value: float) -> str:
    if value == 0.0:
        return "~0"  # underflowed past float range
    if value >= 1e-6:
        return f"{value:.6f}"
    exponent = math.floor(math.log10(value))
    mantissa = value / 10**exponent
    return f"{mantissa:.0f}.e{exponent:+03d}"


def fpr_rows_to_csv(rows: Sequence[dict]) -> str:
    header = (
        "network,PC (colliders-first),PC (nonc-first),"
        "CPC (colliders-first),CPC (nonc-first)"
    )
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                [
                    row["network"],
                    _format_rate(row["pc_colliders_first"]),
                    _format_rate(row["pc_noncolliders_first"]),
                    _format_rate(row["cpc_colliders_first"]),
                    _format_rate(row["cpc_noncolliders_first"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def ratio_grid(
    M: int, ells: Sequence[int], alpha: float, beta: float
) -> list[dict]:
    """Exact and approximate ratios over levels, for the ratios CSV."""
    rows = []
    for ell in ells:
        model = StylizedModel(M=M, ell=ell, alpha=alpha, beta=beta)
        row = {"M": M, "ell": ell, "alpha": alpha, "beta": beta}
        for rule in ("pc", "cpc"):
            try:
                row[f"r_{rule}"] = r_ratio(model, rule)
                row[f"log_r_{rule}"] = log_r_ratio(model, rule)
                row[f"r_{rule}_approx"] = r_ratio_approx(model, rule)
            except DegenerateModelError:
                row[f"r_{rule}"] = float("nan")
        row["above_one"] = bool(
            row.get("log_r_pc", -1) > 0 and row.get("log_r_cpc", -1) > 0
        )
        rows.append(row)
    return rows


def monte_carlo_summary_json(tally: StylizedTally) -> str:
    return json.dumps(tally.summary(), indent=2)
