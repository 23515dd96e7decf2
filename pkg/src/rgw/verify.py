"""Verification suites: every acceptance check behind `rgw verify`.

Each check pins its tolerance explicitly and reports a deterministic
detail string (no timings, no timestamps) so that repeated runs with the
same seed produce byte-identical reports.  Wall-clock limits that are part
of a check are enforced inside the check but never printed.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from . import analytic, exact, ode, sim
from .errors import BlowUpDetected
from .model import ModelParams, mean, new_law

DEFAULT_SEED = 42


@dataclass(frozen=True)
class CheckResult:
    cid: str
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _params(masses: dict, q: float) -> ModelParams:
    return ModelParams(new_law(masses), q)


def _random_law(rng: np.random.Generator, kstar_max: int = 6,
                require_two_positive: bool = True, kstar: int | None = None):
    """Random finite law; masses bounded away from the pruning floor."""
    while True:
        ks = kstar if kstar is not None else int(rng.integers(2, kstar_max + 1))
        extra = set(int(v) for v in rng.integers(1, ks, size=int(rng.integers(1, 4))))
        pts = sorted({ks} | extra | ({0} if rng.random() < 0.5 else set()))
        if require_two_positive and sum(1 for p in pts if p > 0) < 2:
            continue
        pr = rng.dirichlet(np.ones(len(pts)))
        if pr.min() < 1e-3:
            continue
        return new_law(dict(zip(pts, pr)))


def _mixed_law_rate_closed_form() -> float:
    """Rate for the law {1: 1/2, 2: 1/2} at q = 1/2 from the antiderivative.

    sqrt((1-t)(1-2t)) = sqrt(2) sqrt((t - 3/4)^2 - 1/16), and
    int sqrt(u^2 - c^2) du = u/2 sqrt(u^2-c^2) - c^2/2 log|u + sqrt(u^2-c^2)|.
    """

    def F(u: float) -> float:
        r = math.sqrt(u * u - 1.0 / 16.0)
        return 0.5 * u * r - (1.0 / 32.0) * math.log(abs(u + r))

    integral = math.sqrt(2.0) * (F(-0.25) - F(-0.75))
    return 0.5 / integral


# the fixed Monte Carlo panel: laws kept small enough that populations at
# generation 10 stay in the hundreds
MC_PANEL = (
    ({0: 0.5, 2: 0.5}, 0.5),
    ({1: 0.5, 2: 0.5}, 0.5),
    ({0: 0.3, 1: 0.4, 2: 0.3}, 0.4),
    ({0: 0.6, 3: 0.4}, 0.2),
    ({1: 0.8, 2: 0.1, 4: 0.1}, 0.3),
    ({0: 0.4, 1: 0.3, 2: 0.3}, 0.7),
)


# ---------------------------------------------------------------------------
# rates suite (criteria 1-5)
# ---------------------------------------------------------------------------

def check_binary_rate(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    worst = 0.0
    for p in np.arange(0.1, 0.91, 0.1):
        for q in np.arange(0.1, 0.91, 0.1):
            m = analytic.malthusian_rate(_params({0: 1 - p, 2: p}, q)).m
            want = 2.0 * (q + (1.0 - q) * p)
            worst = max(worst, abs(m - want) / m)
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-10 and elapsed < 2.0
    return CheckResult("c01", "binary-rate-closed-form", passed,
                       f"max_rel_err={worst:.3e} over 81 (p,q) pairs")


def check_mixed_law_rate(seed: int) -> CheckResult:
    m = analytic.malthusian_rate(_params({1: 0.5, 2: 0.5}, 0.5)).m
    m_closed = _mixed_law_rate_closed_form()
    passed = abs(m - m_closed) <= 1e-5 and abs(m - 1.682949) <= 1e-5
    return CheckResult("c02", "mixed-law-rate-antiderivative", passed,
                       f"m={m:.10f} closed_form={m_closed:.10f} diff={abs(m-m_closed):.3e}")


def check_sandwich(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 3])
    violations = 0
    worst = math.inf
    for _ in range(200):
        law = _random_law(rng)
        q = float(rng.uniform(0.05, 0.95))
        prof = analytic.malthusian_rate(ModelParams(law, q))
        margin = min(prof.m - prof.lower, prof.upper - prof.m)
        worst = min(worst, margin)
        if not (prof.lower < prof.m < prof.upper):
            violations += 1
    return CheckResult("c03", "bounds-sandwich-strict", violations == 0,
                       f"violations={violations}/200 worst_margin={worst:.3e}")


def check_q_monotonicity(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 4])
    grid = np.arange(0.05, 0.951, 0.05)
    worst_drop = 0.0
    worst_lo = worst_hi = 0.0
    ok = True
    for _ in range(50):
        law = _random_law(rng)
        ms = [analytic.malthusian_rate(ModelParams(law, float(q))).m for q in grid]
        drop = float(np.min(np.diff(ms)))
        worst_drop = min(worst_drop, drop)
        if drop < -1e-12:
            ok = False
        m_lo, m_hi = analytic.rate_limits(law, 1e-4, 1.0 - 1e-4)
        err_lo = abs(m_lo / mean(law) - 1.0)
        err_hi = abs(m_hi / law.kstar - 1.0)
        worst_lo = max(worst_lo, err_lo)
        worst_hi = max(worst_hi, err_hi)
        if err_lo > 0.01 or err_hi > 0.01:
            ok = False
    return CheckResult(
        "c04", "rate-monotone-in-q-with-limits", ok,
        f"worst_drop={worst_drop:.3e} q->0_err={worst_lo:.3e} q->1_err={worst_hi:.3e}",
    )


def check_log_concavity(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 5])
    worst = math.inf
    ok = True
    for _ in range(100):
        ks = int(rng.integers(2, 7))
        l1 = _random_law(rng, kstar=ks)
        l2 = _random_law(rng, kstar=ks)
        c = float(rng.choice(np.arange(0.1, 0.91, 0.1)))
        q = float(rng.uniform(0.05, 0.95))
        mix = {}
        for k in set(l1.support) | set(l2.support):
            mix[k] = c * l1.mass(k) + (1.0 - c) * l2.mass(k)
        lhs = analytic.malthusian_rate(_params(mix, q)).m
        rhs = (analytic.malthusian_rate(ModelParams(l1, q)).m ** c
               * analytic.malthusian_rate(ModelParams(l2, q)).m ** (1.0 - c))
        slack = lhs - rhs
        worst = min(worst, slack)
        if slack < -1e-12:
            ok = False
    return CheckResult("c05", "rate-log-concave-in-law", ok,
                       f"min_slack={worst:.3e} over 100 triples")


# ---------------------------------------------------------------------------
# oracle suite (criteria 6-8)
# ---------------------------------------------------------------------------

def check_oracle_equivalence(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 6])
    worst = 0.0
    for _ in range(25):
        law = _random_law(rng, kstar_max=4, require_two_positive=False)
        q = float(rng.uniform(0.1, 0.9))
        n = int(rng.integers(5, 26))
        params = ModelParams(law, q)
        scale = analytic.malthusian_rate(params).m
        a = exact.spine_dp(params, n, initial="law", scale=scale).scaled
        b = exact.urn_dp(params, n, scale=scale).scaled
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    return CheckResult("c06", "spine-vs-urn-oracle", worst <= 1e-10,
                       f"max_rel_diff={worst:.3e} over 25 configurations")


def check_binary_exactness(seed: int) -> CheckResult:
    worst = 0.0
    for p, q in ((0.3, 0.6), (0.5, 0.5), (0.7, 0.2)):
        params = _params({0: 1 - p, 2: p}, q)
        prof = analytic.malthusian_rate(params)
        table = exact.spine_dp(params, 30, initial="law", scale=prof.m)
        const = p / (q + (1 - q) * p)
        rel = np.abs(table.scaled[1:] - const) / const
        worst = max(worst, float(rel.max()))
    return CheckResult("c07", "binary-scaled-mean-exact", worst <= 1e-12,
                       f"max_rel_err={worst:.3e} for n<=30, three (p,q) pairs")


def check_rate_of_convergence(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    params = _params({1: 0.5, 2: 0.5}, 0.5)
    prof = analytic.malthusian_rate(params)
    table = exact.spine_dp(params, 64, initial="law", scale=prof.m)
    e32 = abs(table.scaled[32] - prof.mean_limit)
    e64 = abs(table.scaled[64] - prof.mean_limit)
    ratio = e64 / e32 / 2.0 ** (-prof.error_exponent)
    elapsed = time.perf_counter() - t0
    passed = 0.7 <= ratio <= 1.4 and elapsed < 5.0
    return CheckResult("c08", "mean-error-power-law-rate", passed,
                       f"e64/e32/2^(-1/beta)={ratio:.4f} (want in [0.7, 1.4])")


# ---------------------------------------------------------------------------
# asymptotics suite (criterion 9 plus gamma diagnostics)
# ---------------------------------------------------------------------------

def check_conditional_trend(seed: int) -> CheckResult:
    params = _params({1: 0.5, 2: 0.5}, 0.5)
    prof = analytic.malthusian_rate(params)
    table = exact.spine_dp(params, 64, initial=1, scale=prof.m)
    target = analytic.conditional_limit_constant(params, 1)
    r16 = 16.0 ** prof.error_exponent * table.scaled[16]
    r64 = 64.0 ** prof.error_exponent * table.scaled[64]
    d16 = abs(r16 / target - 1.0)
    d64 = abs(r64 / target - 1.0)

    seq = analytic._gamma_sequence(params)
    finite = [g for T, g in seq if math.isfinite(T)]
    gamma_gap = abs(finite[-1] - finite[-2]) if len(finite) > 1 else 0.0
    gamma_binary = analytic.gamma_constant(_params({0: 0.5, 2: 0.5}, 0.5))

    passed = (d64 <= 0.25 and d64 < d16 and gamma_gap < 1e-6
              and abs(gamma_binary - 1.0) <= 1e-8)
    return CheckResult(
        "c09", "conditional-mean-trend", passed,
        f"|r64/target-1|={d64:.4f} |r16/target-1|={d16:.4f} "
        f"gamma_gap={gamma_gap:.2e} gamma_binary_err={abs(gamma_binary-1.0):.2e}",
    )


def check_phi_decay(seed: int) -> CheckResult:
    """phi(t) + 1/beta decays monotonically to 0; |phi(40) + 1/beta| < 1e-5."""
    worst_tail = 0.0
    mono_ok = True
    for masses, q in (({1: 0.5, 2: 0.5}, 0.5), ({0: 0.2, 1: 0.3, 3: 0.5}, 0.4)):
        params = _params(masses, q)
        ctx = analytic.critical_context(params)
        limit = analytic.phi_limit(ctx)
        ts = np.arange(1.0, 24.1, 0.5)
        gaps = np.array([analytic.phi(ctx, float(t)) - limit for t in ts])
        mono_ok &= bool(np.all(np.diff(gaps) <= 1e-12)) and bool(np.all(gaps > 0))
        worst_tail = max(worst_tail, abs(analytic.phi(ctx, 40.0) - limit))
    passed = mono_ok and worst_tail < 1e-5
    return CheckResult("asy-phi", "phi-decay-to-minus-1-over-beta", passed,
                       f"monotone={mono_ok} |phi(40)+1/beta|={worst_tail:.2e}")


# ---------------------------------------------------------------------------
# Monte Carlo suite (criteria 10-12)
# ---------------------------------------------------------------------------

def check_mc_consistency(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    worst_sigma = 0.0
    for idx, (masses, q) in enumerate(MC_PANEL):
        params = _params(masses, q)
        scale = analytic.malthusian_rate(params).m
        dp = exact.spine_dp(params, 20, initial="law", scale=scale)
        ez20 = dp.scaled[20] * scale**20
        est = sim.simulate_spine(
            params, 20, sim.SimConfig(seed=seed + 101 * idx, replicas=10**6)
        )
        worst_sigma = max(worst_sigma, abs(est.mean - ez20) / est.std_error)

        ez10 = dp.scaled[10] * scale**10
        pop = sim.simulate_rgw(
            params, 10, sim.SimConfig(seed=seed + 101 * idx + 13, replicas=10**5)
        )
        pest = pop.estimate(10)
        worst_sigma = max(worst_sigma, abs(pest.mean - ez10) / pest.std_error)
    elapsed = time.perf_counter() - t0
    passed = worst_sigma <= 4.0 and elapsed < 60.0
    return CheckResult("c10", "monte-carlo-vs-dp-panel", passed,
                       f"worst_deviation={worst_sigma:.3f} sigma over 6 configurations")


def check_series_identity(seed: int) -> CheckResult:
    configs = (
        ({1: 0.5, 2: 0.5}, 0.5, 1, 0.3, 0.5),
        ({1: 0.5, 2: 0.5}, 0.5, 2, 0.3, 0.5),
        ({0: 0.2, 1: 0.3, 3: 0.5}, 0.4, 3, 0.25, 0.4),
    )
    worst = 0.0
    for idx, (masses, q, ell, c, t) in enumerate(configs):
        params = _params(masses, q)
        series = exact.yule_functional_series(params, ell, c, t, n_terms=80)
        est = sim.estimate_yule_functional(
            params, ell, c, t, sim.SimConfig(seed=seed + 7 * idx, replicas=10**5)
        )
        worst = max(worst, abs(est.mean - series) / est.std_error)
    return CheckResult("c11", "series-vs-typed-population", worst <= 3.0,
                       f"worst_deviation={worst:.3f} sigma over 3 configurations")


def check_yule_marginal(seed: int) -> CheckResult:
    params = _params({1: 0.5, 2: 0.5}, 0.5)
    res = sim.simulate_yule(params, 1.0, sim.SimConfig(seed=seed + 997, replicas=10**5))
    totals = res.totals
    n_rep = len(totals)
    p_geo = math.exp(-1.0)
    # largest bin count with expected frequency >= 5, remainder lumped
    b = 1
    while n_rep * p_geo * (1 - p_geo) ** b >= 5.0:
        b += 1
    observed = np.array(
        [np.count_nonzero(totals == k) for k in range(1, b + 1)]
        + [np.count_nonzero(totals > b)],
        dtype=float,
    )
    expected = np.array(
        [n_rep * p_geo * (1 - p_geo) ** (k - 1) for k in range(1, b + 1)]
        + [n_rep * (1 - p_geo) ** b],
        dtype=float,
    )
    stat = float(np.sum((observed - expected) ** 2 / expected))
    crit = float(_scipy_stats.chi2.ppf(0.99, b))
    return CheckResult("c12", "population-size-geometric", stat <= crit,
                       f"chi2={stat:.3f} critical(0.99, df={b})={crit:.3f}")


# ---------------------------------------------------------------------------
# ODE suite (criteria 13-14)
# ---------------------------------------------------------------------------

_ODE_LAWS = (
    ({1: 0.5, 2: 0.5}, 0.5),
    ({0: 0.5, 2: 0.5}, 0.5),
    ({0: 0.2, 1: 0.3, 3: 0.5}, 0.35),
)


def _weight_sets(params: ModelParams, rng: np.random.Generator):
    law = params.law
    sets = [
        analytic.linear_weights(law),
        analytic.constant_weights(law, 2.0),
        analytic.critical_weights(params),
    ]
    for _ in range(2):
        raw = {j: float(rng.uniform(0.3, 1.6)) for j in law.support}
        sets.append(analytic.weights_from_map(law, raw))
    return sets


def check_ode_fidelity(seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, 13])
    worst = 0.0
    for masses, q in _ODE_LAWS:
        params = _params(masses, q)
        for a in _weight_sets(params, rng):
            ctx = analytic.AnalyticContext(params, a)
            rho = ctx.explosion_time
            t_hi = 0.9 * rho if math.isfinite(rho) else 4.0
            ts = np.linspace(0.0, t_hi, 33)
            sol = ode.integrate_M(params, a, float(ts[-1]), rel_tol=1e-9, t_eval=ts)
            for i, j in enumerate(sol.support):
                closed = np.array([analytic.mgf_closed(ctx, j, float(t)) for t in ts])
                got = sol.values[:, i]
                if a[j] == 0.0:
                    worst = max(worst, float(np.max(np.abs(got))))
                else:
                    worst = max(worst, float(np.max(np.abs(got - closed) / np.abs(closed))))
    fidelity_ok = worst <= 1e-6

    # blow-up detection within 2% of the predicted explosion time
    params = _params({1: 0.5, 2: 0.5}, 0.5)
    a = analytic.constant_weights(params.law, 2.0)
    rho = analytic.explosion_time(params, a)
    try:
        ode.integrate_M(params, a, rho * (1.0 - 1e-12), rel_tol=1e-9)
        blow_err = math.inf
    except BlowUpDetected as exc:
        blow_err = abs(exc.time - rho) / rho
    blow_ok = blow_err <= 0.02
    const_err = abs(rho - math.log(2.0))
    const_ok = const_err <= 1e-10

    passed = fidelity_ok and blow_ok and const_ok
    return CheckResult(
        "c13", "ode-vs-closed-form", passed,
        f"sup_rel_err={worst:.3e} blowup_time_err={blow_err:.4f} "
        f"const_weight_rho_err={const_err:.3e}",
    )


def check_pde_refinement(seed: int) -> CheckResult:
    # domains keep s * max|M| <= 0.35 so the h^2 regime is reached at the
    # base resolution (nearer the 1/(1 - s M) pole the constants explode)
    ratios = []
    configs = []
    p1 = _params({1: 0.5, 2: 0.5}, 0.5)
    configs.append((p1, analytic.critical_weights(p1), 2.0))
    p2 = _params({0: 0.5, 2: 0.5}, 0.5)
    configs.append((p2, analytic.constant_weights(p2.law, 2.0), 0.3))
    for params, a, t_hi in configs:
        sol = ode.integrate_M(params, a, t_hi, rel_tol=1e-10)
        s_hi = 0.35 / float(np.max(np.abs(sol.values)))
        coarse = ode.pde_residual_G(
            params, a, np.linspace(0.0, t_hi, 41), np.linspace(0.0, s_hi, 41),
            rel_tol=1e-10,
        )
        fine = ode.pde_residual_G(
            params, a, np.linspace(0.0, t_hi, 81), np.linspace(0.0, s_hi, 81),
            rel_tol=1e-10,
        )
        ratios.append(coarse / fine)
    passed = all(3.2 <= r <= 4.8 for r in ratios)
    detail = " ".join(f"ratio{i+1}={r:.3f}" for i, r in enumerate(ratios))
    return CheckResult("c14", "pde-residual-second-order", passed,
                       f"{detail} (want in [3.2, 4.8])")


# ---------------------------------------------------------------------------
# suite orchestration
# ---------------------------------------------------------------------------

SUITES: dict[str, tuple] = {
    "rates": (check_binary_rate, check_mixed_law_rate, check_sandwich,
              check_q_monotonicity, check_log_concavity),
    "oracles": (check_oracle_equivalence, check_binary_exactness,
                check_rate_of_convergence),
    "asymptotics": (check_conditional_trend, check_phi_decay),
    "ode": (check_ode_fidelity, check_pde_refinement),
    "montecarlo": (check_mc_consistency, check_series_identity, check_yule_marginal),
}
SUITE_ORDER = ("rates", "oracles", "asymptotics", "ode", "montecarlo")


def run_suite(suite: str, seed: int = DEFAULT_SEED):
    """Run one suite (or "all"); returns (results, timings by check id)."""
    if suite == "all":
        names = SUITE_ORDER
    elif suite in SUITES:
        names = (suite,)
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITE_ORDER + ('all',)}")
    results: list[CheckResult] = []
    timings: dict[str, float] = {}
    for name in names:
        for fn in SUITES[name]:
            t0 = time.perf_counter()
            res = fn(seed)
            timings[res.cid] = time.perf_counter() - t0
            results.append(res)
    return results, timings


def format_report(results, suite: str, seed: int) -> str:
    """Deterministic pass/fail table; the trailing digest makes rerun
    comparisons (the determinism criterion) a one-line diff."""
    lines = [f"verify suite={suite} seed={seed}"]
    for r in results:
        lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.cid} {r.name}: {r.detail}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"summary passed={n_pass} failed={len(results) - n_pass}")
    digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()
    lines.append(f"report-digest sha256={digest}")
    return "\n".join(lines) + "\n"
