"""Acceptance gate: every criterion at its stated tolerance.

The checks (tolerances included) live in rgw.verify and are shared with
the `rgw verify` CLI; this module runs the full suite once through the
CLI, asserts each criterion, and prints one pass/fail line per criterion.
The determinism criterion reruns the whole suite and compares bytes.
"""
import contextlib
import io
import re
import sys

import pytest

from rgw import cli

SEED = 42


def _run_verify_all() -> tuple[int, str]:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli.main(["verify", "--suite", "all", "--seed", str(SEED)])
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def report():
    code, text = _run_verify_all()
    results = {}
    for line in text.splitlines():
        m = re.match(r"^(PASS|FAIL) (\S+) (\S+): (.*)$", line)
        if m:
            results[m.group(2)] = (m.group(1) == "PASS", m.group(4))
    return {"code": code, "text": text, "results": results}


def _criterion(report, cid, label):
    assert cid in report["results"], f"{cid} missing from verify report"
    passed, detail = report["results"][cid]
    sys.__stdout__.write(f"{'PASS' if passed else 'FAIL'} {cid} {label}: {detail}\n")
    assert passed, f"{cid} {label}: {detail}"


def test_c01_binary_rate_closed_form(report):
    # rel err <= 1e-10 on the 9x9 (p,q) grid, runtime < 2 s
    _criterion(report, "c01", "binary closed-form rate")


def test_c02_mixed_law_rate(report):
    # within 1e-5 of the re-derived antiderivative value 1.682949...
    _criterion(report, "c02", "mixed-law rate vs antiderivative")


def test_c03_sandwich_strict(report):
    # strict lower/upper bounds, 200 randomized (law, q), zero violations
    _criterion(report, "c03", "bounds sandwich")


def test_c04_monotone_in_q(report):
    # nondecreasing on the q-grid (ties 1e-12); endpoint limits within 1%
    _criterion(report, "c04", "rate monotone in q with limits")


def test_c05_log_concavity(report):
    # mixture rate >= geometric mean - 1e-12 on 100 shared-k* triples
    _criterion(report, "c05", "rate log-concavity")


def test_c06_oracle_equivalence(report):
    # spine vs urn relative difference <= 1e-10, 25 random configs, n <= 25
    _criterion(report, "c06", "spine/urn oracle equivalence")


def test_c07_binary_exactness(report):
    # m^-n E[Z(n)] = p/(q+(1-q)p) to 1e-12 relative, n <= 30
    _criterion(report, "c07", "binary scaled mean exact")


def test_c08_error_rate(report):
    # e64/e32 within [0.7, 1.4] * 2^(-2/3), runtime < 5 s
    _criterion(report, "c08", "mean error power-law rate")


def test_c09_conditional_trend(report):
    # |r64/target - 1| <= 0.25, improving from n=16; gamma stable to 1e-6,
    # binary gamma = 1 within 1e-8
    _criterion(report, "c09", "conditional mean trend")


def test_c10_monte_carlo_consistency(report):
    # spine (1e6 replicas, n=20) and population (1e5, n=10) within 4 sigma
    # of the DP on the fixed 6-config panel, runtime < 60 s
    _criterion(report, "c10", "Monte Carlo vs DP panel")


def test_c11_series_identity(report):
    # typed-population functional vs generation series within 3 sigma
    _criterion(report, "c11", "series identity")


def test_c12_yule_marginal(report):
    # chi-square of the population size against Geometric(e^-1) at 0.01
    _criterion(report, "c12", "population-size marginal")


def test_c13_ode_fidelity(report):
    # ODE vs closed form <= 1e-6; blow-up within 2% of the predicted time;
    # constant-weight explosion time to 1e-10
    _criterion(report, "c13", "ODE fidelity")


def test_c14_pde_refinement(report):
    # residual refinement factor in [3.2, 4.8] on two configurations
    _criterion(report, "c14", "PDE residual second order")


def test_c15_determinism(report):
    # two full runs of `verify --suite all --seed 42` are byte-identical
    code2, text2 = _run_verify_all()
    identical = text2 == report["text"] and code2 == report["code"]
    digest = report["text"].strip().splitlines()[-1]
    sys.__stdout__.write(
        f"{'PASS' if identical else 'FAIL'} c15 determinism: "
        f"two byte-identical reports ({digest})\n"
    )
    assert identical


def test_all_criteria_reported(report):
    assert report["code"] == 0, "verify --suite all failed"
    expected = {f"c{i:02d}" for i in range(1, 15)}
    assert expected.issubset(report["results"].keys())
