import math

import numpy as np
import pytest

from coupled_cfmm import coupled_market as cm
from coupled_cfmm import verification_oracle as vo
from coupled_cfmm.cfmm_core import marginal_exec_price, swap_exact_in
from coupled_cfmm.coupled_market import CASE_STUDY

GRID = np.linspace(0, 2, 100)


def test_fd_derivative_polynomials():
    sq = lambda t: t * t  # noqa: E731
    assert vo.fd_derivative(sq, 3.0) == pytest.approx(6.0, abs=1e-9)
    assert vo.fd_derivative(sq, 3.0, order=2) == pytest.approx(2.0, abs=1e-7)
    assert vo.fd_derivative(lambda t: t**3, 0.0, one_sided=True) == pytest.approx(0.0, abs=1e-12)


def test_fd_derivative_matches_marginal_price():
    pool = CASE_STUDY.pool1
    for d in (1e3, 1e5, 1e7):
        fd = vo.fd_derivative(lambda v: swap_exact_in(pool, v).amount_out, d)
        assert fd == pytest.approx(marginal_exec_price(pool, d), rel=1e-7)


def test_fd_derivative_errors():
    with pytest.raises(ValueError):
        vo.fd_derivative(math.sin, 0.0, order=3)
    with pytest.raises(vo.OracleError):
        vo.fd_derivative(lambda t: math.inf, 1.0)


def test_sequential_oracle():
    out, post = vo.sequential_swap_oracle(CASE_STUDY, 0.0, "purchase")
    assert out == 0.0 and post == CASE_STUDY
    for amount in (1e2, 1e5, 1e8):
        assert vo.sequential_swap_oracle(CASE_STUDY, amount, "purchase")[0] == pytest.approx(
            cm.purchase_compound(CASE_STUDY, amount)[0], rel=1e-12
        )
        assert vo.sequential_swap_oracle(CASE_STUDY, amount, "liquidation")[0] == pytest.approx(
            cm.liquidate_compound(CASE_STUDY, amount)[0], rel=1e-12
        )
    with pytest.raises(ValueError):
        vo.sequential_swap_oracle(CASE_STUDY, 1.0, "sideways")


def test_random_states_deterministic():
    a, b = vo.random_states(20, 7), vo.random_states(20, 7)
    assert a == b
    assert a != vo.random_states(20, 8)
    assert all(1e3 <= s.x <= 1e12 and s.gamma1 in vo.GAMMAS for s in a)


def test_rel_error():
    assert vo.rel_error(1.0, 1.0) == 0.0
    assert vo.rel_error(1.1, 1.0) == pytest.approx(0.1)
    assert vo.rel_error(1e-20, 0.0, floor=1.0) == 1e-20


def test_run_suite_case_study_all_pass():
    reports = vo.run_suite(CASE_STUDY, GRID)
    failed = [r.name for r in reports if not r.passed]
    assert failed == []
    names = [r.name for r in reports]
    assert names == sorted(names)
    assert len(names) == len(set(names))


def test_run_suite_empty_grid():
    assert vo.run_suite(CASE_STUDY, []) == []


def test_run_suite_deterministic():
    a = [r.as_dict() for r in vo.run_suite(CASE_STUDY, GRID[:10], random_cases=1000)]
    b = [r.as_dict() for r in vo.run_suite(CASE_STUDY, GRID[:10], random_cases=1000)]
    assert a == b


def test_corrupted_closed_form_is_caught(monkeypatch):
    monkeypatch.setattr(cm, "cpmm_value_discrepancy_purchase", lambda s, m: 1.01 * m)
    reports = {r.name: r for r in vo.run_suite(CASE_STUDY, GRID[:10], random_cases=10)}
    assert not reports["value_purchase_closed_form"].passed


def test_step_halving_ratios_cubic():
    for direction in ("purchase", "liquidation"):
        for mu in vo.EXPANSION_DRIFTS:
            for r in vo.step_halving_ratios(CASE_STUDY, mu, direction):
                assert 6 <= r <= 10


def test_alternative_forms_diagnostics_are_informational():
    diag = {r.name: r for r in vo.alternative_form_diagnostics(CASE_STUDY, GRID)}
    # the alternative purchase transmission agrees; the alternative drift uses the wrong reserve
    assert diag["alt_transmission_purchase"].passed
    assert not diag["alt_cpmm_drift"].passed
    assert vo.alternative_form_diagnostics(CASE_STUDY, []) == []
