"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 6 to 8 are Monte-Carlo runs (minutes); they are marked ``slow`` but run in the
default ``pytest`` invocation. Deselect with ``-m "not slow"``.
"""
import pytest

from forge import checks


def report(capsys, result):
    with capsys.disabled():
        print(f"\n[acceptance] {result.line()}")
    assert result.passed, result.detail


def test_criterion_1_spectra(capsys):
    report(capsys, checks.check_spectra())


def test_criterion_2_bangbang_rates(capsys):
    report(capsys, checks.check_bb_rates())


def test_criterion_3_iso12_direct(capsys):
    report(capsys, checks.check_iso12())


def test_criterion_4_gamma_sign_structure(capsys):
    report(capsys, checks.check_gamma_t())


def test_criterion_5_structural_invariants(capsys):
    report(capsys, checks.check_structure())


@pytest.mark.slow
def test_criterion_6_monte_carlo_vs_lindblad(capsys):
    report(capsys, checks.check_mc_vs_lindblad())


@pytest.mark.slow
def test_criterion_7_white_noise(capsys):
    report(capsys, checks.check_white())


@pytest.mark.slow
def test_criterion_8_eps_scaling(capsys):
    report(capsys, checks.check_eps_scaling())


def test_criterion_9_effectiveness(capsys):
    report(capsys, checks.check_effectiveness())
