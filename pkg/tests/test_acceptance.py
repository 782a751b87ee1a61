"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with the measured values and the
tolerance it was judged against, then asserts both the verdict and the time
budget.  The lines bypass output capture, so they also appear in a plain
``pytest -v`` log.
"""
import pytest

from fracstrat import experiments as ex


@pytest.fixture(scope="module")
def corpus():
    return ex.build_corpus()


@pytest.fixture
def show(capsys):
    def emit(text):
        with capsys.disabled():
            print("\n" + text, flush=True)
    return emit


def _run(show, criterion, *args):
    res = ex.ALL_CHECKS[criterion](*args)
    show("\n".join([res.line()] + ["    note: " + n for n in res.notes]))
    assert res.criterion == criterion
    assert res.passed, res.summary()
    assert res.seconds <= ex.BUDGETS[criterion], f"{res.seconds:.1f} s over budget {ex.BUDGETS[criterion]} s"
    return res


def test_criterion_01_exact_algebra(show):
    res = _run(show, 1)
    assert res.measured["failures"] == 0


def test_criterion_02_closed_form_recovery(show):
    _run(show, 2)


def test_criterion_03_symbol_and_routes(show):
    _run(show, 3)


def test_criterion_04_rigidity(show):
    _run(show, 4)


def test_criterion_05_monotonicity(show, corpus):
    _run(show, 5, corpus)


def test_criterion_06_doubling_and_identity(show):
    _run(show, 6)


def test_criterion_07_pigeonhole(show):
    _run(show, 7)


def test_criterion_08_covering(show):
    _run(show, 8)


def test_criterion_09_dimensions(show):
    _run(show, 9)


def test_criterion_10_nodal_measure(show):
    _run(show, 10)


def test_criterion_11_critical_stability(show):
    _run(show, 11)


def test_criterion_12_screens(show, corpus):
    _run(show, 12, corpus)
