"""Acceptance criteria, one test per criterion at the reference sample sizes.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
metrics and the tolerance applied.  Criteria 9 and 13 fail for reasons
analysed in the README (their lines carry the explanation).
"""
import pytest

from chaoscalc.acceptance import CRITERIA, format_line, run_criterion

LEVEL = "full"


@pytest.fixture(autouse=True)
def _no_corruption(monkeypatch):
    monkeypatch.delenv("CHAOSCALC_SELFTEST_CORRUPT", raising=False)


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion_{n:02d}")
def test_criterion(number, capsys):
    res = run_criterion(number, LEVEL)
    line = format_line(res)
    with capsys.disabled():
        print("\n" + line)
    assert res.passed, line
