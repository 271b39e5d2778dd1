"""Exit criteria, one test each.

A criterion line ``[PASS]/[FAIL] <n> <title>: <measured detail>`` is
printed in the terminal summary for every criterion that ran.
"""
import os

import pytest

from nhberry.acceptance import CRITERIA, Context, run_criterion

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

RESULTS = []


@pytest.fixture(scope="module")
def ctx():
    return Context(jobs=int(os.environ.get("NHBERRY_JOBS", os.cpu_count() or 1)))


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, ctx):
    res = run_criterion(number, ctx)
    RESULTS.append(res)
    print(res.line())
    assert res.passed, res.line()
