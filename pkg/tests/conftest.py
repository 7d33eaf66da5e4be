import numpy as np
import pytest

from poststrat_harmonize.domain import ResponsePattern, condition_from_label
from poststrat_harmonize.popgen import PopulationSpec, build_population


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_population():
    spec = PopulationSpec(ResponsePattern.from_rates(0.5), condition_from_label("all_different"),
                          size=20_000, seed=7)
    return build_population(spec)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
