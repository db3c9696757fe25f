import pytest

from hydrotrain.benchmark import benchmark_setup, default_models
from hydrotrain.validation import compare_methods

AMBIENTS = (-5.0, 20.0, 35.0)
ACCEPTANCE_LINES: list[str] = []


class BenchmarkRuns:
    """Lazily solved and simulated benchmark scenarios, shared by the session."""

    def __init__(self):
        self._cache = {}
        self.models = default_models()

    def __call__(self, ambient: float):
        if ambient not in self._cache:
            setup = benchmark_setup(ambient)
            report, conc, seq = compare_methods(setup.route, setup.params, setup.scenario,
                                                setup.surrogates, self.models)
            self._cache[ambient] = (setup, report, conc, seq)
        return self._cache[ambient]


@pytest.fixture(scope="session")
def benchmark_runs():
    return BenchmarkRuns()


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
