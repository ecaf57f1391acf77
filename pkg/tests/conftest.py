import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from benns import cli
from benns.oracle import OracleConfig, SimulatedNetwork
from benns.predictors import GroundTruthUsage, train_all

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line[1])


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    @contextmanager
    def record(number: int, title: str):
        info = {"detail": ""}
        start = time.perf_counter()
        ok = False
        try:
            yield info
            ok = True
        finally:
            status = "PASS" if ok else "FAIL"
            line = f"criterion {number:>2} {status}: {title} ({info['detail']}; {time.perf_counter() - start:.1f}s)"
            request.config.stash[_ACCEPTANCE].append((number, line))
            print(line)

    return record


@pytest.fixture(scope="session")
def trained():
    """(profiles, predictor set) for seed 0."""
    return train_all(0)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Profiles, predictors, 220-embedding dataset and approximator in one output directory."""
    out = tmp_path_factory.mktemp("pipeline")
    start = time.perf_counter()
    cli.cmd_profile(out, 0)
    cli.cmd_train_predictors(out, 0)
    oracle = SimulatedNetwork(GroundTruthUsage(), OracleConfig(seed=0))
    gen = cli.cmd_gen_data(out, 0, evaluator=oracle)
    approx, report = cli.cmd_train_surrogate(out, 0)
    return {
        "out": Path(out),
        "oracle": oracle,
        "gen": gen,
        "approximator": approx,
        "report": report,
        "elapsed_s": time.perf_counter() - start,
    }
