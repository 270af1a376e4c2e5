import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import pytest

from xermlab.harness.config import ExperimentConfig

ACCEPTANCE_LINES = []


@pytest.fixture
def small_config(tmp_path):
    """A quick configuration for pipeline tests."""
    return ExperimentConfig(n_head=100, n_test_per_class=40, n_probe_per_class=40,
                            epochs=8, lr_milestones=[5, 7], probe_epochs=5, hidden=8,
                            mu=0.05, seeds=[0], gammas=[0.0, 1.0, 2.0], ws=[0.0, 0.5, 1.0],
                            many_threshold=50, few_threshold=10, out=str(tmp_path / "run"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
