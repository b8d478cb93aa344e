"""Shared desk-profile benchmark runs.

Each run is computed at most once per session and only when a test asks
for it; the two Gaussian runs share one set of trained flows, since the
training phase does not depend on how observations are generated.
"""

import pytest

from rnpe.harness import make_config, run_benchmark
from rnpe.harness.benchmark import build_task, obtain_artifacts


@pytest.fixture(scope="session")
def desk_root(tmp_path_factory):
    return tmp_path_factory.mktemp("desk")


@pytest.fixture(scope="session")
def gaussian_artifacts(desk_root):
    cfg = make_config("desk", task="gaussian", methods=("NPE", "RNPE"))
    art, _ = obtain_artifacts(cfg, build_task(cfg), desk_root / "gaussian_shared")
    return art


def _run(desk_root, name, artifacts=None, **overrides):
    cfg = make_config("desk", **overrides)
    table, records = run_benchmark(cfg, desk_root / name, artifacts=artifacts)
    return {"config": cfg, "table": table, "records": records, "dir": desk_root / name}


@pytest.fixture(scope="session")
def gaussian_misspecified(desk_root, gaussian_artifacts):
    return _run(desk_root, "gaussian_misspecified", gaussian_artifacts, task="gaussian",
                methods=("NPE", "RNPE"), misspecified=True, c2st=True, c2st_pairs=50)


@pytest.fixture(scope="session")
def gaussian_well_specified(desk_root, gaussian_artifacts):
    return _run(desk_root, "gaussian_well_specified", gaussian_artifacts, task="gaussian",
                methods=("NPE", "RNPE"), misspecified=False)


@pytest.fixture(scope="session")
def sir_misspecified(desk_root):
    return _run(desk_root, "sir", task="sir", methods=("NPE", "RNPE"), pairs=50)


@pytest.fixture(scope="session")
def cs_misspecified(desk_root):
    return _run(desk_root, "cs", task="cs", methods=("NPE", "RNPE"), pairs=50)


# ------------------------------------------------------ acceptance reporting

CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a criterion's outcome; the terminal summary prints one line per criterion."""

    def record(number: int, ok: bool, detail: str) -> None:
        CRITERIA[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
