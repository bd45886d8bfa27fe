import os
import subprocess
import sys
import time

import pytest

ACCEPTANCE = {}


def record(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (bool(ok), detail)
    return ok


@pytest.fixture(scope="session")
def baseline_run():
    from esird import CostsPath, ShootingConfig, default_params, shoot
    p = default_params()
    t0 = time.perf_counter()
    traj = shoot(p.initial_state, ShootingConfig(), CostsPath(p.costs), p)
    return traj, time.perf_counter() - t0


def _run_sweep(out, jobs):
    env = {k: v for k, v in os.environ.items() if k != "ESIRD_WORKERS"}
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "esird.cli", "sweep", "table3", "-o", str(out), "-j", str(jobs)],
                          capture_output=True, text=True, env=env)
    return out, proc, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sweep_serial(tmp_path_factory):
    return _run_sweep(tmp_path_factory.mktemp("sweep_j1"), 1)


@pytest.fixture(scope="session")
def sweep_parallel(tmp_path_factory):
    return _run_sweep(tmp_path_factory.mktemp("sweep_j8"), 8)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
