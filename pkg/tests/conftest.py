import numpy as np
import pytest
from hypothesis import settings
from scipy.stats import unitary_group

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_density(rng, rank=4):
    a = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, n=2):
    return unitary_group.rvs(n, random_state=rng)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def compiled(tmp_path_factory):
    """Compile both canonical programs once per session; returns
    {label: (config, blocks, program, seconds)}."""
    import time

    from dqanneal.harness import ExperimentConfig, compile_or_load

    out = tmp_path_factory.mktemp("compiled")
    res = {}
    for label in ("neg", "pos"):
        cfg = ExperimentConfig(instance=label, output_dir=str(out))
        t0 = time.perf_counter()
        blocks, program, _ = compile_or_load(cfg)
        res[label] = (cfg, blocks, program, time.perf_counter() - t0)
    return res


ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
