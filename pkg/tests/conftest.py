import numpy as np
import pytest

from salbench import harness
from salbench.derive import SgdConfig, optimize_sim_map


def random_density(rng, shape, concentration=1.0):
    d = rng.gamma(concentration, size=shape)
    return d / d.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth():
    """Synthetic 64x64 density, its KDE centerbias and the default blur."""
    density = harness.synthetic_density()
    return {
        "density": density,
        "centerbias": harness.synthetic_centerbias(density.shape),
        "sigma": harness.default_sigma(density.shape),
    }


@pytest.fixture(scope="session")
def sim_results(synth):
    """SIM optimizations on the synthetic density, computed once per session."""
    cache = {}

    def get(n_fix):
        if n_fix not in cache:
            cache[n_fix] = optimize_sim_map(synth["density"], synth["sigma"], n_fix, SgdConfig())
        return cache[n_fix]

    return get


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; returns ``ok``."""

    def record(label, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}: {title}"
        if detail:
            line += f" | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "property: hypothesis-driven invariant check")


def pytest_collection_modifyitems(items):
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker(pytest.mark.property)
