import sys

import pytest

from radfit.preprocess import preprocess_records
from radfit.synthgen import SynthManifest, generate_corpus


@pytest.fixture(scope="session")
def default_corpus():
    return generate_corpus(SynthManifest())


@pytest.fixture(scope="session")
def default_preprocessed(default_corpus):
    return preprocess_records(default_corpus[0])


@pytest.fixture(scope="session")
def small_corpus():
    """Four manufacturers with six devices each, no outliers."""
    m = SynthManifest(n_manufacturers=4, devices_per_manufacturer=6, outlier_rates={}, seed=7)
    return generate_corpus(m)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
