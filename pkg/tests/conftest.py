import numpy as np
import pytest

from pclmp.config import RunConfig
from pclmp.data import SynthConfig, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synth():
    return SynthConfig(n_identities=20, d_in=16, samples_per_id_per_modality=8,
                       intra_id_spread=0.05, modality_shift=0.3, seed=3)


@pytest.fixture(scope="session")
def small_data(small_synth):
    return generate_synthetic(small_synth)


@pytest.fixture
def small_cfg(small_synth):
    """Quick run: 20 identities, 4x4 batches, short schedule."""
    return RunConfig(seed=5, epochs=4, synth=small_synth, embed_dims=(32, 16)).replace(
        P=4, K=4, M=4, e_cpcl=2, eps=0.5, min_pts=3, lr=3.5e-3)


def random_unit(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ---- acceptance reporting ---------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, title = marker.args
    ok = rep.passed if rep.when == "call" else not rep.failed
    prev = _ACCEPTANCE.get(n, (title, True))
    _ACCEPTANCE[n] = (title, prev[1] and ok)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion n")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
