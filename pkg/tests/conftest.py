import os

# bit-exactness checks are stated for single-threaded numerics
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import settings  # noqa: E402

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The seeded 16-recording synthetic corpus."""
    from swinbert.data import SynthSpec, generate_synthetic

    out = tmp_path_factory.mktemp("corpus")
    generate_synthetic(SynthSpec(n_per_class=8, seed=7), out)
    return out


@pytest.fixture(scope="session")
def examples(corpus):
    from swinbert.data import load_examples, load_manifest

    return load_examples(load_manifest(corpus / "manifest.csv"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
