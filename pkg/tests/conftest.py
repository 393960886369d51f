import numpy as np
import pytest

from conjlab.conjugacy import build_conjugacy
from conjlab.families import BERNOULLI_2D, bernoulli_cocycle, scalar_benchmark
from conjlab.hypotheses import SamplingSpec
from conjlab.rds.adapted_norm import adapted_random_norm
from conjlab.rds.mds import make_shift_mds
from conjlab.rds.spectrum import lyapunov_spectrum


@pytest.fixture(scope="session")
def scalar_solution():
    """x -> 0.5 x + 0.1 sin x on [0, 100] with certified constants."""
    sys = scalar_benchmark(100)
    return build_conjugacy(sys, domain=SamplingSpec(radius=10.0, seed=0))


@pytest.fixture(scope="session")
def short_scalar_solution():
    sys = scalar_benchmark(10)
    return build_conjugacy(sys, domain=SamplingSpec(radius=10.0, seed=0))


@pytest.fixture(scope="session")
def bernoulli_mds():
    return make_shift_mds("bernoulli", 7)


@pytest.fixture(scope="session")
def bernoulli_2d(bernoulli_mds):
    """Spectrum and adapted norm of the 2-D Bernoulli benchmark cocycle."""
    c = bernoulli_cocycle(BERNOULLI_2D)
    rep = lyapunov_spectrum(c, bernoulli_mds, 10_000, 64)
    norm = adapted_random_norm(c, rep, 0, 64)
    return c, rep, norm


@pytest.fixture(scope="session")
def iid_scalar():
    """Scalar i.i.d. cocycle a(omega) in {2, 1/8}, equiprobable."""
    mds = make_shift_mds("bernoulli", 42)
    c = bernoulli_cocycle([2.0, 0.125])
    rep = lyapunov_spectrum(c, mds, 10_000, 64)
    return c, mds, rep


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def contracting_scalar():
    """Scalar i.i.d. cocycle a(omega) in {0.5, 0.4} with its adapted norm."""
    mds = make_shift_mds("bernoulli", 3)
    c = bernoulli_cocycle([0.5, 0.4])
    rep = lyapunov_spectrum(c, mds, 10_000, 64)
    return c, mds, adapted_random_norm(c, rep, 0, 64)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``criterion(label, passed, detail)`` records one PASS/FAIL line for the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(label, passed, detail=""):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
