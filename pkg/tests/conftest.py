import numpy as np
import pytest

from branchkit import ExplicitLaw, LinearFractionalLaw, TailPowerLaw


def reference_laws():
    """One law per regime plus linear-fractional variants."""
    return {
        "explicit-super": ExplicitLaw([0.2, 0.3, 0.5]),
        "explicit-sub": ExplicitLaw([0.5, 0.3, 0.2], lam=1.5),
        "lf-super": LinearFractionalLaw(0.25, 0.25),
        "lf-ext-sub": LinearFractionalLaw(0.75, 0.5),
        "lf-critical": LinearFractionalLaw(0.5, 0.5),
        "explicit-critical": ExplicitLaw([0.3, 0.45, 0.2, 0.05], lam=0.7),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(params=sorted(reference_laws()))
def ref_law(request):
    return reference_laws()[request.param]


@pytest.fixture
def super_law():
    return ExplicitLaw([0.2, 0.3, 0.5])


@pytest.fixture
def lf_sub():
    return LinearFractionalLaw(0.75, 0.5)


@pytest.fixture
def lf_crit():
    return LinearFractionalLaw(0.5, 0.5)


@pytest.fixture
def tail_half():
    return TailPowerLaw(0.5, 0.5, cutoff=2048)


# acceptance criteria register their verdicts here; the summary hook prints them
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
