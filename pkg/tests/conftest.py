import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from branchlab.kernel import Config, Dispersal, ExplicitLaw, GeometricLaw, Kernel, MultinomialLaw, SiteSpace

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def single_geometric(m, boundary="kill"):
    return Kernel(SiteSpace(("a",)), (GeometricLaw(m, Dispersal.from_row([1.0])),), boundary)


def explicit_kernel(laws, labels=None, boundary="kill"):
    """``laws`` is a list of ``[({site: count}, p), ...]``, one list per site."""
    n = len(laws)
    space = SiteSpace(tuple(labels) if labels else tuple(str(i) for i in range(n)))
    built = tuple(ExplicitLaw(tuple((Config.from_counts(c), p) for c, p in law)) for law in laws)
    return Kernel(space, built, boundary)


@pytest.fixture
def geo2():
    return single_geometric(2.0)


@st.composite
def kernels(draw, max_sites=3, max_total=4, kinds=("explicit", "multinomial", "geometric")):
    """Random valid kernels of every law type, with some mass leaving the truncation."""
    n = draw(st.integers(1, max_sites))
    seed = draw(st.integers(0, 2**32 - 1))
    boundary = draw(st.sampled_from(["kill", "survive_outside"]))
    rng = np.random.default_rng(seed)
    laws = []
    for _ in range(n):
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "explicit":
            k = int(rng.integers(1, 5))
            cfgs = {}
            for w in rng.dirichlet(np.ones(k)):
                c = Config.from_counts(rng.integers(0, 3, size=n), int(rng.integers(0, 2)))
                cfgs[c] = cfgs.get(c, 0.0) + float(w)
            total = math.fsum(cfgs.values())
            laws.append(ExplicitLaw(tuple((c, w / total) for c, w in cfgs.items())))
        else:
            row = rng.dirichlet(np.ones(n + 1))
            disp = Dispersal.from_row(row[:n], row[n])
            if kind == "multinomial":
                pmf = rng.dirichlet(np.ones(int(rng.integers(1, max_total + 1)) + 1))
                laws.append(MultinomialLaw(tuple(enumerate(pmf)), disp))
            else:
                laws.append(GeometricLaw(float(rng.uniform(0.1, 4.0)), disp))
    return Kernel(SiteSpace(tuple(f"s{i}" for i in range(n))), tuple(laws), boundary)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
