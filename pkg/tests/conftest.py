import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from polarconstruct.channel import canonicalize

# derandomized by default so CI runs are repeatable; "explore" searches wider
settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile(
    "explore",
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

EXTENDED = os.environ.get("POLARCONSTRUCT_EXTENDED", "") not in ("", "0")


def raw_entries(max_size=8, min_size=1):
    """Lists of (p, x) with positive total mass and x anywhere in [0, 1]."""
    entry = st.tuples(
        st.floats(0.0, 1.0, allow_nan=False, allow_subnormal=False),
        st.floats(0.0, 1.0, allow_nan=False, allow_subnormal=False),
    )
    return st.lists(entry, min_size=min_size, max_size=max_size).filter(
        lambda r: sum(p for p, _ in r) > 1e-6
    )


@st.composite
def mixtures(draw, max_size=8, min_size=1):
    return canonicalize(draw(raw_entries(max_size, min_size)))


@st.composite
def tame_mixtures(draw, max_size=8, min_size=1):
    """Crossovers either exactly 0 or at least 1e-3.

    Z is not Lipschitz at 0, so merging near-duplicate crossovers around
    1e-15 moves it by up to ~1e-7; identities checked to 1e-9 need this.
    """
    x = st.one_of(st.just(0.0), st.floats(1e-3, 0.5))
    p = st.floats(1e-6, 1.0)
    raw = draw(st.lists(st.tuples(p, x), min_size=min_size, max_size=max_size))
    return canonicalize(raw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion


def pytest_configure(config):
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num = mark.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = detail or report.longrepr[2]
        item.config._criteria[num] = (status, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(criteria):
        status, detail = criteria[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
