import re

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("quick", max_examples=40, deadline=None)
settings.load_profile("quick")

_CRITERIA = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)([a-z]?)", item.name)
    if m is None or (rep.when != "call" and rep.passed):
        return
    num, part = int(m.group(1)), m.group(2)
    doc = (item.function.__doc__ or "").strip().splitlines()
    entry = _CRITERIA.setdefault(num, {"title": "", "failed": [], "ran": False})
    if doc and (not part or not entry["title"]):
        entry["title"] = doc[0]
    entry["ran"] = True
    if rep.failed:
        entry["failed"].append(f"{num}{part}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        status = "FAIL" if e["failed"] else "PASS"
        extra = f" (failed: {', '.join(sorted(set(e['failed'])))})" if e["failed"] else ""
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {e['title']}{extra}")
