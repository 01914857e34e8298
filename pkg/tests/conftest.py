import os
import sys

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, then its sub-checks."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, ok, title, details in sorted(results, key=lambda r: r[0]):
        tr.write_line(f"{'PASS' if ok else 'FAIL'} [{num}] {title}")
    tr.write_line("")
    for num, ok, title, details in sorted(results, key=lambda r: r[0]):
        tr.write_line(f"[{num}] {title}")
        for d in details:
            tr.write_line(f"    {d}")
