import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# acceptance criteria outcomes, printed once at the end of the run
ACCEPTANCE: dict[int, dict] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        rec = ACCEPTANCE[num]
        status = "PASS" if all(rec["parts"].values()) else "FAIL"
        failed = [name for name, ok in rec["parts"].items() if not ok]
        note = f" (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {num} {status}: {rec['title']}{note}")
