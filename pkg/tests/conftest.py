"""Shared pytest wiring: prints one PASS/FAIL line per acceptance criterion."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid or "::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            # a test that failed anywhere (setup, call, teardown) counts as failed
            if status == "passed" and getattr(report, "when", "call") != "call":
                continue
            if outcomes.get(name) != "failed":
                outcomes[name] = "failed" if status in ("failed", "error") else "passed"
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(outcomes):
        verdict = "PASS" if outcomes[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict} {name}")
