import time

SUITE_BUDGET_S = 300.0
_start = {}


def pytest_sessionstart(session):
    _start["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # the wall-time budget can only be judged once every test has run
    if "t" not in _start or config.option.collectonly:
        return
    elapsed = time.perf_counter() - _start["t"]
    ok = elapsed < SUITE_BUDGET_S
    terminalreporter.write_line(
        f"[acceptance 7b] full suite wall time {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s): "
        f"{'PASS' if ok else 'FAIL'}")
    if not ok:
        terminalreporter._session.exitstatus = 1
