"""One PASS/FAIL line per acceptance criterion in the terminal summary."""

import pytest

_OUTCOMES = pytest.StashKey[dict]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    store = item.config.stash.setdefault(_OUTCOMES, {})
    store.setdefault(mark.args[0], []).append((item.name, rep.passed, list(item.user_properties)))


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_OUTCOMES, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        runs = store[number]
        ok = all(passed for _, passed, _ in runs)
        details = [f"{k}={v}" for _, _, props in runs for k, v in props]
        failed = [name for name, passed, _ in runs if not passed]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}"
        if details:
            line += ": " + ", ".join(details)
        if failed:
            line += " [failed: " + ", ".join(failed) + "]"
        terminalreporter.write_line(line)
