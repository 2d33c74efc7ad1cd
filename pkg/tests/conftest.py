import pytest

CRITERIA = {
    1: "square-root roundtrip",
    2: "stationary decomposition",
    3: "Stein null",
    4: "modulus dominance",
    5: "Doob check",
    6: "variance identity",
    7: "projection-exact kernel",
    8: "bound dominance, scans",
    9: "structural zeros",
    10: "rate order",
    11: "functional certificates",
    12: "bump behavior",
    13: "determinism across thread counts",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    if hasattr(rep, "wasxfail"):
        state = "xfail" if rep.skipped else "xpass"
    else:
        state = rep.outcome
    _outcomes.setdefault(mark.args[0], []).append((item.name, state))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        got = _outcomes.get(n)
        if not got:
            tr.write_line(f"criterion {n:>2} ({title}): not run")
            continue
        ok = all(s == "passed" for _, s in got)
        line = f"criterion {n:>2} ({title}): {'PASS' if ok else 'FAIL'}"
        bad = [f"{name} {s}" for name, s in got if s != "passed"]
        if bad:
            line += " [" + "; ".join(bad) + "]"
        tr.write_line(line)
