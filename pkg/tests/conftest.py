import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    n, title = crit
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "seconds": 0.0, "ran": False})
    if report.when == "call":
        entry["ran"] = True
        entry["seconds"] += dict(report.user_properties).get("runtime", report.duration)
    if report.failed:
        entry["ok"] = False


def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m is not None:
        item.user_properties.append(("criterion", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = ("PASS" if e["ok"] else "FAIL") if e["ran"] else "SKIP"
        terminalreporter.write_line(f"[{status}] criterion {n}: {e['title']} ({e['seconds']:.2f}s)")
