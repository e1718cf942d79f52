import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_criteria: dict[str, dict] = {}


def pytest_runtest_logreport(report):
    if "test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    entry = _criteria.setdefault(name, {"outcome": "passed", "checks": []})
    if report.failed:
        entry["outcome"] = "failed"
    elif report.skipped and entry["outcome"] == "passed":
        entry["outcome"] = "skipped"
    if report.when == "call":
        entry["checks"] = [v for k, v in report.user_properties if k == "check"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_criteria):
        entry = _criteria[name]
        _, _, number, *words = name.split("_")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[entry["outcome"]]
        tr.write_line(f"criterion {int(number):2d} {status}  {' '.join(words)}")
        for check, ok, detail in entry["checks"]:
            mark = "ok " if ok else "BAD"
            tr.write_line(f"      {mark} {check}" + (f"  [{detail}]" if detail else ""))
