import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    name = m.group(2).replace("_", " ")
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or report.failed:
        passed = report.passed and _CRITERIA.get(key, (None, True))[1]
        _CRITERIA[key] = (name, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        name, passed, detail = _CRITERIA[key]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {key:2d}  {status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
