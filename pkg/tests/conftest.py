# (criterion number, PASS/FAIL, detail) rows filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def parse_trace(lines):
    """Split trace lines into (time, kind, burst_id, node, {key: value})."""
    out = []
    for line in lines:
        parts = line.split()
        detail = dict(p.split("=", 1) for p in parts[4:])
        out.append((float(parts[0]), parts[1], int(parts[2]), int(parts[3]), detail))
    return out
