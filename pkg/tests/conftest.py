"""Collects the acceptance verdicts and prints them in the terminal summary."""

ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), title, detail)
    print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
