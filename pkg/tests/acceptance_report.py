"""Collects one PASS/FAIL line per acceptance criterion for the run summary."""

RESULTS = {}


def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    if number == 12:
        status = "INFO"
    line = f"criterion {number:2d} [{status}] {title}"
    if detail:
        line += f": {detail}"
    RESULTS[number] = line
    print(line)
    return ok
