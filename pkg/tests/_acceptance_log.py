"""Collects one verdict line per acceptance criterion."""

RESULTS = {}


def record(number, title, passed, detail=""):
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    RESULTS[number] = line
    print(line)
    return passed


def summary_lines():
    return [RESULTS[k] for k in sorted(RESULTS)]
