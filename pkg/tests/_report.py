"""Collects one verdict line per acceptance criterion."""
RESULTS = {}


def verdict(number, title, checks):
    """Record ``checks`` = [(label, ok, detail), ...] and return overall pass."""
    ok = all(c[1] for c in checks)
    parts = "; ".join(f"{label} {'ok' if good else 'FAILED'} ({detail})" for label, good, detail in checks)
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}: {parts}"
    RESULTS[number] = line
    print(line)
    return ok
