"""Verdict lines of the acceptance suite, echoed in the pytest summary."""

VERDICTS = []


def verdict(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    VERDICTS.append(line)
    print(line)
    return ok
