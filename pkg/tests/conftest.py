import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")

    def key(k):
        return (float(str(k).split("-")[0]), str(k))

    for crit in sorted(mod.RESULTS, key=key):
        parts = mod.RESULTS[crit]
        info = isinstance(crit, str)
        status = "INFO" if info else ("PASS" if all(ok for _, ok, _ in parts) else "FAIL")
        detail = "; ".join(f"[{'ok' if ok else 'FAILED'}] {name}: {d}" for name, ok, d in parts)
        tr.write_line(f"AC{crit} {status}: {detail}")
