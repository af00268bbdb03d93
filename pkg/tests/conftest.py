def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion, regardless of -q.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {'PASS' if report.passed else 'FAIL'} {name}", flush=True)
