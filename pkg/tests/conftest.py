def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line acceptance verdicts after the test run.

    The acceptance tests also print these lines, but pytest captures that
    output; repeating them here keeps them visible in any run mode.
    """
    try:
        from test_acceptance import summary_lines
    except ImportError:
        return
    if summary_lines:
        terminalreporter.section("acceptance criteria")
        for line in summary_lines:
            terminalreporter.write_line(line)
