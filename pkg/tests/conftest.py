def pytest_terminal_summary(terminalreporter):
    from test_acceptance import format_results

    lines = format_results()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
