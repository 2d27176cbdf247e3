"""The diagnostic battery must pass on a healthy install."""

from cmdet.selftest import run_selftest


class TestSelftest:
    def test_battery_passes(self, capsys):
        result = run_selftest(verbose=True)
        printed = capsys.readouterr().out
        failing = [c.name for c in result.checks if not c.passed]
        assert result.ok, f"failing checks: {failing}\n{printed}"
        assert len(result.checks) == 7
        assert printed.count("PASS") == 7

    def test_quiet_by_default(self, capsys):
        result = run_selftest()
        assert capsys.readouterr().out == ""
        assert result.ok
