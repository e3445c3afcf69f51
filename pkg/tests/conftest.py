from pathlib import Path

import pytest

import thermistor
from thermistor.config import parse_config

PRESETS = Path(thermistor.__file__).parent / "presets"
PRESET_NAMES = sorted(p.stem for p in PRESETS.glob("*.ini"))


def preset(name):
    return parse_config(PRESETS / f"{name}.ini")


@pytest.fixture(autouse=True)
def _isolated_output(tmp_path, monkeypatch):
    # keep CLI output out of the working tree
    monkeypatch.setenv("THERMISTOR_OUTPUT_DIR", str(tmp_path / "out"))


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict_line():
    """Records one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def emit(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
