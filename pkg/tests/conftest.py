import json

import numpy as np
import pytest

from balcut.synthetic import write_demo_inputs


@pytest.fixture(scope="session")
def demo_inputs(tmp_path_factory):
    """Seeds (3 classes x 8) and 12 backgrounds written once per session."""
    root = tmp_path_factory.mktemp("demo")
    cfg = write_demo_inputs(root, np.random.default_rng(7), n_classes=3,
                            seeds_per_class=8, n_backgrounds=12)
    return root, cfg


@pytest.fixture
def write_config(tmp_path, demo_inputs):
    """Write a config dict (merged over the demo paths) and return its path."""

    def _write(**overrides):
        _, base = demo_inputs
        cfg = json.loads(json.dumps(base))
        cfg["paths"]["output"] = str(tmp_path / "out")
        for k, v in overrides.items():
            if k == "paths":
                cfg["paths"].update(v)
            else:
                cfg[k] = v
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return path

    return _write


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion.

    Use as ``with verdict(n, "summary") as note: ...``; ``note`` collects
    measured values appended to the line.
    """
    import contextlib

    @contextlib.contextmanager
    def _verdict(number: int, title: str):
        notes: list[str] = []
        try:
            yield notes
        except BaseException:
            ACCEPTANCE[number] = f"FAIL  [{number:2d}] {title}  {'; '.join(notes)}"
            print(ACCEPTANCE[number])
            raise
        ACCEPTANCE[number] = f"PASS  [{number:2d}] {title}  {'; '.join(notes)}"
        print(ACCEPTANCE[number])

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
