import contextlib
import io
import time

import pytest

from adcon.cli import load_paper_scenario, main


@pytest.fixture(scope="session")
def paper_scenario():
    return load_paper_scenario()


@pytest.fixture(scope="session")
def paper_cli_run(tmp_path_factory):
    """One full benchmark run through the CLI, shared across the session."""
    out = tmp_path_factory.mktemp("paper_run")
    buf = io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        code = main(["paper-example", "--out-dir", str(out)])
    wall = time.perf_counter() - t0
    return {"dir": out, "stdout": buf.getvalue(), "exit": code, "wall": wall}
