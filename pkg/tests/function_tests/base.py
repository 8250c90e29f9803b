"""Base classes for function tests running the packaged command line interface."""

import contextlib
import io
import os
import tempfile
import unittest
from pathlib import Path

from osdmamba import run_application

SLOW_TESTS = os.environ.get("OSDMAMBA_SLOW_TESTS") == "1"


def slow_test(reason: str):
    """Skip a test unless slow tests are enabled with `OSDMAMBA_SLOW_TESTS=1`."""

    return unittest.skipUnless(SLOW_TESTS, f"set OSDMAMBA_SLOW_TESTS=1 to run ({reason})")


class CommandTestBase(unittest.TestCase):
    """Base class for tests executing `osdmamba` commands in process.

    Every test receives a fresh temporary working directory exposed as
    `self.tmp`. Commands run through `run_application`, so exit codes are
    returned instead of terminating the interpreter.
    """

    def setUp(self) -> None:
        """Create a temporary working directory."""

        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self) -> None:
        """Remove the temporary working directory."""

        self._tmp.cleanup()

    def run_command(self, *args: str | Path) -> tuple[int, str]:
        """Run a command with logging silenced and return its exit code and standard output."""

        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(io.StringIO()):
            code = run_application(["--log-level", "ERROR", *map(str, args)])

        return code, stdout.getvalue()

    def train_tiny(self, checkpoint: Path, *extra: str) -> int:
        """Train the tiny preset on two synthetic 32x32 scenes."""

        code, _ = self.run_command(
            "train", "--synthetic", "2", "--size", "32x32", "--preset", "tiny", "--out", checkpoint, *extra
        )
        return code
