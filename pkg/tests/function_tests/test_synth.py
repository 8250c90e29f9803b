"""Function tests for the `synth` command."""

from tests.function_tests.base import CommandTestBase


class TestSynth(CommandTestBase):
    """Function tests for the `synth` command."""

    def test_writes_image_mask_pairs(self) -> None:
        """Verify one image and one mask file are written per scene."""

        code, stdout = self.run_command("synth", "--out", self.tmp / "scenes", "--count", "4", "--size", "32x32")

        self.assertEqual(0, code)
        files = sorted(p.name for p in (self.tmp / "scenes").iterdir())
        self.assertEqual(8, len(files))
        self.assertIn("scene_0000.pgm", files)
        self.assertIn("scene_0000_mask.pgm", files)

        lines = stdout.splitlines()
        self.assertEqual("class,pixels,fraction", lines[0])
        self.assertEqual(6, len(lines))
        self.assertEqual(4 * 32 * 32, sum(int(line.split(",")[1]) for line in lines[1:]))

    def test_deterministic(self) -> None:
        """Verify the same seed writes byte-identical files."""

        for name in ("first", "second"):
            self.run_command("--seed", "11", "synth", "--out", self.tmp / name, "--count", "2", "--size", "32x32")

        for path in (self.tmp / "first").iterdir():
            self.assertEqual(path.read_bytes(), (self.tmp / "second" / path.name).read_bytes())

    def test_zero_count(self) -> None:
        """Verify a zero scene count succeeds without writing files."""

        code, _ = self.run_command("synth", "--out", self.tmp / "scenes", "--count", "0")
        self.assertEqual(0, code)
        self.assertFalse((self.tmp / "scenes").exists())

    def test_negative_count(self) -> None:
        """Verify a negative scene count is a usage error."""

        code, _ = self.run_command("synth", "--out", self.tmp / "scenes", "--count", "-1")
        self.assertEqual(64, code)

    def test_invalid_spill_fraction(self) -> None:
        """Verify a spill fraction outside [0, 1] is a usage error."""

        code, _ = self.run_command("synth", "--out", self.tmp / "scenes", "--spill-frac", "2")
        self.assertEqual(64, code)
