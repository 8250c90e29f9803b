from unittest import TestCase

from osdmamba.convssm import blelloch_scan


class TestBlellochScan(TestCase):
    """Unit tests for the `blelloch_scan` function."""

    def test_inclusive_prefix_sums(self) -> None:
        """Verify integer addition yields the running sums."""

        self.assertEqual([1, 3, 6, 10, 15], blelloch_scan([1, 2, 3, 4, 5], lambda a, b: a + b, 0))

    def test_preserves_operand_order(self) -> None:
        """Verify a non-commutative operator is applied earlier-first."""

        prefixes = blelloch_scan(list("abcdefg"), lambda a, b: a + b, "")
        self.assertEqual(["a", "ab", "abc", "abcd", "abcde", "abcdef", "abcdefg"], prefixes)

    def test_threaded(self) -> None:
        """Verify a threaded scan matches the serial one."""

        elements = list("abcdefghijk")
        self.assertEqual(
            blelloch_scan(elements, lambda a, b: a + b, ""),
            blelloch_scan(elements, lambda a, b: a + b, "", workers=3),
        )

    def test_empty(self) -> None:
        """Verify an empty sequence has no prefixes."""

        self.assertEqual([], blelloch_scan([], lambda a, b: a + b, 0))
