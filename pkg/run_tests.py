"""
Run all the tests.

This is the same as doing this on the command line:

  py.test --cov spherebraid

The full acceptance suite is slow; run it with ``spherebraid verify``.
"""
import pytest

pytest.main(["--cov", "spherebraid"])
