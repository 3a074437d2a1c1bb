"""Test suite for the fxtsp package."""
