"""Tests for dualpath-aec."""
