"""Tests for Giant Atom Designer."""
