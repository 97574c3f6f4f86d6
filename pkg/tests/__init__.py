"""Tests for fetchworld."""
