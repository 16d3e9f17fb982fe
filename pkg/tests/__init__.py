"""Tests for Moniker."""
