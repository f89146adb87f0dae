"""Integration tests with test database."""
