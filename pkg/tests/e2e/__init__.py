"""End-to-end tests (future Playwright setup)."""
