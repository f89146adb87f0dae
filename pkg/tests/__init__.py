"""Test suite for AIPPRO Badging System."""
