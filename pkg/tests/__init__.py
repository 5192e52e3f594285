"""Test package for cstdoa."""
