"""Builtin experiments."""
