"""Serialization helpers shared by the command handlers."""
