"""Batch entity resolution for patent assignee names."""

__version__ = "0.1.0"
