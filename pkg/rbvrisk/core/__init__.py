"""Shared infrastructure: settings, logging setup and exceptions."""
