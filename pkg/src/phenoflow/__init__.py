"""Conversational agent service for image-based plant phenotyping workflows."""
from __future__ import annotations

__version__ = "0.1.0"
