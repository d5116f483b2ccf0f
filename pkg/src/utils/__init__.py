"""Utilities Module"""
from .logging_config import setup_logging
from .atomic import atomic_write
__all__ = ["setup_logging", "atomic_write"]
