"""Configuration Module"""
from .defaults import CHALLENGE_CONFIG, get_default
__all__ = ["CHALLENGE_CONFIG", "get_default"]
