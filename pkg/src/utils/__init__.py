"""
Utilities Module

Helper functions and shared utilities for funkrad.
"""

from .helpers import config_echo, format_float, format_table, loglog_slope, parse_key_values

__all__ = ["config_echo", "format_float", "format_table", "loglog_slope", "parse_key_values"]
