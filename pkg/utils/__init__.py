"""
Utility functions for the simulator.
"""

from .helpers import *

__all__ = ['format_duration', 'db_to_linear', 'linear_to_db', 'parse_value_list']
