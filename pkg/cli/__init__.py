"""
CLI Module - config-driven pipeline commands
"""

from .config import RunConfig, TaskConfig, resolve_config, config_hash, verify_output
from .main import main, build_parser

__all__ = [
    'RunConfig',
    'TaskConfig',
    'resolve_config',
    'config_hash',
    'verify_output',
    'main',
    'build_parser'
]
