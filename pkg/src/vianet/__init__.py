"""Integrated vehicular mobility and cellular link simulation."""

__version__ = "0.1.0"

from . import experiment, mobility, radio, roadnet, scenario, sensing, sim, simkernel  # noqa: F401
