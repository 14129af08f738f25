"""
Influence Abstraction Toolkit - Domains Package
Built-in model generators
"""

from .base import Instance
from .chain import ChainParams, gen_chain
from .housesearch import HouseSearchParams, gen_housesearch
from .planetary import PlanetaryParams, gen_planetary
from .random_model import RandomParams, gen_random, shrink_dset

__all__ = ['Instance', 'ChainParams', 'gen_chain', 'HouseSearchParams', 'gen_housesearch',
           'PlanetaryParams', 'gen_planetary', 'RandomParams', 'gen_random', 'shrink_dset']
