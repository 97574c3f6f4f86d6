"""
The fetchworld character-control sandbox.

For more details about this package, please refer to the documentation at
https://github.com/fetchworld/fetchworld
"""
from .const import VERSION

__version__ = VERSION
