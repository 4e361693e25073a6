"""Monte Carlo toolkit for branching interlacements on Z^d."""
from __future__ import annotations

__version__ = "0.1.0"
