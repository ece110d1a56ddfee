"""Numerical checks for expander graphs, Lipschitz embeddings, Kantorovich-Rubinstein
transport, group displacement bounds and coarse obstructions to embedding in Z^2."""
from . import cayley, coarse, embed, graphs, spectral, transport

__all__ = ["cayley", "coarse", "embed", "graphs", "spectral", "transport"]
__version__ = "0.1.0"
