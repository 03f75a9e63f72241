"""cutcover: a near-linear-work approximate solver for cut covering LPs.

Public entry points:
    held_karp        fractional 2-edge-connectivity bound on a cost graph
    solve_kecss      approximate k-edge-connected spanning subgraph LP
    load_graph       text format parser
"""

__version__ = "0.1.0"

from .graph import Graph, ParseError, ValidationError, load_graph, make_graph

__all__ = [
    "Graph",
    "ParseError",
    "ValidationError",
    "load_graph",
    "make_graph",
    "__version__",
]
