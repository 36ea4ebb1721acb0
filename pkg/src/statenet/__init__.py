"""State-dependent network dynamics driven by a Lagrangian over states and edges."""

__version__ = "0.1.0"
