"""Battery characterization, dispatch optimization and reliability analysis."""
__version__ = "0.1.0"
