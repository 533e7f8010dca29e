"""Mixed quantum-classical fluid simulator with invariant diagnostics and verification suites."""

__version__ = "0.1.0"
