"""Second-order methods for F-based self-concordant objectives."""

__version__ = "0.1.0"
