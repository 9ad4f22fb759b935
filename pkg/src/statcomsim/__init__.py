"""Time-domain STATCOM / induction-motor bus simulator."""
__version__ = "0.1.0"
