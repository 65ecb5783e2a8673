"""DPRP toolkit: differentially private random projections and sign sketches."""

__version__ = "0.1.0"
