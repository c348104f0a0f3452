"""Reference backend service for the verilabel verification/detection protocol."""

__version__ = "0.1.0"
