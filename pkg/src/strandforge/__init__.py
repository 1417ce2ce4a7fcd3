"""strandforge: strand-level assembly corpora and execution-aware encoders."""

__version__ = "0.1.0"
