"""Scale-aware quality metrics for dimensionality-reduction embeddings."""

__version__ = "0.1.0"
