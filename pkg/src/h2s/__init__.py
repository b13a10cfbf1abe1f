"""h2s - hypersphere summaries of labeled high-dimensional data."""

__version__ = "0.1.0"
