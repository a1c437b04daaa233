"""Point-cloud classification with Local Spatial Aware layers."""

__version__ = '0.1.0'
