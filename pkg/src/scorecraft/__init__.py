"""Hierarchical image-to-3D lifting with analytic score priors."""

__version__ = "0.1.0"
