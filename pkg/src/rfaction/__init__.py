"""Action detection from synthetic RF heatmaps through 3D skeletons."""

__version__ = "0.1.0"
