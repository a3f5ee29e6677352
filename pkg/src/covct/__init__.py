"""CT lung segmentation, micro-CNN classification and selective parallel ScoreCAM."""

__version__ = "0.1.0"
