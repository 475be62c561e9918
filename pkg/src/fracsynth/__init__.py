"""Deterministic synthesis and analysis of jointed-rock scene imagery.

Subpackages cover the full pipeline: block-shape sampling, stochastic
fracture network generation, slope/box scene construction, trace
extraction and styling, ray-cast rendering of image/mask pairs, dataset
manifests and experiment plans, and segmentation metrics.
"""

__version__ = "0.1.0"
