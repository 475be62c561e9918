"""Reference training harness for joint-trace segmentation.

Consumes the generator toolkit's JSON Lines experiment plans and PNG
image/mask pairs (joint = 0, background = 255) purely through the file
formats; no code dependency on the generator package.
"""

__version__ = "0.1.0"
