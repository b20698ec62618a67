"""Balanced cut-and-paste generation of object-detection training images.

Foreground seed objects are diversified with lighting styles, backgrounds are
simplified, instances are pasted with occlusion-aware placement, and the
foreground/background domain gaps are measured with an H-divergence meter.
"""

__version__ = "0.1.0"
