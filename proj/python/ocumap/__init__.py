"""Semantic registration of eye images.

Inverse warping, semantic/photometric/sphere-fitting losses and 6-DoF pose
estimation, with a two-sphere synthetic eye renderer for ground truth.
"""

from ._ocumap import *  # noqa: F401,F403
from ._ocumap import __doc__  # noqa: F401

__version__ = "0.1.0"
