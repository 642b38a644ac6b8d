"""Masked photometric supervision for monocular depth and ego-motion.

The library covers the full supervision stack used by self-supervised
depth estimation: pinhole projection and rigid poses, differentiable
inverse warping with analytic derivatives, SSIM+L1 photometric error,
statistical outlier / auto / minimum-reprojection masking with weighted
multi-scale aggregation, a synthetic-scene oracle with ground-truth
occlusion and object motion, a direct depth-and-pose optimizer, and the
standard depth / per-motion-region / trajectory evaluation protocols.
"""

__version__ = "0.1.0"
