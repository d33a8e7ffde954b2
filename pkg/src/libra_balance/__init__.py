"""Balanced training components for two-stage object detectors.

IoU-balanced negative sampling, the balanced feature pyramid and the
balanced L1 loss, each with analytic gradients.
"""

from .boxes import AssignConfig, Box2D, Candidate, Label, assign, iou
from .loss import (
    BalancedL1Params,
    DetectionTarget,
    balanced_l1,
    balanced_l1_grad,
    classify_sample,
    localization_loss,
    multi_task_loss,
    smooth_l1,
    smooth_l1_grad,
    solve_b,
)
from .pyramid import NonLocalWeights, PyramidLevels, balanced_feature_pyramid
from .sampler import SampleReport, SamplerConfig, sample_iou_balanced, sample_positive_balanced, sample_random
from .tensor import NumericFailure, Tensor, finite_diff_check

__version__ = "0.1.0"
