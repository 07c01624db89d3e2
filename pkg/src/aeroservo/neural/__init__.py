"""Toy-scale forward passes of the tracker's feature blocks, and its losses."""

from .blocks import (ShapeMismatchError, keypoint_projection_forward, layer_norm, lowrank_attention,
                     lowrank_fusion, multi_head, quadratic_attention, shape_filter_decode,
                     shape_filter_inputs, temporal_encode, toy_image_features, wsa_forward)
from .losses import (NumericalGuardWarning, loss_aux, loss_aux_grad, loss_matching, loss_matching_grad,
                     loss_mvc, loss_mvc_grad, loss_pose, loss_pose_grad, total_loss)
from .triplane import TriplaneFeatures, build_triplane, triplane_from_weights, triplane_lookup, triplane_sample
from .weights import BlockWeights, NeuralParams, load_weights, save_weights

__all__ = [
    "BlockWeights", "NeuralParams", "NumericalGuardWarning", "ShapeMismatchError", "TriplaneFeatures",
    "build_triplane", "keypoint_projection_forward", "layer_norm", "load_weights", "loss_aux",
    "loss_aux_grad", "loss_matching", "loss_matching_grad", "loss_mvc", "loss_mvc_grad", "loss_pose",
    "loss_pose_grad", "lowrank_attention", "lowrank_fusion", "multi_head", "quadratic_attention",
    "save_weights", "shape_filter_decode", "shape_filter_inputs", "temporal_encode", "toy_image_features",
    "total_loss", "triplane_from_weights", "triplane_lookup", "triplane_sample", "wsa_forward",
]
