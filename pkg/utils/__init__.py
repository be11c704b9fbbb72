"""Utility functions for the ensemble panoptic fusion toolkit."""

from .mask_utils import bbox, iou, iou_in_box

__all__ = ["bbox", "iou", "iou_in_box"]
