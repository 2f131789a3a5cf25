"""Quantitative instruments over traces and ground truth."""
from loci.evaluation.metrics import (ari, position_from_mask, psnr, segmentation_labels, slot_error, ssim)
from loci.evaluation.tracking import (Assignment, GateStats, MotaCounts, TrackingSummary, VoeSummary, diagonal,
                                      gate_stats, lock_assignment, mass_threshold, match_frame, mota, mota_counts,
                                      tracking_error, window_max_slot_error)

__all__ = ["Assignment", "GateStats", "MotaCounts", "TrackingSummary", "VoeSummary", "ari", "diagonal", "gate_stats",
           "lock_assignment", "mass_threshold", "match_frame", "mota", "mota_counts", "position_from_mask", "psnr",
           "segmentation_labels", "slot_error", "ssim", "tracking_error", "window_max_slot_error"]
