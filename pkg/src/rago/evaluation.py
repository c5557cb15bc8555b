"""Gauge alignment and mean/median angular error."""

import numpy as np

from . import so3


def align(est, gt):
    """Rotation ``R0`` minimizing ``sum ||est_u R0 - gt_u||_F^2``.

    Closed form: the SO(3) projection of ``sum est_u^T gt_u``.
    """
    est = np.asarray(est, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if est.shape != gt.shape or est.ndim != 3 or len(est) == 0:
        raise ValueError("est and gt must be equal-length, non-empty (N, 3, 3) stacks")
    return so3.project_to_so3(np.einsum("nji,njk->ik", est, gt))


def lower_median(x):
    x = np.sort(np.asarray(x, dtype=float))
    return float(x[(len(x) - 1) // 2])


def angular_errors(est, gt):
    """Per-node error in degrees after gauge alignment."""
    r0 = align(est, gt)
    return so3.geodesic_deg(np.asarray(est) @ r0, gt)


def mn_md_error(est, gt):
    """Mean and (lower) median aligned angular error in degrees."""
    err = angular_errors(est, gt)
    return float(np.mean(err)), lower_median(err)
