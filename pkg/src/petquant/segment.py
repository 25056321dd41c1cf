"""Classical PET lesion segmentation.

Two threshold families: a fixed percentage of the ROI maximum, and an
iterative contrast-oriented rule whose threshold is a fixed point of

    T <- a · mean(ROI voxels >= max(T, 0.7·ROI max)) + b · BG

where BG is estimated from a thin background shell around the ROI. Both
return masks restricted to the ROI; the iterative method keeps only the
component connected to the ROI maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyRegionError, ParameterError
from .mask import BinaryMask, fill_holes, largest_component, require_same_geometry, _structure
from .volume import Volume3D

DEFAULT_CONTRAST_A = 0.39
DEFAULT_CONTRAST_B = 1.0
BACKGROUND_SHELL_GAP = 3  # voxels between ROI and the 1-voxel background shell


def threshold_pct_suvmax(vol: Volume3D, roi: BinaryMask, pct: float) -> BinaryMask:
    """Voxels inside the ROI at or above pct · (ROI max). Never empty."""
    require_same_geometry(vol, roi)
    if roi.is_empty:
        raise EmptyRegionError("ROI is empty")
    if not 0.0 < pct < 1.0:
        raise ParameterError(f"pct must lie in (0, 1), got {pct}")
    vmax = float(vol.values[roi.bits].max())
    # min() keeps the max voxel included when vmax < 0 (z-scored inputs)
    return BinaryMask(roi.bits & (vol.values >= min(pct * vmax, vmax)), vol.spacing)


def background_estimate(vol: Volume3D, roi: BinaryMask, gap: int = BACKGROUND_SHELL_GAP) -> float:
    """Mean intensity on the 1-voxel shell `gap` dilations beyond the ROI.

    Returns 0.0 when the shell leaves the volume entirely (ROI fills the grid).
    """
    struct = _structure(6)
    outer = ndimage.binary_dilation(roi.bits, structure=struct, iterations=gap)
    inner = (
        ndimage.binary_dilation(roi.bits, structure=struct, iterations=gap - 1)
        if gap > 1
        else roi.bits
    )
    shell = outer & ~inner
    if not shell.any():
        return 0.0
    return float(vol.values[shell].mean())


@dataclass(frozen=True)
class ContrastResult:
    """Outcome of the iterative contrast threshold."""

    mask: BinaryMask
    threshold: float
    converged: bool
    iterations: int


def threshold_contrast_iterative(
    vol: Volume3D,
    roi: BinaryMask,
    a: float = DEFAULT_CONTRAST_A,
    b: float = DEFAULT_CONTRAST_B,
    tol: float = 1e-4,
    max_iter: int = 100,
    background: float | None = None,
) -> ContrastResult:
    """Iterate the contrast rule to a fixed point and threshold the ROI.

    The 70% reference level uses the ROI maximum computed once up front.
    `background` overrides the shell estimate when given. Non-convergence
    within max_iter returns the last mask with converged=False.
    """
    require_same_geometry(vol, roi)
    if roi.is_empty:
        raise EmptyRegionError("ROI is empty")
    if not 0.0 < a < 1.0:
        raise ParameterError(f"a must lie in (0, 1), got {a}")
    if b < 0.0:
        raise ParameterError(f"b must be >= 0, got {b}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")

    roi_values = vol.values[roi.bits]
    local_max = float(roi_values.max())
    bg = background_estimate(vol, roi) if background is None else float(background)
    ref70 = 0.7 * local_max

    t_cur = ref70
    converged = False
    iterations = 0
    for _ in range(max_iter):
        core = roi_values[roi_values >= max(t_cur, ref70)]
        if core.size == 0:
            break  # threshold climbed past every ROI voxel; keep last value
        t_next = a * float(core.mean()) + b * bg
        iterations += 1
        done = abs(t_next - t_cur) < tol
        t_cur = t_next
        if done:
            converged = True
            break

    selected = roi.bits & (vol.values >= t_cur)
    mask = BinaryMask(selected, vol.spacing)
    if not mask.is_empty:
        # keep only the component holding the ROI maximum (first argmax in scan order)
        flat_roi = np.argwhere(roi.bits & (vol.values == local_max))
        seed = tuple(flat_roi[0])
        labeled, n = ndimage.label(selected, structure=_structure(26))
        seed_label = labeled[seed]
        if seed_label > 0:
            mask = BinaryMask(labeled == seed_label, vol.spacing)
    return ContrastResult(mask, t_cur, converged, iterations)


def postprocess(mask: BinaryMask) -> BinaryMask:
    """Largest 26-connected component with interior holes filled."""
    if mask.is_empty:
        return mask
    return fill_holes(largest_component(mask, connectivity=26))
