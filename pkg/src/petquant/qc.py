"""Two-step longitudinal quality control.

Step one checks that baseline and follow-up lesion centroids fall in the
same axial quadrant; step two compares the follow-up/baseline MTV ratio
against a data-driven threshold (the reciprocal of the cohort mean ratio).
Equality passes; only ratios strictly above the threshold are outliers.
The most extreme outliers can be exported as an annotation batch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .biomarkers import BiomarkerSet
from .errors import DegenerateInputError, EmptyRegionError, ParameterError
from .mask import BinaryMask, Quadrant, centroid, regrid_nearest

# Threshold derived on the original 180-scan clinical cohort; shipped as a
# fixed constant for parity runs on data where re-derivation is impossible.
REFERENCE_RATIO_THRESHOLD = 7.11


class ThresholdDerivation(enum.Enum):
    FIXED = "fixed"
    RECIPROCAL_MEAN_RATIO = "reciprocal_mean_ratio"


@dataclass(frozen=True)
class QcThreshold:
    value: float
    derivation: ThresholdDerivation
    cohort_size: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value) and self.value > 0.0):
            raise ParameterError(f"threshold must be a positive real, got {self.value}")


def fixed_threshold(value: float = REFERENCE_RATIO_THRESHOLD) -> QcThreshold:
    return QcThreshold(value, ThresholdDerivation.FIXED)


def derive_threshold(ratios) -> QcThreshold:
    """Reciprocal of the mean MTV ratio over the cohort."""
    vals = [float(r) for r in ratios]
    if not vals:
        raise DegenerateInputError("cannot derive a threshold from an empty cohort")
    if any(not math.isfinite(v) or v < 0.0 for v in vals):
        raise ParameterError("ratios must be finite and >= 0")
    mean = sum(vals) / len(vals)
    if mean <= 0.0:
        raise DegenerateInputError("mean MTV ratio is zero; threshold undefined")
    return QcThreshold(1.0 / mean, ThresholdDerivation.RECIPROCAL_MEAN_RATIO, len(vals))


@dataclass(frozen=True)
class QcRecord:
    """Per-patient QC outcome for one baseline/follow-up pair."""

    patient_id: str
    baseline_quadrant: Quadrant
    followup_quadrant: Quadrant
    mtv_ratio: float
    quadrant_ok: bool
    ratio_ok: bool
    outlier_score: float
    reason: str | None = None

    @property
    def validated(self) -> bool:
        return self.quadrant_ok and self.ratio_ok


def build_record(
    patient_id: str,
    baseline_quadrant: Quadrant,
    followup_quadrant: Quadrant,
    baseline_mtv_cm3: float,
    followup_mtv_cm3: float,
    thr: QcThreshold,
) -> QcRecord:
    """Apply both QC rules to precomputed quadrants and MTVs."""
    quadrant_ok = baseline_quadrant == followup_quadrant
    if baseline_mtv_cm3 <= 0.0:
        return QcRecord(
            patient_id,
            baseline_quadrant,
            followup_quadrant,
            math.inf,
            quadrant_ok,
            False,
            math.inf,
            reason="zero_baseline_mtv",
        )
    ratio = followup_mtv_cm3 / baseline_mtv_cm3
    ratio_ok = ratio <= thr.value
    score = max(0.0, ratio - thr.value)
    return QcRecord(
        patient_id, baseline_quadrant, followup_quadrant, ratio, quadrant_ok, ratio_ok, score
    )


def check_pair(
    bl_mask: BinaryMask,
    fu_mask: BinaryMask,
    bl_bio: BiomarkerSet,
    fu_bio: BiomarkerSet,
    thr: QcThreshold,
    patient_id: str = "",
) -> QcRecord:
    """Run both QC steps on one pair of segmentations.

    Quadrants are index-relative, so differing matrix sizes are regridded
    (nearest) onto the baseline dims first; spacing may differ freely.
    """
    if bl_mask.is_empty or fu_mask.is_empty:
        raise EmptyRegionError("QC needs non-empty baseline and follow-up masks")
    if fu_mask.dims != bl_mask.dims:
        fu_mask = regrid_nearest(fu_mask, bl_mask.dims)
        if fu_mask.is_empty:
            raise EmptyRegionError("follow-up mask vanished when regridded to baseline dims")
    bl_q = centroid(bl_mask).quadrant
    fu_q = centroid(fu_mask).quadrant
    return build_record(patient_id, bl_q, fu_q, bl_bio.mtv_cm3, fu_bio.mtv_cm3, thr)


def select_extreme_outliers(records: list[QcRecord], k: int) -> list[str]:
    """Patient ids of the k largest outlier scores (score > 0 only); ties
    break by ascending patient id. Fewer than k outliers returns them all."""
    if k < 0:
        raise ParameterError(f"k must be >= 0, got {k}")
    flagged = [r for r in records if r.outlier_score > 0.0]
    flagged.sort(key=lambda r: (-r.outlier_score, r.patient_id))
    return [r.patient_id for r in flagged[:k]]
