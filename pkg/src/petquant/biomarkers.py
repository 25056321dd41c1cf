"""SUV/MTV/TLG extraction from a volume+mask pair and longitudinal deltas.

MTV is voxel count times voxel volume in cm³; TLG = SUVmean · MTV (SUV·cm³).
Degenerate cases (empty mask, zero baselines) are flagged through the
``warnings`` field rather than raised, so cohort runs never abort mid-batch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import IntensityUnitError
from .mask import BinaryMask, require_same_geometry
from .volume import IntensityUnit, Volume3D


@dataclass(frozen=True)
class BiomarkerSet:
    """Per-lesion biomarkers for one scan."""

    suv_max: float
    suv_mean: float
    mtv_cm3: float
    tlg: float
    voxel_count: int
    warnings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "suv_max": self.suv_max,
            "suv_mean": self.suv_mean,
            "mtv_cm3": self.mtv_cm3,
            "tlg": self.tlg,
            "voxel_count": self.voxel_count,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class DeltaSet:
    """Follow-up minus baseline changes plus the MTV ratio.

    pct_d_suv_max and mtv_ratio are None (with a warning) when the
    corresponding baseline value is zero.
    """

    d_suv_max: float
    d_mtv_cm3: float
    d_tlg: float
    pct_d_suv_max: float | None
    mtv_ratio: float | None
    warnings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "d_suv_max": self.d_suv_max,
            "d_mtv_cm3": self.d_mtv_cm3,
            "d_tlg": self.d_tlg,
            "pct_d_suv_max": self.pct_d_suv_max,
            "mtv_ratio": self.mtv_ratio,
            "warnings": list(self.warnings),
        }


def extract(vol: Volume3D, mask: BinaryMask) -> BiomarkerSet:
    """Biomarkers over the masked region of an SUV volume.

    An empty mask yields an all-zero set flagged with a warning.
    """
    require_same_geometry(vol, mask)
    if vol.unit is not IntensityUnit.SUV:
        raise IntensityUnitError(f"biomarker extraction needs SUV input, got {vol.unit.value}")
    count = mask.voxel_count
    if count == 0:
        return BiomarkerSet(0.0, 0.0, 0.0, 0.0, 0, ("empty mask: biomarkers set to zero",))
    selected = vol.values[mask.bits]
    suv_max = float(selected.max())
    suv_mean = float(selected.mean())
    mtv = count * vol.voxel_volume_cm3
    return BiomarkerSet(suv_max, suv_mean, mtv, suv_mean * mtv, count)


def delta(baseline: BiomarkerSet, followup: BiomarkerSet) -> DeltaSet:
    """Follow-up minus baseline; ratio and percent change flagged when undefined."""
    warnings: list[str] = []
    if baseline.suv_max != 0.0:
        pct = 100.0 * (followup.suv_max - baseline.suv_max) / baseline.suv_max
    else:
        pct = None
        warnings.append("baseline SUVmax is zero: percent change undefined")
    if baseline.mtv_cm3 != 0.0:
        ratio = followup.mtv_cm3 / baseline.mtv_cm3
    else:
        ratio = None
        warnings.append("baseline MTV is zero: MTV ratio undefined")
    return DeltaSet(
        followup.suv_max - baseline.suv_max,
        followup.mtv_cm3 - baseline.mtv_cm3,
        followup.tlg - baseline.tlg,
        pct,
        ratio,
        tuple(warnings),
    )
