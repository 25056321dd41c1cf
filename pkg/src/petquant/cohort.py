"""Cohort manifest handling and the QC / report pipelines.

A manifest is a CSV with columns patient_id, bl_volume, bl_mask, fu_volume,
fu_mask, dose_MBq, weight_kg (paths relative to the manifest). When dose and
weight are present the volumes are read as activity concentration and
converted to SUV; otherwise they are taken as SUV already.

Patient-level work runs on a thread pool; results are reduced in manifest
order, so reports are byte-identical for any thread count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .biomarkers import BiomarkerSet, DeltaSet, delta, extract
from .errors import ManifestError
from .mask import BinaryMask, Quadrant, centroid, regrid_nearest
from .nifti import read_mask, read_volume, write_mask, write_volume
from .qc import QcRecord, QcThreshold, build_record, derive_threshold, select_extreme_outliers
from .serialize import dumps_csv, dumps_json, write_text_atomic
from .stats import boxplot_summary, paired_ttest
from .volume import AcquisitionInfo, IntensityUnit, Volume3D, to_suv

REQUIRED_COLUMNS = ["patient_id", "bl_volume", "bl_mask", "fu_volume", "fu_mask"]


@dataclass(frozen=True)
class CohortEntry:
    patient_id: str
    bl_volume: Path
    bl_mask: Path
    fu_volume: Path
    fu_mask: Path
    dose_MBq: float | None = None
    weight_kg: float | None = None


def load_manifest(path: str | Path) -> list[CohortEntry]:
    p = Path(path)
    entries: list[CohortEntry] = []
    seen: set[str] = set()
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ManifestError(f"{p}: manifest missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            pid = (row["patient_id"] or "").strip()
            if not pid:
                raise ManifestError(f"{p}:{lineno}: empty patient_id")
            if pid in seen:
                raise ManifestError(f"{p}:{lineno}: duplicate patient_id {pid!r}")
            seen.add(pid)

            def _num(col: str) -> float | None:
                raw = (row.get(col) or "").strip()
                if not raw:
                    return None
                try:
                    val = float(raw)
                except ValueError as exc:
                    raise ManifestError(f"{p}:{lineno}: bad {col} value {raw!r}") from exc
                return val if val > 0 else None

            entries.append(
                CohortEntry(
                    pid,
                    p.parent / row["bl_volume"],
                    p.parent / row["bl_mask"],
                    p.parent / row["fu_volume"],
                    p.parent / row["fu_mask"],
                    _num("dose_MBq"),
                    _num("weight_kg"),
                )
            )
    if not entries:
        raise ManifestError(f"{p}: manifest has no rows")
    return entries


def _read_suv(path: Path, entry: CohortEntry) -> Volume3D:
    if entry.dose_MBq is not None and entry.weight_kg is not None:
        vol = read_volume(path, unit=IntensityUnit.ACTIVITY_KBQ_PER_ML)
        return to_suv(vol, AcquisitionInfo(entry.dose_MBq, entry.weight_kg))
    return read_volume(path, unit=IntensityUnit.SUV)


@dataclass(frozen=True)
class PatientQuant:
    """Everything the downstream reductions need for one patient."""

    entry: CohortEntry
    baseline: BiomarkerSet
    followup: BiomarkerSet
    change: DeltaSet
    bl_quadrant: Quadrant | None
    fu_quadrant: Quadrant | None
    bl_dims: tuple[int, int, int]
    fu_dims: tuple[int, int, int]


def _quantify_one(entry: CohortEntry) -> PatientQuant:
    bl_mask = read_mask(entry.bl_mask)
    fu_mask = read_mask(entry.fu_mask)
    bl_bio = extract(_read_suv(entry.bl_volume, entry), bl_mask)
    fu_bio = extract(_read_suv(entry.fu_volume, entry), fu_mask)
    bl_q = None if bl_mask.is_empty else centroid(bl_mask).quadrant
    fu_q = None if fu_mask.is_empty else centroid(fu_mask).quadrant
    return PatientQuant(
        entry, bl_bio, fu_bio, delta(bl_bio, fu_bio), bl_q, fu_q, bl_mask.dims, fu_mask.dims
    )


def quantify_cohort(entries: list[CohortEntry], threads: int = 1) -> list[PatientQuant]:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_quantify_one, entries))
    return [_quantify_one(e) for e in entries]


def _qc_records(quants: list[PatientQuant], thr: QcThreshold) -> list[QcRecord]:
    records = []
    for q in quants:
        if q.bl_quadrant is None or q.fu_quadrant is None:
            raise ManifestError(f"patient {q.entry.patient_id}: empty mask, cannot run QC")
        fu_quadrant = q.fu_quadrant
        if q.fu_dims != q.bl_dims:
            # index-relative quadrants need a shared grid
            fu_quadrant = centroid(
                regrid_nearest(read_mask(q.entry.fu_mask), q.bl_dims)
            ).quadrant
        records.append(
            build_record(
                q.entry.patient_id,
                q.bl_quadrant,
                fu_quadrant,
                q.baseline.mtv_cm3,
                q.followup.mtv_cm3,
                thr,
            )
        )
    return records


def export_annotation_batch(
    ids: list[str], entries: list[CohortEntry], out_dir: str | Path
) -> Path:
    """Write each flagged follow-up volume plus an empty mask template and a
    tasks.json list for external annotation tools. Returns the tasks path."""
    by_id = {e.patient_id: e for e in entries}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    for pid in ids:
        if pid not in by_id:
            raise ManifestError(f"patient id {pid!r} not present in the manifest")
        entry = by_id[pid]
        vol = read_volume(entry.fu_volume)
        vol_path = out / f"{pid}_fu.nii"
        template_path = out / f"{pid}_mask_template.nii"
        write_volume(vol, vol_path)
        write_mask(BinaryMask(np.zeros(vol.dims, dtype=bool), vol.spacing), template_path)
        tasks.append(
            {"patient_id": pid, "volume": vol_path.name, "mask_template": template_path.name}
        )
    tasks_path = out / "tasks.json"
    write_text_atomic(tasks_path, dumps_json({"tasks": tasks}))
    return tasks_path


def run_qc(
    entries: list[CohortEntry],
    out_dir: str | Path,
    threshold: QcThreshold | None = None,
    select_extreme: int = 0,
    threads: int = 1,
) -> dict:
    """Quantify, flag and (optionally) export extreme outliers.

    With no explicit threshold, one is derived from the finite MTV ratios of
    this cohort. Writes qc_report.csv and qc_summary.json in out_dir.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    quants = quantify_cohort(entries, threads)
    if threshold is None:
        ratios = [q.change.mtv_ratio for q in quants if q.change.mtv_ratio is not None]
        threshold = derive_threshold(ratios)
    records = _qc_records(quants, threshold)
    extreme = select_extreme_outliers(records, select_extreme) if select_extreme > 0 else []

    rows = []
    for q, r in zip(quants, records):
        rows.append(
            [
                r.patient_id,
                q.baseline.mtv_cm3,
                r.mtv_ratio,
                r.baseline_quadrant.value,
                r.followup_quadrant.value,
                r.quadrant_ok,
                r.ratio_ok,
                r.outlier_score,
                not r.validated,
            ]
        )
    write_text_atomic(
        out / "qc_report.csv",
        dumps_csv(
            [
                "patient_id",
                "bl_mtv_cm3",
                "mtv_ratio",
                "baseline_quadrant",
                "followup_quadrant",
                "quadrant_ok",
                "ratio_ok",
                "outlier_score",
                "flagged",
            ],
            rows,
        ),
    )
    summary = {
        "threshold": threshold.value,
        "derivation": threshold.derivation.value,
        "cohort_size": len(records),
        "n_outliers": sum(1 for r in records if not r.ratio_ok),
        "n_quadrant_mismatch": sum(1 for r in records if not r.quadrant_ok),
        "extreme_ids": extreme,
    }
    write_text_atomic(out / "qc_summary.json", dumps_json(summary))
    if extreme:
        export_annotation_batch(extreme, entries, out / "annotation_batch")
    return summary


def run_report(
    entries: list[CohortEntry],
    out_dir: str | Path,
    threshold: QcThreshold | None = None,
    threads: int = 1,
) -> dict:
    """Emit biomarker_table.csv, deltas.csv, boxplot.json, qc_scatter.csv and
    stats.json for a cohort. Returns the stats payload."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    quants = quantify_cohort(entries, threads)

    table_rows = []
    for q in quants:
        for timepoint, bio in (("baseline", q.baseline), ("followup", q.followup)):
            table_rows.append(
                [
                    q.entry.patient_id,
                    timepoint,
                    bio.suv_max,
                    bio.suv_mean,
                    bio.mtv_cm3,
                    bio.tlg,
                    bio.voxel_count,
                ]
            )
    write_text_atomic(
        out / "biomarker_table.csv",
        dumps_csv(
            ["patient_id", "timepoint", "suv_max", "suv_mean", "mtv_cm3", "tlg", "voxel_count"],
            table_rows,
        ),
    )

    delta_rows = [
        [
            q.entry.patient_id,
            q.change.d_suv_max,
            q.change.pct_d_suv_max,
            q.change.d_mtv_cm3,
            q.change.mtv_ratio,
            q.change.d_tlg,
        ]
        for q in quants
    ]
    write_text_atomic(
        out / "deltas.csv",
        dumps_csv(
            ["patient_id", "d_suv_max", "pct_d_suv_max", "d_mtv_cm3", "mtv_ratio", "d_tlg"],
            delta_rows,
        ),
    )

    panels = {}
    for key, pick in (
        ("suv_max", lambda b: b.suv_max),
        ("mtv_cm3", lambda b: b.mtv_cm3),
        ("tlg", lambda b: b.tlg),
    ):
        panels[key] = {
            "baseline": boxplot_summary([pick(q.baseline) for q in quants]).as_dict(),
            "followup": boxplot_summary([pick(q.followup) for q in quants]).as_dict(),
        }
    write_text_atomic(out / "boxplot.json", dumps_json(panels))

    if threshold is None:
        ratios = [q.change.mtv_ratio for q in quants if q.change.mtv_ratio is not None]
        threshold = derive_threshold(ratios)
    records = _qc_records(quants, threshold)
    scatter_rows = [
        [q.baseline.mtv_cm3, r.mtv_ratio, not r.validated]
        for q, r in zip(quants, records)
    ]
    write_text_atomic(
        out / "qc_scatter.csv", dumps_csv(["bl_mtv_cm3", "mtv_ratio", "flagged"], scatter_rows)
    )

    stats_payload: dict = {"n": len(quants), "threshold": threshold.value, "delta": {}}
    for key, pick in (
        ("suv_max", lambda b: b.suv_max),
        ("mtv_cm3", lambda b: b.mtv_cm3),
        ("tlg", lambda b: b.tlg),
    ):
        before = [pick(q.baseline) for q in quants]
        after = [pick(q.followup) for q in quants]
        diffs = [a - b for a, b in zip(after, before)]
        n = len(diffs)
        mean = sum(diffs) / n
        entry: dict = {"mean": mean}
        if n >= 2:
            var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
            sd = var**0.5
            entry["sd"] = sd
            entry["sem"] = sd / n**0.5
            if sd > 0:
                tt = paired_ttest(before, after)
                entry.update({"t": tt.t, "p": tt.p, "df": tt.df, "significant": tt.significant})
        stats_payload["delta"][key] = entry
    write_text_atomic(out / "stats.json", dumps_json(stats_payload))
    return stats_payload
