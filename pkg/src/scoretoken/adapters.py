"""Converters from public-dataset annotation tables into manifest records.

Each preset names the score column, its native range and the columns copied
into ``captions`` / ``aux``. Column names are the defaults of the usual
CSV exports and can be overridden per call.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .dataset import DatasetManifest, ScoreRecord


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    score_range: tuple[float, float]
    id_field: str = "image"
    score_field: str | None = "score"
    caption_fields: tuple[str, ...] = ()
    aux_fields: tuple[str, ...] = ()
    category_field: str | None = None
    # scale applied to the native score before range checking
    score_scale: float = 1.0
    aux_scale: Mapping[str, float] = field(default_factory=dict)


PRESETS: dict[str, DatasetPreset] = {
    "ava": DatasetPreset("AVA", (1.0, 10.0), score_field="mean_score"),
    "tad66k": DatasetPreset("TAD66K", (1.0, 10.0)),
    "para": DatasetPreset("PARA", (1.0, 5.0), score_field="aestheticScore_mean"),
    "flickr-aes": DatasetPreset("FLICKR-AES", (1.0, 5.0)),
    "apddv2": DatasetPreset(
        "APDDv2",
        (0.0, 100.0),
        id_field="filename",
        score_field="total_aesthetic_score",
        caption_fields=("language_comment", "artistic_categories"),
        aux_fields=(
            "theme_and_logic",
            "creativity",
            "layout_and_composition",
            "space_and_perspective",
            "sense_of_order",
            "light_and_shadow",
            "color",
            "details_and_texture",
            "overall",
            "mood",
        ),
        category_field="artistic_categories",
    ),
    "spaq": DatasetPreset(
        "SPAQ",
        (0.0, 100.0),
        score_field="mos",
        caption_fields=("categories",),
        aux_fields=("mos", "brightness", "colorfulness", "contrast", "sharpness"),
    ),
    "koniq": DatasetPreset(
        "KonIQ-10K",
        (0.0, 100.0),
        id_field="image_name",
        score_field="MOSz",
        aux_fields=("MOSz", "brightness", "contrast", "colorfulness", "sharpness", "quality_factor"),
    ),
    "impressions": DatasetPreset(
        "Impressions",
        (0.0, 100.0),
        id_field="annotation_id",
        score_field=None,
        caption_fields=("image_id", "caption", "image_description", "image_impression", "image_aesthetic_eval"),
        aux_fields=("experience",),
    ),
}


def records_from_rows(rows: Iterable[Mapping[str, str]], preset: DatasetPreset | str, **overrides) -> DatasetManifest:
    """Build a manifest from dict rows (e.g. ``csv.DictReader``) using a preset."""
    if isinstance(preset, str):
        preset = PRESETS[preset.lower()]
    if overrides:
        preset = replace(preset, **overrides)
    if preset.score_field is None:
        raise ValueError(f"preset {preset.name} has no score column; pass score_field=")
    m, M = preset.score_range
    records = []
    for row in rows:
        aux = {}
        for f in preset.aux_fields:
            if row.get(f, "") != "":
                aux[f] = float(row[f]) * preset.aux_scale.get(f, 1.0)
        captions = {f: row[f] for f in preset.caption_fields if row.get(f)}
        category = row.get(preset.category_field, "") if preset.category_field else ""
        records.append(
            ScoreRecord(
                id=str(row[preset.id_field]),
                raw_score=float(row[preset.score_field]) * preset.score_scale,
                range_min=m,
                range_max=M,
                main_category=category,
                captions=captions,
                aux=aux,
            )
        )
    return DatasetManifest(preset.name, tuple(records), (m, M))


def load_csv(path: str | Path, preset: DatasetPreset | str, **overrides) -> DatasetManifest:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return records_from_rows(csv.DictReader(fh), preset, **overrides)
