"""Score-annotated record manifests: loading, splitting, curation and summaries.

Manifest files are UTF-8 JSON Lines, one flat object per record::

    {"id": "img_001", "raw_score": 5.5, "range_min": 1, "range_max": 10,
     "main_category": "Photography", "subcategory": "Portrait",
     "captions.language_comment": "...", "aux.mos": 81.2}

``id``, ``raw_score``, ``range_min`` and ``range_max`` are required. Keys
prefixed ``captions.`` hold text, keys prefixed ``aux.`` hold numbers.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .codec import normalize_score
from .errors import (
    MissingExperience,
    NoExtremeRecords,
    OutOfRange,
    DegenerateRange,
    ParseError,
    RangeViolation,
    TooFewRecords,
)

REQUIRED_KEYS = ("id", "raw_score", "range_min", "range_max")
CAPTION_PREFIX = "captions."
AUX_PREFIX = "aux."


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    raw_score: float
    range_min: float
    range_max: float
    main_category: str = ""
    subcategory: str = ""
    captions: Mapping[str, str] = field(default_factory=dict)
    aux: Mapping[str, float] = field(default_factory=dict)
    normalized: float = field(init=False)

    def __post_init__(self):
        for name in ("raw_score", "range_min", "range_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "aux", {k: float(v) for k, v in self.aux.items()})
        try:
            norm = normalize_score(self.raw_score, self.range_min, self.range_max)
        except (OutOfRange, DegenerateRange) as exc:
            raise RangeViolation(f"record {self.id!r}: {exc}") from None
        object.__setattr__(self, "normalized", norm.value)

    @property
    def range(self) -> tuple[float, float]:
        return (self.range_min, self.range_max)

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "raw_score": self.raw_score,
            "range_min": self.range_min,
            "range_max": self.range_max,
        }
        if self.main_category:
            out["main_category"] = self.main_category
        if self.subcategory:
            out["subcategory"] = self.subcategory
        for k, v in self.captions.items():
            out[CAPTION_PREFIX + k] = v
        for k, v in self.aux.items():
            out[AUX_PREFIX + k] = v
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> ScoreRecord:
        missing = [k for k in REQUIRED_KEYS if k not in obj]
        if missing:
            raise ValueError(f"missing required keys {missing}")
        captions, aux = {}, {}
        for k, v in obj.items():
            if k.startswith(CAPTION_PREFIX):
                captions[k[len(CAPTION_PREFIX):]] = str(v)
            elif k.startswith(AUX_PREFIX):
                aux[k[len(AUX_PREFIX):]] = _number(v, k)
            elif k not in REQUIRED_KEYS and k not in ("main_category", "subcategory"):
                raise ValueError(f"unknown key {k!r}")
        return cls(
            id=str(obj["id"]),
            raw_score=_number(obj["raw_score"], "raw_score"),
            range_min=_number(obj["range_min"], "range_min"),
            range_max=_number(obj["range_max"], "range_max"),
            main_category=str(obj.get("main_category", "")),
            subcategory=str(obj.get("subcategory", "")),
            captions=captions,
            aux=aux,
        )


def _number(v, key: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{key} must be a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"{key} must be finite")
    return v


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    records: tuple[ScoreRecord, ...]
    declared_range: tuple[float, float] | None = None

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        declared = self.declared_range
        if declared is None and records:
            declared = records[0].range
        if declared is not None:
            declared = (float(declared[0]), float(declared[1]))
            for r in records:
                if r.range != declared:
                    raise RangeViolation(
                        f"record {r.id!r} has range {r.range}, manifest declares {declared}"
                    )
        object.__setattr__(self, "declared_range", declared)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def normalized_scores(self) -> np.ndarray:
        return np.array([r.normalized for r in self.records], dtype=np.float64)

    def subset(self, records: Iterable[ScoreRecord], name: str | None = None) -> DatasetManifest:
        return DatasetManifest(name or self.name, tuple(records), self.declared_range)


# ---------------------------------------------------------------------------
# IO


def load_manifest(path: str | Path, name: str | None = None) -> DatasetManifest:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("record must be a JSON object", lineno)
            try:
                records.append(ScoreRecord.from_json(obj))
            except RangeViolation as exc:
                raise RangeViolation(f"line {lineno}: {exc}") from None
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    return DatasetManifest(name or path.stem, tuple(records))


def dumps_manifest(manifest: DatasetManifest) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in manifest.records)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding="utf-8")


# ---------------------------------------------------------------------------
# field selection


FieldSelector = Callable[[ScoreRecord], float]


def field_selector(spec: str | FieldSelector = "normalized") -> FieldSelector:
    """Build a record -> float accessor.

    ``"normalized"`` reads the normalized score, ``"aux.<name>"`` an aux value.
    A comma-separated list averages its members, e.g. the four SPAQ quality
    attributes ``"aux.brightness,aux.colorfulness,aux.contrast,aux.sharpness"``.
    """
    if callable(spec):
        return spec
    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty field selector")

    def one(part: str) -> FieldSelector:
        if part == "normalized":
            return lambda r: r.normalized
        if part.startswith(AUX_PREFIX):
            key = part[len(AUX_PREFIX):]

            def get(r: ScoreRecord) -> float:
                try:
                    return float(r.aux[key])
                except KeyError:
                    raise KeyError(f"record {r.id!r} has no aux field {key!r}") from None

            return get
        raise ValueError(f"unsupported field selector {part!r}")

    getters = [one(p) for p in parts]
    if len(getters) == 1:
        return getters[0]
    return lambda r: sum(g(r) for g in getters) / len(getters)


# ---------------------------------------------------------------------------
# split / curation


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_sizes(n: int, train_fraction: float) -> tuple[int, int]:
    n_train = int(math.floor(train_fraction * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    return n_train, n - n_train


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise TooFewRecords(f"split needs at least 2 records, got {n}")
    n_train, _ = split_sizes(n, spec.train_fraction)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(manifest: DatasetManifest, spec: SplitSpec) -> tuple[DatasetManifest, DatasetManifest]:
    """Seeded shuffle-and-cut into disjoint train/test manifests (file order kept)."""
    train_idx, test_idx = split_indices(len(manifest), spec)
    recs = manifest.records
    return (
        manifest.subset((recs[i] for i in train_idx), f"{manifest.name}-train"),
        manifest.subset((recs[i] for i in test_idx), f"{manifest.name}-test"),
    )


def is_extreme(value: float, low=(0.0, 25.0), high=(75.0, 100.0)) -> bool:
    return low[0] <= value <= low[1] or high[0] <= value <= high[1]


def extreme_fraction(manifest: DatasetManifest, primary_field="normalized", low=(0.0, 25.0), high=(75.0, 100.0)) -> float:
    get = field_selector(primary_field)
    if not manifest.records:
        return 1.0
    n = sum(is_extreme(get(r), low, high) for r in manifest.records)
    return n / len(manifest.records)


def filter_extremes(
    manifest: DatasetManifest,
    quota: float = 0.8,
    low: tuple[float, float] = (0.0, 25.0),
    high: tuple[float, float] = (75.0, 100.0),
    primary_field: str | FieldSelector = "normalized",
) -> DatasetManifest:
    """Largest subset whose extreme fraction stays at or above ``quota``.

    All records whose field falls in ``low`` or ``high`` (closed intervals) are
    kept; mid-range records are then admitted in manifest order until one more
    would push the extreme fraction below the quota.
    """
    if not 0.0 < quota < 1.0:
        raise ValueError("quota must lie in (0, 1)")
    get = field_selector(primary_field)
    flags = [is_extreme(get(r), low, high) for r in manifest.records]
    n_extreme = sum(flags)
    if not flags:
        return manifest.subset((), manifest.name)
    if n_extreme == 0:
        raise NoExtremeRecords("no record falls in the extreme ranges; quota unattainable")
    q = Fraction(str(quota))
    # largest k with n_extreme / (n_extreme + k) >= q
    budget = math.floor(n_extreme * (1 - q) / q)
    kept = []
    for rec, extreme in zip(manifest.records, flags):
        if extreme:
            kept.append(rec)
        elif budget > 0:
            kept.append(rec)
            budget -= 1
    return manifest.subset(kept, manifest.name)


def group_records(records: Iterable[ScoreRecord], key: str) -> dict[str, list[ScoreRecord]]:
    """Group records by a caption field (``captions.<name>``) or category column."""
    groups: dict[str, list[ScoreRecord]] = {}
    for r in records:
        if key.startswith(CAPTION_PREFIX):
            k = r.captions.get(key[len(CAPTION_PREFIX):])
        elif key in ("main_category", "subcategory"):
            k = getattr(r, key)
        else:
            raise ValueError(f"cannot group by {key!r}")
        if k is None:
            raise KeyError(f"record {r.id!r} lacks grouping field {key!r}")
        groups.setdefault(k, []).append(r)
    return groups


def select_most_experienced(
    groups: Mapping[str, Sequence[ScoreRecord]],
    experience_field: str = "experience",
    name: str = "most-experienced",
) -> DatasetManifest:
    """Keep, per image, the record of the annotator with the most experience.

    ``groups`` maps an image key to its annotator records; experience is read
    from ``aux[experience_field]`` and ties go to the lowest record id.
    """
    chosen = []
    for image, recs in groups.items():
        if not recs:
            raise ValueError(f"image {image!r} has no records")
        for r in recs:
            if experience_field not in r.aux:
                raise MissingExperience(f"record {r.id!r} has no aux field {experience_field!r}")
        best = min(recs, key=lambda r: (-r.aux[experience_field], r.id))
        chosen.append(best)
    declared = chosen[0].range if chosen else None
    return DatasetManifest(name, tuple(chosen), declared)


# ---------------------------------------------------------------------------
# summaries


def histogram(manifest: DatasetManifest, n_bins: int = 10) -> list[tuple[float, float, int]]:
    """Equal-width bins over [0, 100] of normalized scores; last bin right-closed."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    counts = [0] * n_bins
    for v in manifest.normalized_scores():
        counts[min(int(math.floor(v * n_bins / 100.0)), n_bins - 1)] += 1
    edges = [100.0 * i / n_bins for i in range(n_bins + 1)]
    return [(edges[i], edges[i + 1], counts[i]) for i in range(n_bins)]


@dataclass(frozen=True)
class CategoryStats:
    rows: tuple[tuple[str, str, int], ...]
    main_totals: dict[str, int]
    total: int

    def format(self) -> str:
        lines = [f"{'main_category':<26}{'subcategory':<22}{'count':>7}"]
        for main, total in self.main_totals.items():
            for m, sub, n in self.rows:
                if m == main:
                    lines.append(f"{m:<26}{sub:<22}{n:>7}")
            lines.append(f"{main:<26}{'Total':<22}{total:>7}")
        lines.append(f"{'Total':<48}{self.total:>7}")
        return "\n".join(lines)


def category_stats(manifest: DatasetManifest) -> CategoryStats:
    """Record counts per (main_category, subcategory) with per-main and grand totals."""
    counts = Counter((r.main_category, r.subcategory) for r in manifest.records)
    rows = tuple((m, s, n) for (m, s), n in counts.items())
    main_totals: dict[str, int] = {}
    for m, _, n in rows:
        main_totals[m] = main_totals.get(m, 0) + n
    return CategoryStats(rows, main_totals, sum(main_totals.values()))


def artimuse_category_counts() -> list[tuple[str, str, int]]:
    """Per-subcategory image counts of the expert-curated 10K set (bundled fixture)."""
    raw = resources.files("scoretoken.data").joinpath("artimuse10k_categories.json").read_text("utf-8")
    return [(row["main"], row["sub"], int(row["count"])) for row in json.loads(raw)["subcategories"]]


def artimuse_category_fixture() -> DatasetManifest:
    """A manifest with one placeholder record per image of the category table."""
    records = []
    for main, sub, n in artimuse_category_counts():
        for j in range(n):
            records.append(ScoreRecord(f"{sub}-{j:05d}", 50.0, 0.0, 100.0, main, sub))
    return DatasetManifest("artimuse10k-categories", tuple(records), (0.0, 100.0))
