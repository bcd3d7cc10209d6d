"""Synthetic tasks and ablation runs comparing score-token strategies.

A synthetic task draws feature vectors, maps them through a known latent
score function onto [0, 100] and adds Gaussian label noise. An ablation plan
trains one scoring head per (row, seed) cell on a seeded train split and
reports test SRCC / PLCC against the noisy labels.

Plan files are JSON::

    {
      "name": "strategies",
      "task": {"D": 8, "N": 2000, "latent_map": "shallow", "noise_sd": 5.0, "seed": 0},
      "seeds": [0, 1, 2],
      "train_fraction": 0.9,
      "hidden": 16,
      "train": {"learning_rate": 0.01, "epochs": 30, "batch_size": 32},
      "rows": [
        {"label": "existing100_ordered", "codec": "existing100_ordered", "init": "warm"},
        {"label": "level5", "codec": "level5", "init": "warm", "train": {"epochs": 40}}
      ]
    }

Instead of ``task`` a plan may name fixed data with
``"data": {"manifest": "train.jsonl", "features": "train.features.npz"}``;
relative paths resolve against the plan file. Per-row ``train`` entries
override the plan-level defaults; ``decoder`` (``expectation`` or
``argmax``) defaults to the codec's own.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .codec import CodecStrategy, ScoreTokenTable, build_table
from .dataset import DatasetManifest, ScoreRecord, SplitSpec, load_manifest, save_manifest, split
from .errors import AblationError, LengthMismatch, NonFiniteLogits
from .metrics import plcc, srcc
from .scorer import FeatureStore, TrainConfig, predict_score, train_on_manifest

LATENT_MAPS = ("linear", "uniform", "shallow")


@dataclass(frozen=True)
class SyntheticTask:
    D: int = 8
    N: int = 2000
    latent_map: str = "shallow"
    noise_sd: float = 5.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        if self.latent_map not in LATENT_MAPS:
            raise ValueError(f"latent_map must be one of {LATENT_MAPS}")
        if self.N < 1 or self.D < 1:
            raise ValueError("N and D must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticTask:
        return cls(**d)


@dataclass(frozen=True)
class SyntheticData:
    manifest: DatasetManifest
    features: FeatureStore
    latent: np.ndarray


def _normal_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))


def _latent(task: SyntheticTask, X: np.ndarray, map_rng: np.random.Generator) -> np.ndarray:
    D = task.D
    if task.latent_map == "linear":
        w = map_rng.normal(size=D)
        return 50.0 + 50.0 * (X @ w) / np.sum(np.abs(w))
    if task.latent_map == "uniform":
        w = map_rng.normal(size=D)
        return 100.0 * _normal_cdf(X @ w / np.linalg.norm(w))
    # shallow: random one-hidden-layer map, standardized on a fixed reference draw
    A = map_rng.normal(0.0, 1.0 / math.sqrt(D), size=(D, 2 * D))
    v = map_rng.normal(size=2 * D)
    ref = np.tanh(map_rng.normal(size=(4096, D)) @ A) @ v
    u = np.tanh(X @ A) @ v
    return 100.0 * _normal_cdf((u - ref.mean()) / ref.std())


def gen_synthetic(task: SyntheticTask) -> SyntheticData:
    """Features, manifest and latent scores for ``task``; deterministic per seed.

    ``linear`` draws features uniformly on [-1, 1]^D and maps them affinely onto
    [0, 100]; ``uniform`` and ``shallow`` draw standard normal features and pass
    a projection through the normal CDF, so ``uniform`` latents are exactly
    uniform on [0, 100].
    """
    seq = np.random.SeedSequence(task.seed)
    map_rng, x_rng, noise_rng = (np.random.default_rng(s) for s in seq.spawn(3))
    if task.latent_map == "linear":
        X = x_rng.uniform(-1.0, 1.0, size=(task.N, task.D))
    else:
        X = x_rng.normal(size=(task.N, task.D))
    latent = np.clip(_latent(task, X, map_rng), 0.0, 100.0)
    noise = noise_rng.normal(0.0, task.noise_sd, size=task.N) if task.noise_sd > 0 else np.zeros(task.N)
    raw = np.clip(latent + noise, 0.0, 100.0)
    ids = tuple(f"{task.name}-{i:05d}" for i in range(task.N))
    records = tuple(
        ScoreRecord(ids[i], float(raw[i]), 0.0, 100.0, aux={"latent": float(latent[i])})
        for i in range(task.N)
    )
    return SyntheticData(DatasetManifest(task.name, records, (0.0, 100.0)), FeatureStore(ids, X), latent)


def write_synthetic(data: SyntheticData, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or data.manifest.name
    mpath, fpath = out / f"{stem}.jsonl", out / f"{stem}.features.npz"
    save_manifest(data.manifest, mpath)
    data.features.save(fpath)
    return mpath, fpath


def oracle_expectation(logits, table: ScoreTokenTable):
    """Reference expectation decoder: softmax without any shift, summed token by token.

    A single vector goes through plain Python floats. A batch ``(N, K)``
    accumulates left to right over tokens with each step vectorized across
    rows. Only valid while ``exp`` of every logit is representable
    (|logit| < ~700).
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] != table.size or z.ndim not in (1, 2):
        raise LengthMismatch(f"{z.shape[-1] if z.ndim else 0} logits for a table of {table.size} tokens")
    if not np.all(np.isfinite(z)):
        raise NonFiniteLogits("logits contain NaN or infinite values")
    if z.ndim == 1:
        weights = [math.exp(float(v)) for v in z]
        total = sum(weights)
        return sum(float(s) * w for s, w in zip(table.scores, weights)) / total
    num = np.zeros(z.shape[0])
    den = np.zeros(z.shape[0])
    for k, score in enumerate(table.scores):
        w = np.exp(z[:, k])
        num += float(score) * w
        den += w
    return num / den


# ---------------------------------------------------------------------------
# ablations


@dataclass(frozen=True)
class AblationRow:
    label: str
    strategy: CodecStrategy
    init_mode: str = "warm"
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden: int = 16
    decoder: str | None = None

    @property
    def decode_mode(self) -> str:
        return self.decoder or self.strategy.default_decoder


@dataclass(frozen=True)
class FixedData:
    manifest: DatasetManifest
    features: FeatureStore


@dataclass(frozen=True)
class AblationPlan:
    rows: tuple[AblationRow, ...]
    task: SyntheticTask | None = None
    data: FixedData | None = None
    seeds: tuple[int, ...] = tuple(range(10))
    train_fraction: float = 0.9
    name: str = "ablation"

    def __post_init__(self):
        labels = [r.label for r in self.rows]
        if len(set(labels)) != len(labels):
            raise ValueError(f"row labels must be unique: {labels}")
        if (self.task is None) == (self.data is None):
            raise ValueError("plan needs exactly one of task or data")
        if not self.seeds:
            raise ValueError("plan needs at least one seed")

    def dataset_for_seed(self, seed: int) -> FixedData:
        if self.data is not None:
            return self.data
        data = gen_synthetic(replace(self.task, seed=_mix(self.task.seed, seed)))
        return FixedData(data.manifest, data.features)


def _mix(a: int, b: int) -> int:
    return int(np.random.SeedSequence([a, b]).generate_state(1)[0])


def load_plan(path: str | Path) -> AblationPlan:
    path = Path(path)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    return plan_from_dict(cfg, base_dir=path.parent)


def _load_fixed(d: dict, base_dir: Path) -> FixedData:
    mpath = base_dir / d["manifest"]
    fpath = base_dir / d.get("features", str(Path(d["manifest"]).with_suffix("")) + ".features.npz")
    return FixedData(load_manifest(mpath), FeatureStore.load(fpath))


def plan_from_dict(cfg: dict, base_dir: str | Path = ".") -> AblationPlan:
    base_dir = Path(base_dir)
    defaults = dict(cfg.get("train", {}))
    hidden = int(cfg.get("hidden", 16))
    rows = []
    for r in cfg["rows"]:
        tc = TrainConfig.from_dict({**defaults, **r.get("train", {})})
        rows.append(
            AblationRow(
                label=r["label"],
                strategy=CodecStrategy.parse(r["codec"]),
                init_mode=r.get("init", "warm"),
                train=tc,
                hidden=int(r.get("hidden", hidden)),
                decoder=r.get("decoder"),
            )
        )
    task = SyntheticTask.from_dict(cfg["task"]) if "task" in cfg else None
    data = _load_fixed(cfg["data"], base_dir) if "data" in cfg else None
    return AblationPlan(
        rows=tuple(rows),
        task=task,
        data=data,
        seeds=tuple(int(s) for s in cfg.get("seeds", range(10))),
        train_fraction=float(cfg.get("train_fraction", 0.9)),
        name=cfg.get("name", "ablation"),
    )


@dataclass(frozen=True)
class CellResult:
    label: str
    seed: int
    srcc: float
    plcc: float
    final_loss: float
    n_train: int
    n_test: int


@dataclass(frozen=True)
class ReportRow:
    label: str
    seeds: tuple[int, ...]
    srcc: tuple[float, ...]
    plcc: tuple[float, ...]

    @property
    def srcc_mean(self) -> float:
        return float(np.mean(self.srcc))

    @property
    def plcc_mean(self) -> float:
        return float(np.mean(self.plcc))

    @property
    def srcc_ci(self) -> tuple[float, float]:
        return _mean_ci(self.srcc)

    @property
    def plcc_ci(self) -> tuple[float, float]:
        return _mean_ci(self.plcc)


def _mean_ci(values: Sequence[float]) -> tuple[float, float]:
    """Normal-approximation 95% interval of the mean across seeds."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    if v.size < 2:
        return mean, mean
    half = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return mean - half, mean + half


def run_cell(row: AblationRow, data: FixedData, seed: int, train_fraction: float) -> tuple[CellResult, np.ndarray]:
    """Train and evaluate one (row, seed) cell; returns the result and test predictions."""
    table = build_table(row.strategy)
    train_m, test_m = split(data.manifest, SplitSpec(train_fraction, seed))
    config = replace(row.train, seed=seed)
    result = train_on_manifest(train_m, data.features, table, config, hidden=row.hidden, init_mode=row.init_mode)
    preds = np.asarray(predict_score(result.params, data.features.rows_for(test_m), table, row.decode_mode))
    truth = test_m.normalized_scores()
    cell = CellResult(
        row.label,
        seed,
        srcc(preds, truth),
        plcc(preds, truth),
        result.loss_curve[-1],
        len(train_m),
        len(test_m),
    )
    return cell, preds


def run_ablation(plan: AblationPlan) -> tuple[list[ReportRow], list[CellResult]]:
    """Run every (row, seed) cell; results ordered by row then seed."""
    datasets = {s: plan.dataset_for_seed(s) for s in plan.seeds}
    cells: list[CellResult] = []
    for row in plan.rows:
        for s in plan.seeds:
            try:
                cell, _ = run_cell(row, datasets[s], s, plan.train_fraction)
            except Exception as exc:
                raise AblationError(row.label, s, exc) from exc
            cells.append(cell)
    report = []
    for row in plan.rows:
        mine = [c for c in cells if c.label == row.label]
        report.append(
            ReportRow(row.label, tuple(c.seed for c in mine), tuple(c.srcc for c in mine), tuple(c.plcc for c in mine))
        )
    return report, cells


CELL_COLUMNS = ("label", "seed", "srcc", "plcc", "final_loss", "n_train", "n_test")
SUMMARY_COLUMNS = (
    "label", "n_seeds", "srcc_mean", "srcc_ci_low", "srcc_ci_high", "plcc_mean", "plcc_ci_low", "plcc_ci_high",
)


def cells_csv(cells: Sequence[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELL_COLUMNS)
    for c in cells:
        w.writerow([getattr(c, k) for k in CELL_COLUMNS])
    return buf.getvalue()


def summary_csv(report: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in report:
        w.writerow([r.label, len(r.seeds), r.srcc_mean, *r.srcc_ci, r.plcc_mean, *r.plcc_ci])
    return buf.getvalue()


def format_report(report: Sequence[ReportRow]) -> str:
    width = max([len("strategy")] + [len(r.label) for r in report])
    lines = [f"{'strategy':<{width}}  {'SRCC':>7}  {'95% CI':>17}  {'PLCC':>7}  {'95% CI':>17}  seeds"]
    for r in report:
        (sl, sh), (pl, ph) = r.srcc_ci, r.plcc_ci
        lines.append(
            f"{r.label:<{width}}  {r.srcc_mean:7.4f}  [{sl:7.4f}, {sh:7.4f}]  "
            f"{r.plcc_mean:7.4f}  [{pl:7.4f}, {ph:7.4f}]  {len(r.seeds)}"
        )
    return "\n".join(lines) + "\n"


def write_reports(report: Sequence[ReportRow], cells: Sequence[CellResult], out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"cells": out / "cells.csv", "summary": out / "summary.csv", "report": out / "report.txt"}
    paths["cells"].write_text(cells_csv(cells), encoding="utf-8")
    paths["summary"].write_text(summary_csv(report), encoding="utf-8")
    paths["report"].write_text(format_report(report), encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# cross-dataset generalization


@dataclass(frozen=True)
class NamedData:
    name: str
    manifest: DatasetManifest
    features: FeatureStore


def cross_dataset_matrix(
    train_sets: Sequence[NamedData],
    test_sets: Sequence[NamedData],
    strategy: CodecStrategy | str,
    config: TrainConfig,
    hidden: int = 16,
    init_mode: str = "warm",
    train_fraction: float = 0.9,
    seed: int = 0,
) -> dict[tuple[str, str], tuple[float, float]]:
    """(train name, test name) -> (SRCC, PLCC).

    Every dataset is split with the same seed; the head is trained once on
    each train set's train part and scored on each test set's test part.
    """
    strategy = CodecStrategy.parse(strategy)
    table = build_table(strategy)
    config = replace(config, seed=seed)
    spec = SplitSpec(train_fraction, seed)
    test_parts = [(t, split(t.manifest, spec)[1]) for t in test_sets]
    out: dict[tuple[str, str], tuple[float, float]] = {}
    if not test_parts:
        return out
    for tr in train_sets:
        train_m, _ = split(tr.manifest, spec)
        result = train_on_manifest(train_m, tr.features, table, config, hidden=hidden, init_mode=init_mode)
        for te, test_m in test_parts:
            preds = predict_score(result.params, te.features.rows_for(test_m), table, strategy.default_decoder)
            truth = test_m.normalized_scores()
            out[(tr.name, te.name)] = (srcc(preds, truth), plcc(preds, truth))
    return out


def matrix_csv(matrix: dict[tuple[str, str], tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("train", "test", "srcc", "plcc"))
    for (tr, te), (s, p) in matrix.items():
        w.writerow((tr, te, s, p))
    return buf.getvalue()


def plan_to_dict(plan: AblationPlan) -> dict:
    """Serializable view of a synthetic-task plan (for provenance in reports)."""
    return {
        "name": plan.name,
        "task": asdict(plan.task) if plan.task else None,
        "seeds": list(plan.seeds),
        "train_fraction": plan.train_fraction,
        "rows": [
            {
                "label": r.label,
                "codec": r.strategy.name,
                "init": r.init_mode,
                "hidden": r.hidden,
                "decoder": r.decode_mode,
                "train": r.train.to_dict(),
            }
            for r in plan.rows
        ],
    }


@dataclass(frozen=True)
class XDatasetPlan:
    """Cross-dataset run: named datasets plus which of them to train and test on.

    JSON form::

        {
          "codec": "existing100_ordered", "init": "warm", "hidden": 16,
          "train": {"epochs": 30}, "seed": 0, "train_fraction": 0.9,
          "datasets": [
            {"name": "shallow", "task": {"latent_map": "shallow", "seed": 1}},
            {"name": "real", "manifest": "real.jsonl", "features": "real.features.npz"}
          ],
          "train_on": ["shallow"], "test_on": ["shallow", "real"]
        }

    ``train_on`` and ``test_on`` default to every dataset.
    """

    datasets: tuple[NamedData, ...]
    train_on: tuple[str, ...]
    test_on: tuple[str, ...]
    strategy: CodecStrategy
    config: TrainConfig = field(default_factory=TrainConfig)
    hidden: int = 16
    init_mode: str = "warm"
    train_fraction: float = 0.9
    seed: int = 0

    def run(self) -> dict[tuple[str, str], tuple[float, float]]:
        by_name = {d.name: d for d in self.datasets}
        return cross_dataset_matrix(
            [by_name[n] for n in self.train_on],
            [by_name[n] for n in self.test_on],
            self.strategy,
            self.config,
            hidden=self.hidden,
            init_mode=self.init_mode,
            train_fraction=self.train_fraction,
            seed=self.seed,
        )


def xdataset_plan_from_dict(cfg: dict, base_dir: str | Path = ".") -> XDatasetPlan:
    base_dir = Path(base_dir)
    datasets = []
    for d in cfg["datasets"]:
        if "task" in d:
            task = SyntheticTask.from_dict({"name": d["name"], **d["task"]})
            syn = gen_synthetic(task)
            datasets.append(NamedData(d["name"], syn.manifest, syn.features))
        else:
            fixed = _load_fixed(d, base_dir)
            datasets.append(NamedData(d["name"], fixed.manifest, fixed.features))
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValueError(f"dataset names must be unique: {names}")
    train_on = tuple(cfg.get("train_on", names))
    test_on = tuple(cfg.get("test_on", names))
    for n in (*train_on, *test_on):
        if n not in names:
            raise ValueError(f"unknown dataset {n!r}")
    return XDatasetPlan(
        datasets=tuple(datasets),
        train_on=train_on,
        test_on=test_on,
        strategy=CodecStrategy.parse(cfg.get("codec", "existing100_ordered")),
        config=TrainConfig.from_dict(cfg.get("train", {})),
        hidden=int(cfg.get("hidden", 16)),
        init_mode=cfg.get("init", "warm"),
        train_fraction=float(cfg.get("train_fraction", 0.9)),
        seed=int(cfg.get("seed", 0)),
    )


def load_xdataset_plan(path: str | Path) -> XDatasetPlan:
    path = Path(path)
    return xdataset_plan_from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)
