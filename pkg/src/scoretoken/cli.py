"""Command-line entry point: ``scoretoken <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import configs
from .adapters import PRESETS, load_csv
from .annotation import (
    TEMPLATE_IDS,
    AnnotationRequest,
    attribute_catalog,
    dispatch_many,
    get_template,
    render,
    transport_for_endpoint,
)
from .codec import CodecStrategy, build_table
from .dataset import (
    SplitSpec,
    artimuse_category_fixture,
    category_stats,
    filter_extremes,
    group_records,
    histogram,
    load_manifest,
    save_manifest,
    select_most_experienced,
    split,
)
from .errors import ScoreTokenError, UnknownAttribute
from .experiments import (
    SyntheticTask,
    gen_synthetic,
    load_plan,
    load_xdataset_plan,
    matrix_csv,
    run_ablation,
    write_reports,
    write_synthetic,
)
from .metrics import plcc, srcc
from .scorer import FeatureStore, TrainConfig, load_params, predict_score, save_params, train_on_manifest

log = logging.getLogger("scoretoken")


def _features_path(manifest_path: str, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    p = Path(manifest_path)
    return p.with_name(p.stem + ".features.npz")


# ---------------------------------------------------------------------------
# dataset


def cmd_dataset_load(args) -> int:
    if args.csv:
        if not args.preset:
            raise SystemExit("dataset load: --csv needs --preset")
        overrides = {"score_field": args.score_field} if args.score_field else {}
        manifest = load_csv(args.csv, args.preset, **overrides)
    else:
        manifest = load_manifest(args.manifest)
    lo, hi = manifest.declared_range or (None, None)
    print(f"{manifest.name}: {len(manifest)} records, declared range {lo}..{hi}")
    if args.out:
        save_manifest(manifest, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_dataset_split(args) -> int:
    manifest = load_manifest(args.manifest)
    train_m, test_m = split(manifest, SplitSpec(args.train_fraction, args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sidecar = _features_path(args.manifest, None)
    features = FeatureStore.load(sidecar) if sidecar.exists() else None
    for part in (train_m, test_m):
        save_manifest(part, out / f"{part.name}.jsonl")
        if features is not None:
            FeatureStore(tuple(part.ids), features.rows_for(part)).save(out / f"{part.name}.features.npz")
    print(f"train {len(train_m)}  test {len(test_m)}  -> {out}")
    return 0


def cmd_dataset_filter(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.most_experienced:
        manifest = select_most_experienced(
            group_records(manifest.records, args.most_experienced), args.experience_field, name=manifest.name
        )
    if args.quota is not None:
        manifest = filter_extremes(manifest, args.quota, primary_field=args.field)
    save_manifest(manifest, args.out)
    print(f"kept {len(manifest)} records -> {args.out}")
    return 0


def cmd_dataset_stats(args) -> int:
    if args.artimuse:
        print(category_stats(artimuse_category_fixture()).format())
        return 0
    if not args.manifest:
        raise SystemExit("dataset stats: give a manifest or --artimuse")
    manifest = load_manifest(args.manifest)
    print(f"{manifest.name}: {len(manifest)} records")
    for lo, hi, n in histogram(manifest, args.bins):
        print(f"[{lo:5.1f}, {hi:5.1f})  {n}")
    if any(r.main_category for r in manifest.records):
        print(category_stats(manifest).format())
    return 0


# ---------------------------------------------------------------------------
# scorer


def cmd_scorer_train(args) -> int:
    manifest = load_manifest(args.manifest)
    features = FeatureStore.load(_features_path(args.manifest, args.features))
    table = build_table(CodecStrategy.parse(args.codec))
    config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        config = TrainConfig.from_dict({**config.to_dict(), **cfg})
    result = train_on_manifest(manifest, features, table, config, hidden=args.hidden, init_mode=args.init)
    save_params(result.params, args.out)
    print(f"loss {result.initial_loss:.4f} -> {result.loss_curve[-1]:.4f}; wrote {args.out}")
    return 0


def cmd_scorer_predict(args) -> int:
    manifest = load_manifest(args.manifest)
    features = FeatureStore.load(_features_path(args.manifest, args.features))
    strategy = CodecStrategy.parse(args.codec)
    table = build_table(strategy)
    params = load_params(args.params)
    preds = np.atleast_1d(
        predict_score(params, features.rows_for(manifest), table, args.decoder or strategy.default_decoder)
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("id", "prediction", "target"))
    for r, p in zip(manifest.records, preds):
        w.writerow((r.id, float(p), r.normalized))
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    if len(manifest) >= 2:
        truth = manifest.normalized_scores()
        print(f"SRCC {srcc(preds, truth):.4f}  PLCC {plcc(preds, truth):.4f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# annotation


def record_fields(record) -> dict:
    """Template fields available from a manifest record."""
    fields = {"score": record.raw_score, "range": record.range_max}
    fields.update(record.captions)
    fields.update(record.aux)
    return fields


def cmd_annotate(args) -> int:
    manifest = load_manifest(args.manifest)
    template = get_template(args.template)
    needs_attribute = "attribute" in template.fields
    attributes = args.attribute or (list(attribute_catalog().names) if needs_attribute else [None])
    unknown = [a for a in attributes if a is not None and a not in attribute_catalog()]
    if unknown:
        raise UnknownAttribute(f"unknown aesthetic attribute(s): {', '.join(unknown)}")
    requests = []
    for r in manifest.records:
        for attr in attributes:
            fields = record_fields(r)
            if attr is not None:
                fields["attribute"] = attr
            if args.template == "JudgeSingleChoice":
                fields["models"] = args.models
            suffix = f"#{attr}" if attr else ""
            requests.append(
                AnnotationRequest(
                    f"{r.id}{suffix}",
                    r.id,
                    render(args.template, fields, strict=args.strict),
                    args.template,
                    args.endpoint,
                    attr,
                )
            )
    results = dispatch_many(
        requests,
        transport_for_endpoint(args.endpoint),
        concurrency=args.concurrency,
        timeout=args.timeout,
        max_attempts=args.max_attempts,
    )
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(res.to_record(), ensure_ascii=False) + "\n")
    failed = sum(res.error is not None for res in results)
    print(f"{len(results)} requests, {failed} failed -> {args.out}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# experiments


def cmd_ablate(args) -> int:
    plan = load_plan(configs.resolve(args.plan))
    report, cells = run_ablation(plan)
    paths = write_reports(report, cells, args.out)
    sys.stdout.write(paths["report"].read_text(encoding="utf-8"))
    return 0


def cmd_gen_synthetic(args) -> int:
    cfg = json.loads(configs.resolve(args.config).read_text(encoding="utf-8"))
    task = SyntheticTask.from_dict(cfg)
    if args.seed is not None:
        task = replace(task, seed=args.seed)
    mpath, fpath = write_synthetic(gen_synthetic(task), args.out)
    print(f"wrote {mpath} and {fpath}")
    return 0


def cmd_xdataset(args) -> int:
    plan = load_xdataset_plan(configs.resolve(args.plan))
    text = matrix_csv(plan.run())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "matrix.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoretoken", description="Token-as-score decoding, datasets and ablations.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="manifest utilities").add_subparsers(dest="action", required=True)
    p = ds.add_parser("load", help="validate a manifest, or convert a preset CSV export")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--csv", help="CSV export read through --preset")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--score-field")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dataset_load)
    p = ds.add_parser("split", help="seeded train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-frac", dest="train_fraction", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_split)
    p = ds.add_parser("filter", help="extreme-score quota and most-experienced annotator filters")
    p.add_argument("--manifest", required=True)
    p.add_argument("--quota", type=float)
    p.add_argument("--field", default="normalized", help="normalized, aux.<name> or a comma list to average")
    p.add_argument("--most-experienced", metavar="GROUP_KEY", help="e.g. captions.image_id")
    p.add_argument("--experience-field", default="experience")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_filter)
    p = ds.add_parser("stats", help="score histogram and category counts")
    p.add_argument("--manifest")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--artimuse", action="store_true", help="print the bundled 10K category table")
    p.set_defaults(func=cmd_dataset_stats)

    sc = sub.add_parser("scorer", help="train or apply a scoring head").add_subparsers(dest="action", required=True)
    p = sc.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="defaults to <manifest stem>.features.npz")
    p.add_argument("--codec", default="existing100_ordered")
    p.add_argument("--init", choices=("warm", "cold"), default="warm")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON TrainConfig; its keys override the flags above")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scorer_train)
    p = sc.add_parser("predict")
    p.add_argument("--params", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features")
    p.add_argument("--codec", default="existing100_ordered")
    p.add_argument("--decoder", choices=("expectation", "argmax"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_scorer_predict)

    p = sub.add_parser("annotate", help="render prompts for a manifest and dispatch them")
    p.add_argument("--template", required=True, choices=TEMPLATE_IDS)
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint", required=True, help="http(s) URL, or mock://<name> for the in-process mock")
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--attribute", action="append", help="repeatable; defaults to all eight when the template needs one")
    p.add_argument("--models", nargs="+", default=["model1", "model2", "model3", "model4"])
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-attempts", type=int, default=3)
    p.add_argument("--strict", action="store_true", help="fail on mid-range scores instead of eliding the degree clause")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("ablate", help="run a strategy ablation plan")
    p.add_argument("--plan", required=True, help=f"plan file or bundled name ({', '.join(configs.bundled_names())})")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)
    p = sub.add_parser("gen-synthetic", help="write a synthetic manifest and feature file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)
    p = sub.add_parser("xdataset", help="train-on-one, test-on-all generalization matrix")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_xdataset)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScoreTokenError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
