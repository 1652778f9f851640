"""Command-line entry points: synth, learn, train, score, eval.

Every command validates its configuration before touching the filesystem,
takes an exclusive lock on its output directory, and writes a run manifest
with the config hash and input checksums.  Under the mock backend the
same inputs, config, and seed always produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, build_gateway, load_config
from .errors import LegalStyleError, LockError, UndefinedCorrelation, UndefinedCV
from .evalharness import (
    AnnotationMatrix,
    PairedScores,
    dispersion,
    kendall_tau,
    krippendorff_alpha,
    pearson,
    spearman,
)
from .experience import build_pools, load_pools, train_from_pools
from .features import default_catalog
from .regression import load_model, save_model
from .retrieval import build_index
from .scoring import DIMENSIONS, DimensionWeights, score_document
from .synthesis import SynthesisConfig, Synthesizer, pair_from_json, pair_to_json
from .textmodel import load_corpus_jsonl, split_sections

logger = logging.getLogger("legalstyle")

LOCK_NAME = ".lock"


class _OutputLock:
    def __init__(self, directory: Path):
        self.path = directory / LOCK_NAME

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(
                f"output directory is locked by another run: {self.path} "
                f"(remove the file if that run is dead)"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        if self.path.exists():
            self.path.unlink()
        return False


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_run_manifest(out_dir: Path, command: str, config: PipelineConfig,
                        inputs: dict[str, Path]) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config_sha256": config.sha256(),
        "seed": config.seed,
        "backend": config.backend,
        "inputs": {name: _sha256_file(p) for name, p in sorted(inputs.items())},
    }
    (out_dir / "run.json").write_text(
        json.dumps(manifest, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.backend is not None:
        config.backend = args.backend
    config.validate()
    return config


def _require_readable(path: Path, what: str) -> Path:
    if not path.exists():
        raise LegalStyleError(f"{what} not readable: {path}")
    return path


def _audit_path(config: PipelineConfig, out_dir: Path) -> Path | None:
    return (out_dir / config.gateway.audit_log) if config.gateway.audit_log else None


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config = _resolve_config(args)
    corpus_path = _require_readable(Path(args.corpus), "corpus")
    out_dir = Path(args.out)

    records = load_corpus_jsonl(corpus_path)
    docs = []
    split_failures = []
    for record in records:
        try:
            docs.append(split_sections(record["text"], doc_id=record["id"]))
        except LegalStyleError as exc:
            split_failures.append({"doc_id": record["id"], "stage": "split", "reason": str(exc)})
            logger.warning("section split failed for %s: %s", record["id"], exc)

    if args.n is not None:
        n = args.n
        if n > len(docs):
            raise LegalStyleError(f"--n {n} exceeds usable corpus size {len(docs)}")
    else:
        n = min(config.n_steps, len(docs))
        if n < config.n_steps:
            logger.info("corpus smaller than n_steps; synthesizing %d pairs", n)
    if n == 0:
        logger.warning("n = 0: writing an empty pairs file")

    with _OutputLock(out_dir):
        gateway = build_gateway(config, audit_path=_audit_path(config, out_dir))
        synthesizer = Synthesizer(
            gateway,
            SynthesisConfig(
                min_preservation=config.min_preservation, max_attempts=config.max_attempts
            ),
        )
        result = synthesizer.synthesize_corpus(docs, n, max_workers=config.max_workers)

        with open(out_dir / "pairs.jsonl", "w", encoding="utf-8") as fp:
            for pair in result.pairs:
                fp.write(pair_to_json(pair) + "\n")
        with open(out_dir / "skips.jsonl", "w", encoding="utf-8") as fp:
            for skip in split_failures:
                fp.write(json.dumps(skip, sort_keys=True, ensure_ascii=False) + "\n")
            for skip in result.skipped:
                fp.write(
                    json.dumps(
                        {"doc_id": skip.doc_id, "stage": skip.stage, "reason": skip.reason},
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        _write_run_manifest(out_dir, "synth", config, {"corpus": corpus_path})
    print(f"synth: {len(result.pairs)} pairs, {len(result.skipped)} skipped -> {out_dir}")
    return 0


# --------------------------------------------------------------------------
# learn
# --------------------------------------------------------------------------


def cmd_learn(args) -> int:
    config = _resolve_config(args)
    pairs_path = _require_readable(Path(args.pairs), "pairs file")
    out_dir = Path(args.out)

    pairs = []
    with open(pairs_path, "r", encoding="utf-8") as fp:
        for line in fp:
            if line.strip():
                pairs.append(pair_from_json(line))

    with _OutputLock(out_dir):
        gateway = build_gateway(config, audit_path=_audit_path(config, out_dir))
        pools = build_pools(pairs, gateway, state_dir=out_dir)
        _write_run_manifest(out_dir, "learn", config, {"pairs": pairs_path})
    print(f"learn: pools of {len(pools)}/{len(pools)} exemplars -> {out_dir}")
    return 0


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def cmd_train(args) -> int:
    config = _resolve_config(args)
    pools_dir = _require_readable(Path(args.pools), "pools directory")
    out_path = Path(args.out)

    pools = load_pools(pools_dir)
    model = train_from_pools(pools, default_catalog(), lam=config.lam, k=config.k)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out_path)
    print(f"train: model with k={len(model.selected_indices)} -> {out_path}")
    return 0


# --------------------------------------------------------------------------
# score
# --------------------------------------------------------------------------


def cmd_score(args) -> int:
    config = _resolve_config(args)
    model_path = _require_readable(Path(args.model), "model file")
    pools_dir = _require_readable(Path(args.pools), "pools directory")
    texts_path = _require_readable(Path(args.texts), "texts file")
    out_dir = Path(args.out)

    model = load_model(model_path)
    pools = load_pools(pools_dir)
    index = build_index(pools)
    records = load_corpus_jsonl(texts_path)

    with _OutputLock(out_dir):
        gateway = build_gateway(config, audit_path=_audit_path(config, out_dir))
        weights = DimensionWeights.default()
        written = []
        for record in records:
            report = score_document(
                record["text"],
                model,
                pools,
                index,
                gateway,
                weights=weights,
                x=config.x,
                y=config.y,
                obj_weight=config.fusion_objective,
                subj_weight=config.fusion_subjective,
            )
            payload = report.to_dict()
            payload["doc_id"] = record["id"]
            name = f"report_{record['id']}.json"
            (out_dir / name).write_text(
                json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
                encoding="utf-8",
            )
            written.append(name)
        _write_run_manifest(
            out_dir, "score", config,
            {"model": model_path, "texts": texts_path, "pools": pools_dir / "manifest.json"},
        )
    print(f"score: {len(written)} reports -> {out_dir}")
    return 0


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------


def _read_reports(reports_dir: Path) -> dict[str, dict]:
    reports = {}
    for path in sorted(reports_dir.glob("report_*.json")):
        raw = json.loads(path.read_text(encoding="utf-8"))
        reports[raw["doc_id"]] = raw
    if not reports:
        raise LegalStyleError(f"no report_*.json files in {reports_dir}")
    return reports


def _read_human_csv(path: Path, weights: DimensionWeights) -> dict[str, dict[str, float]]:
    """doc_id -> rater_id -> weighted score over the seven dimensions."""
    cells: dict[tuple[str, str], dict[str, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fp:
        reader = csv.DictReader(fp)
        required = {"doc_id", "rater_id", "dimension", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise LegalStyleError(f"human CSV must have columns {sorted(required)}")
        for row in reader:
            dim = row["dimension"]
            if dim not in DIMENSIONS:
                raise LegalStyleError(f"unknown dimension {dim!r} in human CSV")
            cells.setdefault((row["doc_id"], row["rater_id"]), {})[dim] = float(row["score"])
    weighted: dict[str, dict[str, float]] = {}
    for (doc_id, rater_id), scores in cells.items():
        missing = [d for d in DIMENSIONS if d not in scores]
        if missing:
            raise LegalStyleError(
                f"rater {rater_id!r} is missing dimensions {missing} for doc {doc_id!r}"
            )
        value = sum(weights[d] * scores[d] for d in DIMENSIONS)
        weighted.setdefault(doc_id, {})[rater_id] = value
    return weighted


def _series_metrics(system: dict[str, float], human: dict[str, float]) -> dict:
    paired = PairedScores.align(system, human)
    out: dict[str, object] = {}
    for name, fn in (("pearson", pearson), ("spearman", spearman), ("kendall", kendall_tau)):
        try:
            out[name] = fn(paired)
        except UndefinedCorrelation as exc:
            out[name] = None
            out[f"{name}_note"] = str(exc)
    try:
        std, var, cv = dispersion(list(system.values()))
        out.update({"std": std, "variance": var, "cv": cv})
    except (UndefinedCV, LegalStyleError) as exc:
        out.update({"std": None, "variance": None, "cv": None, "dispersion_note": str(exc)})
    return out


def cmd_eval(args) -> int:
    reports_dir = _require_readable(Path(args.reports), "reports directory")
    human_path = _require_readable(Path(args.human), "human CSV")
    out_dir = Path(args.out)

    weights = DimensionWeights.default()
    reports = _read_reports(reports_dir)
    weighted = _read_human_csv(human_path, weights)

    human_mean = {doc: float(np.mean(list(per_rater.values()))) for doc, per_rater in weighted.items()}
    series = {
        "fused": {doc: raw["fused"] for doc, raw in reports.items()},
        "objective": {doc: raw["objective"] for doc, raw in reports.items()},
        "subjective": {doc: raw["subjective"] for doc, raw in reports.items()},
    }

    with _OutputLock(out_dir):
        metrics: dict[str, object] = {"n_documents": len(reports), "series": {}}
        for name, values in series.items():
            metrics["series"][name] = _series_metrics(values, human_mean)
        try:
            std, var, cv = dispersion(list(human_mean.values()))
            metrics["series"]["human"] = {"std": std, "variance": var, "cv": cv}
        except (UndefinedCV, LegalStyleError) as exc:
            metrics["series"]["human"] = {"std": None, "variance": None, "cv": None,
                                          "dispersion_note": str(exc)}

        raters = sorted({r for per_rater in weighted.values() for r in per_rater})
        if len(raters) >= 2:
            docs = sorted(weighted)
            grid = np.full((len(raters), len(docs)), np.nan)
            for j, doc in enumerate(docs):
                for i, rater in enumerate(raters):
                    if rater in weighted[doc]:
                        grid[i, j] = weighted[doc][rater]
            try:
                metrics["krippendorff_alpha"] = krippendorff_alpha(AnnotationMatrix(grid))
            except LegalStyleError as exc:
                metrics["krippendorff_alpha"] = None
                metrics["krippendorff_note"] = str(exc)
        else:
            metrics["krippendorff_alpha"] = None
            metrics["krippendorff_note"] = "fewer than two raters"

        (out_dir / "metrics.json").write_text(
            json.dumps(metrics, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
            encoding="utf-8",
        )
        (out_dir / "metrics.txt").write_text(_format_table(metrics), encoding="utf-8")
    print((out_dir / "metrics.txt").read_text(encoding="utf-8"))
    return 0


def _format_table(metrics: dict) -> str:
    def cell(value) -> str:
        return f"{value:.4f}" if isinstance(value, float) else "-"

    lines = [
        f"documents: {metrics['n_documents']}",
        f"krippendorff_alpha: {cell(metrics.get('krippendorff_alpha'))}",
        "",
        f"{'series':<12} {'r':>8} {'rho':>8} {'tau':>8} {'std':>8} {'variance':>9} {'cv':>8}",
    ]
    for name in ("fused", "objective", "subjective", "human"):
        row = metrics["series"].get(name, {})
        lines.append(
            f"{name:<12} {cell(row.get('pearson')):>8} {cell(row.get('spearman')):>8} "
            f"{cell(row.get('kendall')):>8} {cell(row.get('std')):>8} "
            f"{cell(row.get('variance')):>9} {cell(row.get('cv')):>8}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="legalstyle",
        description="Reference-free stylistic fidelity scoring for Chinese legal text",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML config file")
    common.add_argument("--seed", type=int, default=None, help="mock-backend seed override")
    common.add_argument("--backend", choices=("mock", "live"), default=None)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="build contrastive pairs from a corpus")
    p.add_argument("--corpus", required=True, help="document JSONL ({id, text} per line)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=None, help="number of pairs (default: config)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learn", parents=[common], help="build experience pools from pairs")
    p.add_argument("--pairs", required=True, help="pairs JSONL from synth")
    p.add_argument("--out", required=True, help="pools output directory")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("train", parents=[common], help="fit the feature regression model")
    p.add_argument("--pools", required=True, help="pools directory from learn")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="score texts against the model and pools")
    p.add_argument("--model", required=True)
    p.add_argument("--pools", required=True)
    p.add_argument("--texts", required=True, help="JSONL of {id, text} to score")
    p.add_argument("--out", required=True, help="reports output directory")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="correlate reports with human scores")
    p.add_argument("--reports", required=True, help="directory of report_*.json")
    p.add_argument("--human", required=True, help="CSV: doc_id,rater_id,dimension,score")
    p.add_argument("--out", required=True, help="metrics output directory")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LegalStyleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
