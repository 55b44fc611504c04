"""Command-line orchestration: ingestion, background fit, detection, trials, metrics."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from datetime import date as Date, timedelta
from pathlib import Path

import numpy as np

from .assign import assign_corpus_window, write_assignments_csv
from .corpus import CorpusError, LocationTable, encode_records, load_corpus, read_records
from .evaluation import (
    DaySummary,
    TrialSummary,
    calibrate_threshold,
    detection_metrics,
    summarize_trial,
    write_event_day_csv,
    write_threshold_csv,
)
from .lda import fit_lda, read_topics_csv, write_topics_csv
from .scan import build_baseline_cube, build_count_cube, randomization_test, scan_all
from .simulate import (
    BackgroundModel,
    InjectionSpec,
    PipelineConfig,
    fit_day_topics,
    prepare_background,
    run_trial,
)

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Bad usage or configuration; maps to exit code 1."""


# Flat key = value config file. Types: i int, f float, s string, b bool,
# d ISO date, F comma-separated floats, A float or "auto" (meaning: derive).
_SCHEMA = {
    "records": "s",
    "locations": "s",
    "output_dir": "s",
    "topics": "s",
    "background_end": "d",
    "event_start": "d",
    "label": "s",
    "k": "i",
    "k_prime": "i",
    "alpha": "A",
    "beta": "A",
    "window_days": "i",
    "w_max": "i",
    "baseline_days": "i",
    "n_max": "i",
    "b_min": "f",
    "min_count": "i",
    "background_sweeps": "i",
    "window_sweeps": "i",
    "refit_sweeps": "i",
    "assign_max_iters": "i",
    "assign_tol": "f",
    "contrastive": "b",
    "n_jobs": "i",
    "seed": "i",
    "replicas": "i",
    "trials": "i",
    "null_trials": "i",
    "duration": "i",
    "region_size": "i",
    "slope": "f",
    "fp_targets": "F",
}

_DEFAULTS = {
    "output_dir": "out",
    "k": 25,
    "k_prime": 25,
    "alpha": None,
    "beta": None,
    "window_days": 3,
    "w_max": 3,
    "baseline_days": 30,
    "n_max": 30,
    "b_min": 0.5,
    "min_count": 1,
    "background_sweeps": 500,
    "window_sweeps": 500,
    "refit_sweeps": 500,
    "assign_max_iters": 100,
    "assign_tol": 1e-6,
    "contrastive": True,
    "n_jobs": 1,
    "seed": 0,
    "replicas": 0,
    "trials": 10,
    "null_trials": 10,
    "duration": 30,
    "region_size": 30,
    "slope": 20.0,
    "fp_targets": [52.0, 24.0, 12.0, 6.0, 2.0, 1.0],
}


def _parse_value(key: str, raw: str):
    kind = _SCHEMA[key]
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    try:
        if kind == "i":
            return int(raw)
        if kind == "f":
            return float(raw)
        if kind == "s":
            return raw
        if kind == "b":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "d":
            return Date.fromisoformat(raw)
        if kind == "A":
            return None if raw.lower() == "auto" else float(raw)
        if kind == "F":
            return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc
    raise AssertionError(f"unhandled kind {kind}")


def load_config(path) -> dict:
    """Parse a flat key = value config file; unknown keys are rejected by name."""
    config = dict(_DEFAULTS)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}: line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{path}: line {lineno}: unknown config key: {key}")
        config[key] = _parse_value(key, raw)
    return config


def _require(config: dict, *keys: str) -> None:
    missing = [k for k in keys if config.get(k) in (None, "")]
    if missing:
        raise ConfigError("missing required config keys: " + ", ".join(missing))


def _pipeline_config(config: dict) -> PipelineConfig:
    return PipelineConfig(
        k=config["k"],
        k_prime=config["k_prime"],
        alpha=config["alpha"],
        beta=config["beta"],
        window_days=config["window_days"],
        w_max=config["w_max"],
        baseline_days=config["baseline_days"],
        n_max=config["n_max"],
        b_min=config["b_min"],
        min_count=config["min_count"],
        background_sweeps=config["background_sweeps"],
        window_sweeps=config["window_sweeps"],
        refit_sweeps=config["refit_sweeps"],
        assign_max_iters=config["assign_max_iters"],
        assign_tol=config["assign_tol"],
        contrastive=config["contrastive"],
        n_jobs=config["n_jobs"],
        seed=config["seed"],
    )


def _check_input(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CorpusError(f"input file not found: {p}")
    return p


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_report_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["day", "score", "topic", "center", "n", "W", "C", "B", "relative_risk", "p_value", "top_words"]
        )
        writer.writerows(rows)


def _report_row(day_iso, result, center_id, k, topics, vocabulary, p_value=None):
    combined = k + result.topic
    top_words = "|".join(topics.top_terms(combined, vocabulary, 20))
    return [
        day_iso,
        _fmt(result.score),
        combined,
        center_id,
        result.region.n_neighbors,
        result.region.duration,
        _fmt(result.count),
        _fmt(result.baseline),
        _fmt(result.relative_risk),
        _fmt(p_value),
        top_words,
    ]


# --- subcommands -------------------------------------------------------------


def _cmd_learn_background(config: dict) -> int:
    _require(config, "records", "locations")
    locations = LocationTable.from_csv(_check_input(config["locations"]))
    corpus = load_corpus(
        _check_input(config["records"]),
        locations,
        min_count=config["min_count"],
        background_end=config.get("background_end"),
    )
    end = config.get("background_end")
    end_index = (end - corpus.epoch).days if end else None
    docs = [d for d in corpus.documents if end_index is None or d.day_index < end_index]
    if not docs:
        raise CorpusError("background partition is empty")
    k = config["k"]
    topics, _ = fit_lda(
        docs,
        k,
        len(corpus.vocabulary),
        alpha=config["alpha"],
        beta=config["beta"],
        sweeps=config["background_sweeps"],
        seed=np.random.SeedSequence([config["seed"], 0]),
    )
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "background_topics.csv"
    write_topics_csv(
        topics,
        corpus.vocabulary,
        out,
        metadata={
            "alpha": config["alpha"] if config["alpha"] is not None else 1.0 / k,
            "beta": config["beta"] if config["beta"] is not None else 1.0 / len(corpus.vocabulary),
            "seed": config["seed"],
            "sweeps": config["background_sweeps"],
            "k": k,
            "epoch": corpus.epoch.isoformat(),
            "min_count": config["min_count"],
        },
    )
    print(f"wrote {out} ({k} topics over {len(corpus.vocabulary)} terms)")
    return 0


def _cmd_detect(config: dict, day_str: str, top: int | None, assignments_out: str | None) -> int:
    _require(config, "records", "locations")
    try:
        day_date = Date.fromisoformat(day_str)
    except ValueError as exc:
        raise ConfigError(f"--day: {exc}") from exc
    topics_path = config.get("topics") or str(Path(config["output_dir"]) / "background_topics.csv")
    background, vocabulary, meta = read_topics_csv(_check_input(topics_path))
    locations = LocationTable.from_csv(_check_input(config["locations"]))
    records = read_records(_check_input(config["records"]))
    if not records:
        raise CorpusError("records file is empty")
    epoch = Date.fromisoformat(meta["epoch"]) if "epoch" in meta else min(r.date for r in records)
    day = (day_date - epoch).days
    if day < 0:
        raise CorpusError(f"--day {day_str} precedes the corpus epoch {epoch}")

    docs, _, _ = encode_records(records, vocabulary, locations, epoch)
    pcfg = _pipeline_config(config)
    model = BackgroundModel(vocabulary, background, epoch)
    window = [d for d in docs if day - pcfg.window_days + 1 <= d.day_index <= day]
    if not window:
        raise CorpusError(f"no documents in the {pcfg.window_days}-day window ending {day_str}")
    topics = fit_day_topics(window, model, pcfg, day)
    assigned = assign_corpus_window(
        docs,
        topics,
        day,
        baseline_days=pcfg.baseline_days,
        window_days=pcfg.w_max,
        alpha=pcfg.alpha,
        max_iters=pcfg.assign_max_iters,
        tol=pcfg.assign_tol,
        n_jobs=pcfg.n_jobs,
    )
    span = (day - (pcfg.baseline_days + pcfg.w_max - 1), day)
    if span[0] < 0:
        raise CorpusError(f"detection day {day_str} lacks {pcfg.baseline_days}-day history")
    cube = build_count_cube(assigned, pcfg.k_prime, span, len(locations))
    baselines = build_baseline_cube(cube, pcfg.baseline_days)
    results = scan_all(
        cube,
        baselines,
        locations.neighbor_order(),
        pcfg.n_max,
        pcfg.w_max,
        day,
        b_min=pcfg.b_min,
        limit=top,
    )
    p_value = None
    if config["replicas"] > 0 and results:
        p_value = randomization_test(
            results[0].score,
            baselines,
            locations.neighbor_order(),
            pcfg.n_max,
            pcfg.w_max,
            config["replicas"],
            seed=np.random.SeedSequence([pcfg.seed, 9, day]),
            b_min=pcfg.b_min,
        )
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"detect_{day_str}.csv"
    rows = [
        _report_row(
            day_str,
            r,
            locations.ids[r.region.center],
            pcfg.k,
            topics,
            vocabulary,
            p_value if i == 0 else None,
        )
        for i, r in enumerate(results)
    ]
    _write_report_csv(out, rows)
    if assignments_out:
        write_assignments_csv(assigned, locations, assignments_out, epoch=epoch)
    best = results[0]
    print(f"wrote {out}; top score {best.score:.4f} (topic {pcfg.k + best.topic}, p={_fmt(p_value) or 'n/a'})")
    return 0


def _trial_paths(out_dir: Path, name: str) -> tuple[Path, Path, Path]:
    trials_dir = out_dir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    return (
        trials_dir / f"{name}.report.csv",
        trials_dir / f"{name}.truth.jsonl",
        trials_dir / f"{name}.summary.jsonl",
    )


def _write_trial_outputs(name, trial, locations, vocabulary, k, epoch, out_dir: Path) -> None:
    report_path, truth_path, summary_path = _trial_paths(out_dir, name)

    rows = []
    for rec in trial.days:
        day_iso = (epoch + timedelta(days=rec.day)).isoformat()
        r = rec.result
        combined = k + r.topic
        order = np.argsort(-rec.detected_phi, kind="stable")[:20]
        top_words = "|".join(vocabulary.terms[i] for i in order)
        rows.append(
            [
                day_iso,
                _fmt(r.score),
                combined,
                locations.ids[r.region.center],
                r.region.n_neighbors,
                r.region.duration,
                _fmt(r.count),
                _fmt(r.baseline),
                _fmt(r.relative_risk),
                "",
                top_words,
            ]
        )
    _write_report_csv(report_path, rows)

    with open(truth_path, "w", encoding="utf-8") as fh:
        dist = {}
        if trial.injected_distribution is not None:
            dist = {
                vocabulary.terms[i]: float(p)
                for i, p in enumerate(trial.injected_distribution)
                if p > 0
            }
        fh.write(json.dumps({"injected_word_distribution": dist}, sort_keys=True) + "\n")
        for rec in trial.days:
            fh.write(
                json.dumps(
                    {
                        "day": (epoch + timedelta(days=rec.day)).isoformat(),
                        "event_active": rec.event_active,
                        "true_locations": [locations.ids[i] for i in rec.true_locations],
                        "injected_doc_ids": sorted(rec.injected_window_ids),
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    summary = summarize_trial(trial)
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "trial": name,
                    "null": summary.is_null,
                    "event_start": summary.event_start,
                    "event_end": summary.event_end,
                },
                sort_keys=True,
            )
            + "\n"
        )
        for d in summary.days:
            fh.write(
                json.dumps(
                    {
                        "day": d.day,
                        "event_day": d.event_day,
                        "score": d.score,
                        "hd": d.hellinger_distance,
                        "so": d.spatial_overlap,
                        "do": d.document_overlap,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def _cmd_simulate(config: dict) -> int:
    _require(config, "records", "locations", "label", "background_end", "event_start")
    locations = LocationTable.from_csv(_check_input(config["locations"]))
    records = read_records(_check_input(config["records"]))
    if not records:
        raise CorpusError("records file is empty")
    pcfg = _pipeline_config(config)
    epoch = min(r.date for r in records)
    event_start_day = (config["event_start"] - epoch).days
    if event_start_day < pcfg.baseline_days + pcfg.w_max - 1:
        raise CorpusError(
            f"event_start {config['event_start']} leaves no room for the "
            f"{pcfg.baseline_days}-day baseline"
        )
    label = config["label"]
    background = prepare_background(
        records, locations, pcfg, background_end=config["background_end"], holdout_label=label
    )
    out_dir = Path(config["output_dir"])
    detect_days = range(event_start_day, event_start_day + config["duration"])
    center_rng = np.random.default_rng(np.random.SeedSequence([pcfg.seed, 2]))

    for i in range(config["trials"]):
        center = int(center_rng.integers(0, len(locations)))
        inj_seed = int(np.random.SeedSequence([pcfg.seed, 3, i]).generate_state(1)[0])
        trial_seed = int(np.random.SeedSequence([pcfg.seed, 4, i]).generate_state(1)[0])
        spec = InjectionSpec(
            start_day=event_start_day,
            center_location=center,
            duration_days=config["duration"],
            region_size=config["region_size"],
            daily_rate_slope=config["slope"],
            seed=inj_seed,
            category_label=label,
        )
        trial = run_trial(
            records,
            locations,
            dataclasses.replace(pcfg, seed=trial_seed),
            background_end=config["background_end"],
            injection=spec,
            holdout_label=label,
            background=background,
            trial_id=f"trial{i:03d}",
        )
        _write_trial_outputs(
            f"trial{i:03d}", trial, locations, background.vocabulary, pcfg.k, epoch, out_dir
        )
        print(f"trial{i:03d}: max score {max(d.result.score for d in trial.days):.4f}")

    for j in range(config["null_trials"]):
        trial_seed = int(np.random.SeedSequence([pcfg.seed, 4, j]).generate_state(1)[0])
        trial = run_trial(
            records,
            locations,
            dataclasses.replace(pcfg, seed=trial_seed),
            background_end=config["background_end"],
            injection=None,
            holdout_label=label,
            detect_days=detect_days,
            background=background,
            trial_id=f"null{j:03d}",
        )
        _write_trial_outputs(
            f"null{j:03d}", trial, locations, background.vocabulary, pcfg.k, epoch, out_dir
        )
        print(f"null{j:03d}: max score {max(d.result.score for d in trial.days):.4f}")
    return 0


def _read_summaries(out_dir: Path) -> list[TrialSummary]:
    trials_dir = out_dir / "trials"
    paths = sorted(trials_dir.glob("*.summary.jsonl"))
    if not paths:
        raise CorpusError(f"no trial summaries under {trials_dir}")
    summaries = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            days = []
            for line in fh:
                obj = json.loads(line)
                days.append(
                    DaySummary(
                        day=obj["day"],
                        event_day=obj["event_day"],
                        score=obj["score"],
                        hellinger_distance=obj["hd"],
                        spatial_overlap=obj["so"],
                        document_overlap=obj["do"],
                    )
                )
        summaries.append(TrialSummary(header["event_start"], header["event_end"], tuple(days)))
    return summaries


def _cmd_evaluate(config: dict) -> int:
    out_dir = Path(config["output_dir"])
    summaries = _read_summaries(out_dir)
    nulls = [s for s in summaries if s.is_null]
    injected = [s for s in summaries if not s.is_null]
    if not nulls:
        raise CorpusError("no null trials found; cannot calibrate thresholds")
    if not injected:
        raise CorpusError("no injected trials found")
    scores = [d.score for s in nulls for d in s.days]
    thresholds = {fp: calibrate_threshold(scores, fp) for fp in config["fp_targets"]}
    report = detection_metrics(injected, thresholds)
    fp_path = out_dir / "metrics_fp.csv"
    day_path = out_dir / "metrics_event_day.csv"
    write_threshold_csv(report, fp_path)
    write_event_day_csv(report, day_path)
    for row in report.by_threshold:
        mdd = "n/a" if row.mean_days_to_detect is None else f"{row.mean_days_to_detect:.2f}"
        print(
            f"fp/year {row.fp_per_year:g}: threshold {row.threshold:.4f}, "
            f"detected {row.fraction_detected:.0%}, days-to-detect {mdd}"
        )
    print(f"wrote {fp_path} and {day_path}")
    return 0


# --- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to exit code 1
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="semscan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="override output_dir")

    p = sub.add_parser("learn-background", help="fit and save the background topics")
    common(p)

    p = sub.add_parser("detect", help="run one detection day against saved background topics")
    common(p)
    p.add_argument("--day", required=True, help="detection day, YYYY-MM-DD")
    p.add_argument("--top", type=int, default=None, help="limit ranked rows in the report")
    p.add_argument("--replicas", type=int, default=None, help="randomization replicas for the p-value")
    p.add_argument("--assignments-out", default=None, help="also dump the assignment audit CSV")

    p = sub.add_parser("simulate", help="run held-out-and-inject detection trials")
    common(p)
    p.add_argument("--label", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--null-trials", type=int, default=None)

    p = sub.add_parser("evaluate", help="aggregate trial outputs into metric tables")
    common(p)

    p = sub.add_parser("pipeline", help="learn-background, simulate, and evaluate in one go")
    common(p)
    p.add_argument("--label", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--null-trials", type=int, default=None)

    return parser


def _apply_overrides(config: dict, args: argparse.Namespace) -> None:
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["output_dir"] = args.out
    for attr, key in (("label", "label"), ("trials", "trials"), ("null_trials", "null_trials"), ("replicas", "replicas")):
        if getattr(args, attr, None) is not None:
            config[key] = getattr(args, attr)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = load_config(args.config)
        _apply_overrides(config, args)
        if args.command == "learn-background":
            return _cmd_learn_background(config)
        if args.command == "detect":
            return _cmd_detect(config, args.day, args.top, args.assignments_out)
        if args.command == "simulate":
            return _cmd_simulate(config)
        if args.command == "evaluate":
            return _cmd_evaluate(config)
        if args.command == "pipeline":
            status = _cmd_learn_background(config)
            if status == 0:
                status = _cmd_simulate(config)
            if status == 0:
                status = _cmd_evaluate(config)
            return status
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
