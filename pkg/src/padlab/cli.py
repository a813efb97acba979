"""Config-driven command line: dataset synthesis, experiment execution,
report emission, and the canned study suites.

Verbs: synth-data, run, sweep, figure1, replay. Exit codes: 0 success,
2 config error, 3 numerical-integrity abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

import numpy as np

from ._kernels import BACKEND
from .autograd import SGD
from .config import _resolve_path_for_sweep, effective_seed, parse_config, validate_config
from .datasets import SplitData, make_blobs, make_tiny_images
from .errors import (
    ConfigurationError,
    InputError,
    NumericalIntegrityError,
    PadlabError,
    UsageError,
)
from .models import SegmentedModel, build_mlp, build_smallcnn, save_checkpoint
from .noise import NoisyDataset, load_dataset, make_noisy_dataset, noise_report, save_dataset
from .report import RunReport, emit_figure_data, write_json
from .spectral import GateMode
from .training import AdamConfig, PaddlesSchedule, SGDConfig, run_paddles, train_phase

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _log(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------


def _build_split(cfg: dict) -> SplitData:
    ds_cfg = cfg["dataset"]
    seed = effective_seed(cfg["seed"], "dataset", ds_cfg["seed"])
    if ds_cfg["kind"] == "blobs":
        return make_blobs(
            ds_cfg["n"], ds_cfg["k"], d=ds_cfg["d"], seed=seed,
            n_test=ds_cfg["n_test"], separation=ds_cfg["separation"],
        )
    if ds_cfg["kind"] == "tiny-images":
        return make_tiny_images(
            ds_cfg["n"], ds_cfg["k"], h=ds_cfg["height"], w=ds_cfg["width"],
            seed=seed, n_test=ds_cfg["n_test"], pixel_noise=ds_cfg["pixel_noise"],
        )
    loaded = load_dataset(ds_cfg["path"])
    if ds_cfg["test_path"]:
        test = load_dataset(ds_cfg["test_path"])
        test_x, test_y = test.features, test.clean_labels
    else:
        test_x = np.zeros((0,) + loaded.features.shape[1:])
        test_y = np.zeros(0, dtype=np.int64)
    return SplitData(loaded.features, loaded.clean_labels, test_x, test_y, loaded.num_classes)


def _apply_noise(cfg: dict, split: SplitData) -> NoisyDataset:
    noise_cfg = cfg["noise"]
    if cfg["dataset"]["kind"] == "path" and noise_cfg["kind"] == "none":
        loaded = load_dataset(cfg["dataset"]["path"])
        return loaded
    seed = effective_seed(cfg["seed"], "noise", noise_cfg["seed"])
    return make_noisy_dataset(
        split.train_x, split.train_y, split.num_classes,
        noise_cfg["kind"], noise_cfg["epsilon"], seed,
    )


def _build_model(cfg: dict, split: SplitData) -> SegmentedModel:
    model_cfg = cfg["model"]
    seed = effective_seed(cfg["seed"], "model", model_cfg["seed"])
    if model_cfg["kind"] == "mlp":
        widths = model_cfg["widths"]
        feat_dim = int(np.prod(split.train_x.shape[1:]))
        if widths[0] != feat_dim:
            raise ConfigurationError(
                f"model.widths: first width {widths[0]} != feature dimension {feat_dim}"
            )
        return build_mlp(widths, split.num_classes, seed, model_cfg["gate_index"])
    if split.train_x.ndim != 4:
        raise ConfigurationError(
            f"model.kind: smallcnn needs image features, got shape {split.train_x.shape}"
        )
    _, c, h, w = split.train_x.shape
    if c != model_cfg["in_channels"]:
        raise ConfigurationError(
            f"model.in_channels: {model_cfg['in_channels']} != data channels {c}"
        )
    return build_smallcnn(
        model_cfg["channels"], split.num_classes, (h, w), seed,
        in_channels=c, gate_index=model_cfg["gate_index"],
    )


def _build_schedule(cfg: dict, model: SegmentedModel) -> PaddlesSchedule:
    s = cfg["schedule"]
    opt = s["optimizer"]
    return PaddlesSchedule(
        t_a=s["t_a"],
        t_p=s["t_p"],
        t_0=s["t_0"],
        suffix_epochs=list(s["suffix_epochs"]),
        gate_index=model.gate_index,
        batch_size=s["batch_size"],
        seed=effective_seed(cfg["seed"], "schedule", s["seed"]),
        optimizer=SGDConfig(opt["lr"], opt["momentum"], opt["weight_decay"]),
        pes_optimizer=AdamConfig(s["pes_optimizer"]["lr"]),
    )


def _fresh_sgd(schedule: PaddlesSchedule, model: SegmentedModel) -> SGD:
    cfg = schedule.optimizer
    return SGD(model.trainable_parameters(), lr=cfg.lr, momentum=cfg.momentum,
               weight_decay=cfg.weight_decay)


def _write_dataset_artifacts(cfg: dict, ds: NoisyDataset, outdir: Path) -> None:
    if cfg["dataset"]["kind"] == "path":
        write_json(outdir / "dataset_ref.json", {"path": cfg["dataset"]["path"]})
    else:
        save_dataset(ds, outdir / "dataset")
    write_json(outdir / "noise_report.json", noise_report(ds))


def _seeds_record(cfg: dict) -> dict:
    return {
        "global": cfg["seed"],
        "dataset": effective_seed(cfg["seed"], "dataset", cfg["dataset"]["seed"]),
        "noise": effective_seed(cfg["seed"], "noise", cfg["noise"]["seed"]),
        "model": effective_seed(cfg["seed"], "model", cfg["model"]["seed"]),
        "schedule": effective_seed(cfg["seed"], "schedule", cfg["schedule"]["seed"]),
        "select": effective_seed(cfg["seed"], "select", cfg["select"]["seed"]),
    }


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def run_single(cfg: dict, outdir: Path, quiet: bool = False) -> dict:
    started = time.time()
    split = _build_split(cfg)
    ds = _apply_noise(cfg, split)
    model = _build_model(cfg, split)
    schedule = _build_schedule(cfg, model)
    _log(quiet, f"single run: {len(ds)} samples, model {model.spec.kind}, "
                f"gate at {model.gate_index}, backend {BACKEND}")
    report = run_paddles(
        model, ds, schedule, split.test_x, split.test_y,
        select_sigma=cfg["select"]["sigma"],
        select_seed=effective_seed(cfg["seed"], "select", cfg["select"]["seed"]),
    )
    _write_dataset_artifacts(cfg, ds, outdir)
    save_checkpoint(model, outdir / "model")
    report.save_csv(outdir / "report.csv")
    summary = {
        "study": "single-run",
        "schedule": schedule.echo(),
        "final": report.final,
        "epochs_logged": len(report.rows),
        "seeds": _seeds_record(cfg),
        "backend": BACKEND,
        "wall_time_s": round(time.time() - started, 3),
    }
    write_json(outdir / "summary.json", summary)
    return summary


_FIGURE1_ARMS = (
    ("full", None),
    ("detach_amplitude", GateMode.DETACH_AMPLITUDE),
    ("detach_phase", GateMode.DETACH_PHASE),
)


def run_figure1(cfg: dict, outdir: Path, quiet: bool = False) -> dict:
    """Three training arms (full / phase-only / amplitude-only) on one dataset."""
    started = time.time()
    split = _build_split(cfg)
    ds = _apply_noise(cfg, split)
    epochs = cfg["figure1"]["epochs"]
    reports: dict[str, RunReport] = {}
    for arm, mode in _FIGURE1_ARMS:
        model = _build_model(cfg, split)
        schedule = _build_schedule(cfg, model)
        _log(quiet, f"figure1 arm {arm}: {epochs} epochs")
        report = RunReport(header={"arm": arm, "schedule": schedule.echo()})
        optimizer = _fresh_sgd(schedule, model)
        train_phase(
            model, ds, epochs, mode, optimizer,
            batch_size=schedule.batch_size, seed=schedule.seed,
            phase_tag=arm, report=report, test_x=split.test_x, test_y=split.test_y,
        )
        reports[arm] = report
        report.save_csv(outdir / f"report_{arm}.csv")
    figure_csv, crossings = emit_figure_data(reports)
    (outdir / "figure_data.csv").write_text(figure_csv)
    _write_dataset_artifacts(cfg, ds, outdir)
    summary = {
        "study": "figure1",
        "epochs": epochs,
        "crossings": crossings,
        "final_rows": {
            arm: {
                "acc_clean_subset": reports[arm].rows[-1].acc_clean_subset,
                "acc_noisy_subset": reports[arm].rows[-1].acc_noisy_subset,
                "test_acc": reports[arm].rows[-1].test_acc,
            }
            for arm, _ in _FIGURE1_ARMS
        },
        "seeds": _seeds_record(cfg),
        "backend": BACKEND,
        "wall_time_s": round(time.time() - started, 3),
    }
    write_json(outdir / "summary.json", summary)
    return summary


def run_ablation(cfg: dict, outdir: Path, quiet: bool = False) -> dict:
    """Plain training vs the staged schedule with and without suffix training."""
    started = time.time()
    split = _build_split(cfg)
    ds = _apply_noise(cfg, split)
    base_schedule = _build_schedule(cfg, _build_model(cfg, split))
    total_epochs = (base_schedule.t_a + base_schedule.t_p + base_schedule.t_0
                    + sum(base_schedule.suffix_epochs))
    arms = {}
    for arm in ("plain", "paddles_base", "paddles"):
        model = _build_model(cfg, split)
        schedule = _build_schedule(cfg, model)
        _log(quiet, f"ablation arm {arm}")
        if arm == "plain":
            schedule = PaddlesSchedule(
                t_a=total_epochs, t_p=0, t_0=0, suffix_epochs=[],
                gate_index=model.gate_index, batch_size=schedule.batch_size,
                seed=schedule.seed, optimizer=schedule.optimizer,
                pes_optimizer=schedule.pes_optimizer,
            )
        elif arm == "paddles_base":
            schedule = PaddlesSchedule(
                t_a=schedule.t_a, t_p=schedule.t_p, t_0=schedule.t_0, suffix_epochs=[],
                gate_index=model.gate_index, batch_size=schedule.batch_size,
                seed=schedule.seed, optimizer=schedule.optimizer,
                pes_optimizer=schedule.pes_optimizer,
            )
        report = run_paddles(
            model, ds, schedule, split.test_x, split.test_y,
            select_sigma=cfg["select"]["sigma"],
            select_seed=effective_seed(cfg["seed"], "select", cfg["select"]["seed"]),
        )
        report.save_csv(outdir / f"report_{arm}.csv")
        arms[arm] = report.final
    _write_dataset_artifacts(cfg, ds, outdir)
    summary = {
        "study": "ablation",
        "arms": arms,
        "seeds": _seeds_record(cfg),
        "backend": BACKEND,
        "wall_time_s": round(time.time() - started, 3),
    }
    write_json(outdir / "summary.json", summary)
    return summary


def run_sweep(cfg: dict, outdir: Path, quiet: bool = False) -> dict:
    started = time.time()
    sweep = cfg["sweep"]
    objective = sweep["objective"]
    results = []
    for i, value in enumerate(sweep["values"]):
        sub_cfg = copy.deepcopy(cfg)
        sub_cfg["study"] = "single-run"
        node, leaf = _resolve_path_for_sweep(sub_cfg, sweep["path"])
        node[leaf] = value
        sub_cfg = validate_config(sub_cfg)
        subdir = outdir / f"sweep_{i:03d}"
        subdir.mkdir(parents=True, exist_ok=True)
        _log(quiet, f"sweep {sweep['path']} = {value}")
        summary = run_single(sub_cfg, subdir, quiet=quiet)
        results.append({
            "value": value,
            "directory": subdir.name,
            "objective": summary["final"][objective],
            "final": summary["final"],
        })
    best = max(range(len(results)), key=lambda i: results[i]["objective"])
    summary = {
        "study": "sweep",
        "path": sweep["path"],
        "objective": objective,
        "results": results,
        "best_index": best,
        "best_value": results[best]["value"],
        "seeds": _seeds_record(cfg),
        "backend": BACKEND,
        "wall_time_s": round(time.time() - started, 3),
    }
    write_json(outdir / "summary.json", summary)
    return summary


def run_synth_data(cfg: dict, outdir: Path, quiet: bool = False) -> dict:
    split = _build_split(cfg)
    ds = _apply_noise(cfg, split)
    save_dataset(ds, outdir / "dataset")
    rep = noise_report(ds)
    write_json(outdir / "noise_report.json", rep)
    _log(quiet, f"dataset written to {outdir / 'dataset'} "
                f"(disagreement {rep['disagreement_rate']:.4f})")
    return rep


_STUDY_RUNNERS = {
    "single-run": run_single,
    "figure1": run_figure1,
    "ablation": run_ablation,
    "sweep": run_sweep,
}


def run_experiment(cfg: dict, outdir: Path, quiet: bool = False) -> dict:
    """Execute the study named by the config and write its artifacts."""
    outdir.mkdir(parents=True, exist_ok=True)
    failed_marker = outdir / "FAILED.json"
    if failed_marker.exists():
        failed_marker.unlink()
    write_json(outdir / "replay.json", {"config": cfg})
    try:
        return _STUDY_RUNNERS[cfg["study"]](cfg, outdir, quiet=quiet)
    except Exception as exc:
        write_json(failed_marker, {"error": type(exc).__name__, "message": str(exc)})
        write_json(outdir / "summary.json", {
            "status": "aborted",
            "error": type(exc).__name__,
            "message": str(exc),
        })
        raise


# ---------------------------------------------------------------------------
# argparse front end
# ---------------------------------------------------------------------------


def _load_config(path: str, seed_override: int | None, out_override: str | None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    cfg = parse_config(text)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if out_override:
        cfg["output_dir"] = out_override
    return cfg


class _IOFailure(Exception):
    pass


def _outdir(cfg: dict) -> Path:
    if not cfg.get("output_dir"):
        raise ConfigurationError("output_dir: not set (use --out or the config key)")
    return Path(cfg["output_dir"])


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="global seed override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="padlab",
        description="phase/amplitude disentangled early-stopping laboratory",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_text in (
        ("synth-data", "generate and serialize a noisy dataset"),
        ("run", "execute a single experiment"),
        ("sweep", "execute a parameter sweep"),
        ("figure1", "run the three-arm training-curve study"),
    ):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("config", help="path to a JSON experiment config")
        _add_common(p)
    p = sub.add_parser("replay", help="re-execute a recorded run")
    p.add_argument("directory", help="output directory of a previous run")
    _add_common(p)
    return parser


_VERB_STUDIES = {"run": "single-run", "sweep": "sweep", "figure1": "figure1"}


def _dispatch(args: argparse.Namespace) -> int:
    if args.verb == "replay":
        replay_path = Path(args.directory) / "replay.json"
        try:
            payload = json.loads(replay_path.read_text())
        except OSError as exc:
            raise _IOFailure(str(exc)) from exc
        cfg = validate_config(payload["config"])
        if args.seed is not None:
            cfg["seed"] = args.seed
        outdir = Path(args.out) if args.out else Path(str(args.directory) + "_replay")
        cfg["output_dir"] = str(outdir)
        run_experiment(cfg, outdir, quiet=args.quiet)
        return EXIT_OK

    cfg = _load_config(args.config, args.seed, args.out)
    if args.verb == "synth-data":
        outdir = _outdir(cfg)
        outdir.mkdir(parents=True, exist_ok=True)
        run_synth_data(cfg, outdir, quiet=args.quiet)
        return EXIT_OK

    expected = _VERB_STUDIES[args.verb]
    if cfg["study"] != expected:
        if cfg["study"] != "single-run":
            raise ConfigurationError(
                f"study: config says {cfg['study']!r} but the verb expects {expected!r}"
            )
        cfg["study"] = expected
        cfg = validate_config(cfg)
    run_experiment(cfg, _outdir(cfg), quiet=args.quiet)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except NumericalIntegrityError as exc:
        print(f"error: numerical integrity: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, InputError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IOFailure as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except PadlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
