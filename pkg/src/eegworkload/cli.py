"""``eegworkload`` command-line entry point.

Verbs: ``synth``, ``preprocess``, ``train``, ``evaluate``, ``topo``, ``report``.
Exit codes: 0 success, 1 validation or usage error, 2 I/O error, 3 training fault.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .archive import FormatError, atomic_write, read_epochs, read_session, write_epochs, write_session
from .core import ConfigError, ValidationError, paradigm_timeline
from .dsp import BalanceError, DimensionalityError, preprocess_session
from .eval import (TABLE_ORDER, CVPlan, FoldTrainingFault, build_report, cv_jobs, fold_results_from_dict,
                   fold_results_to_dicts, job_seed, make_classifier, run_fold)
from .features import InsufficientEpochsError, get_band, scalp_svg, topography_csv, topography_stats
from .nn import MODEL_KINDS, ProposedModelSpec, TrainHyper, TrainingFault, checkpoint_bytes, train
from .nn.training import build_network
from .synthgen import SynthConfig, generate_session

log = logging.getLogger("eegworkload")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_TRAINING = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    """What a command depends on besides its input files; checked before any work starts."""

    command: str
    seed: int
    out: Path
    threads: int = 1
    inputs: Path | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        skip = {"command", "seed", "out", "threads", "input", "func", "verbose"}
        return cls(args.command, args.seed, Path(args.out), args.threads,
                   Path(args.input) if getattr(args, "input", None) else None,
                   {k: v for k, v in sorted(vars(args).items()) if k not in skip})

    def check(self) -> None:
        if self.seed is None:
            raise UsageError("--seed is required")
        if self.inputs is not None and not self.inputs.exists():
            raise FileNotFoundError(f"input path {self.inputs} does not exist")
        if self.out.exists() and not self.out.is_dir():
            raise NotADirectoryError(f"output path {self.out} is not a directory")


# ---------------------------------------------------------------- helpers

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _parse_models(text: str) -> tuple:
    if text == "all":
        return TABLE_ORDER
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad or not kinds:
        raise UsageError(f"unknown model(s) {', '.join(bad) or text!r}; valid kinds: {', '.join(MODEL_KINDS)}, all")
    return kinds


def _participant_dirs(root: Path, select=None) -> list[Path]:
    if not root.is_dir():
        raise FileNotFoundError(f"input directory {root} does not exist")
    dirs = sorted((p for p in root.iterdir() if (p / "manifest.txt").is_file()),
                  key=lambda p: (len(p.name), p.name))
    if select:
        wanted = set(select)
        dirs = [d for d in dirs if d.name in wanted]
        missing = wanted - {d.name for d in dirs}
        if missing:
            raise FileNotFoundError(f"no archive for participant(s) {', '.join(sorted(missing))} under {root}")
    if not dirs:
        raise FileNotFoundError(f"no archives found under {root}")
    return dirs


def _pool(threads):
    return ProcessPoolExecutor(max_workers=threads, initializer=_limit_threads) if threads > 1 else None


def _limit_threads():
    threadpool_limits(1)


def _hyper_from(args) -> TrainHyper:
    return TrainHyper(epochs1=args.epochs1, lr1=args.lr1, epochs2=args.epochs2, lr2=args.lr2,
                      batch_size=args.batch_size)


# ---------------------------------------------------------------- synth

def _synth_config(args) -> SynthConfig:
    cfg = SynthConfig(seed=args.seed, n_participants=args.participants)
    if args.null_gains:
        cfg = cfg.with_(theta_frontal_gain={"NS": 1.0, "LW": 1.0, "HW": 1.0},
                        alpha_parietal_gain={"NS": 1.0, "LW": 1.0, "HW": 1.0})
    cfg.validate()
    return cfg


def _timeline_from(args):
    if not args.trials:
        return None
    counts = [int(x) for x in args.trials.split(",")]
    if len(counts) != 3 or min(counts) < 0:
        raise UsageError("--trials takes three non-negative counts for levels 1,2,3")
    return paradigm_timeline(1000.0, trials=dict(zip((1, 2, 3), counts)))


def _synth_one(cfg, idx, timeline, out):
    session = generate_session(cfg, idx, timeline)
    write_session(session, out / session.participant_id)
    return session.participant_id


def cmd_synth(args) -> int:
    cfg = _synth_config(args)
    timeline = _timeline_from(args)
    out = Path(args.out) / "sessions"
    pool = _pool(args.threads)
    if pool:
        with pool:
            pids = list(pool.map(_synth_one, [cfg] * cfg.n_participants, range(cfg.n_participants),
                                 [timeline] * cfg.n_participants, [out] * cfg.n_participants))
    else:
        pids = [_synth_one(cfg, i, timeline, out) for i in range(cfg.n_participants)]
    lines = ["format: eegworkload-cohort", "format_version: 1", f"seed: {cfg.seed}",
             f"n_participants: {cfg.n_participants}", f"participants: {','.join(pids)}"]
    lines += [f"config.{k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(asdict(cfg).items())]
    if args.trials:
        lines.append(f"trials_per_level: {args.trials}")
    atomic_write(out / "cohort.txt", "\n".join(lines) + "\n")
    print(f"wrote {len(pids)} session archive(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- preprocess

def _preprocess_one(src: Path, out: Path, use_ica: bool, seed: int):
    session = read_session(src)
    pseed = int(np.random.SeedSequence([seed, int("".join(c for c in src.name if c.isdigit()) or 0)])
                .generate_state(1)[0])
    try:
        epochs, plog = preprocess_session(session, use_ica=use_ica, seed=pseed)
    except (ValidationError, BalanceError, DimensionalityError) as exc:
        raise ValidationError(f"participant {session.participant_id}: {exc}") from exc
    dest = out / session.participant_id
    write_epochs(epochs, dest)
    atomic_write(dest / "preprocess_log.json", json.dumps(plog, indent=2, sort_keys=True) + "\n")
    return session.participant_id, plog


def cmd_preprocess(args) -> int:
    src_root = Path(args.input) if args.input else Path(args.out) / "sessions"
    out = Path(args.out) / "epochs"
    dirs = _participant_dirs(src_root, args.participant)
    pool = _pool(args.threads)
    jobs = [(d, out, not args.no_ica, args.seed) for d in dirs]
    if pool:
        with pool:
            results = list(pool.map(_preprocess_one, *zip(*jobs)))
    else:
        results = [_preprocess_one(*j) for j in jobs]
    for pid, plog in results:
        before = plog["epochs_before_balancing"]["total"]
        after = plog["epochs_after_balancing"]["total"]
        print(f"{pid}: {before} -> {after} epochs after balancing; "
              f"rejected ICA components: {plog['rejected_components']}")
    return EXIT_OK


# ---------------------------------------------------------------- train / evaluate

def _spec_for(width: float):
    spec = ProposedModelSpec()
    return spec if width == 1.0 else spec.scaled(width)


def cmd_train(args) -> int:
    models = _parse_models(args.model)
    hyper = _hyper_from(args)
    src_root = Path(args.input) if args.input else Path(args.out) / "epochs"
    out = Path(args.out) / "checkpoints"
    for d in _participant_dirs(src_root, args.participant):
        epochs = read_epochs(d)
        for kind in models:
            if kind == "psd_svm":
                log.info("psd_svm has no network checkpoint; skipping")
                continue
            seed = job_seed(args.seed, epochs.participant_id, 0, 0)
            spec = _spec_for(args.width) if kind == "proposed" else None
            try:
                model = train(build_network(kind, seed, spec), epochs, hyper=hyper)
            except TrainingFault as exc:
                raise FoldTrainingFault(epochs.participant_id, kind, 0, 0, exc) from exc
            path = out / f"{epochs.participant_id}_{kind}.ckpt"
            atomic_write(path, checkpoint_bytes(model))
            print(f"{epochs.participant_id} {kind}: final training loss "
                  f"{model.training_log[-1]['train_loss']:.4f} -> {path}")
    return EXIT_OK


@dataclass(frozen=True)
class _Factory:
    kind: str
    hyper: TrainHyper
    width: float

    def __call__(self, seed):
        spec = _spec_for(self.width) if self.kind == "proposed" else None
        return make_classifier(self.kind, seed, self.hyper, spec)


def _eval_job(epochs_dir, kind, plan, repeat, fold, factory):
    epochs = read_epochs(epochs_dir)
    for r, k, tr, te in cv_jobs(epochs, plan):
        if (r, k) == (repeat, fold):
            return run_fold(epochs, kind, plan, r, k, tr, te, factory)
    raise RuntimeError("unreachable: fold not found")


def cmd_evaluate(args) -> int:
    chosen = _parse_models(args.models)
    models = tuple(m for m in TABLE_ORDER if m in chosen)  # table column order
    plan = CVPlan(args.folds, args.repeats, args.seed, grouped=args.grouped)
    hyper = _hyper_from(args)
    src_root = Path(args.input) if args.input else Path(args.out) / "epochs"
    dirs = _participant_dirs(src_root, args.participant)
    jobs = []
    for d in dirs:
        for kind in models:
            for r in range(plan.n_repeats):
                for k in range(plan.n_folds):
                    jobs.append((d, kind, plan, r, k, _Factory(kind, hyper, args.width)))
    pool = _pool(args.threads)
    if pool:
        with pool:
            results = list(pool.map(_eval_job, *zip(*jobs)))
    else:
        results = [_eval_job(*j) for j in jobs]
    report = build_report(results, models=models, test=args.test)
    out = Path(args.out) / "report"
    config = {"seed": args.seed, "models": list(models), "folds": plan.n_folds, "repeats": plan.n_repeats,
              "grouped": plan.grouped, "width": args.width, "test": args.test, "hyper": asdict(hyper)}
    atomic_write(out / "cv_results.json", json.dumps({"config": config, "results": fold_results_to_dicts(
        sorted(results, key=lambda r: (r.participant, r.model, r.repeat, r.fold)))}, indent=2, sort_keys=True) + "\n")
    _write_report(report, out)
    print(report.render(), end="")
    return EXIT_OK


def _write_report(report, out: Path):
    atomic_write(out / "report.json", report.to_json())
    atomic_write(out / "report.csv", report.to_csv())
    atomic_write(out / "report.txt", report.render())


def cmd_report(args) -> int:
    src = Path(args.input) if args.input else Path(args.out) / "report"
    path = src / "cv_results.json" if src.is_dir() else src
    payload = json.loads(path.read_text())
    results = fold_results_from_dict(payload["results"])
    models = payload.get("config", {}).get("models")
    report = build_report(results, models=models, test=args.test)
    _write_report(report, Path(args.out) / "report")
    print(report.render(), end="")
    return EXIT_OK


# ---------------------------------------------------------------- topo

def cmd_topo(args) -> int:
    try:
        band = get_band(args.band)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    contrast = tuple(x.strip().upper() for x in args.contrast.split(","))
    if len(contrast) != 2 or not set(contrast) <= {"NS", "LW", "HW"}:
        raise UsageError("--contrast takes two labels from NS, LW, HW, e.g. NS,HW")
    src_root = Path(args.input) if args.input else Path(args.out) / "epochs"
    sets = [read_epochs(d) for d in _participant_dirs(src_root, args.participant)]
    from .core import EpochSet
    epochs = EpochSet.concatenate(sets)
    rows = topography_stats(epochs, band, contrast)
    out = Path(args.out) / "topo"
    stem = f"{band.name}_{contrast[0]}-vs-{contrast[1]}"
    atomic_write(out / f"{stem}.csv", topography_csv(rows))
    if args.svg:
        atomic_write(out / f"{stem}.svg", scalp_svg(rows, label=contrast[1]))
    flagged = [r.channel for r in rows if r.significant]
    print(f"{band.name} {contrast[0]} vs {contrast[1]}: {len(flagged)} significant channel(s) (p < 0.05, "
          f"uncorrected): {', '.join(flagged) or 'none'}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, required=True, help="master seed (required; no clock-based default)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker processes for independent jobs; results do not depend on it")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="eegworkload", description="Synthetic EEG workload pipeline: synthesis, preprocessing, "
                                                "CNN-LSTM training, cross-validated evaluation and topographies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    s.add_argument("--participants", type=_positive_int, default=10)
    s.add_argument("--null-gains", action="store_true", help="set all workload gains to 1.0 (no effect)")
    s.add_argument("--trials", help="trials per level 1,2,3 (default 15,10,10)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", parents=[common], help="filter, ICA, epoch and balance sessions")
    s.add_argument("--in", dest="input", help="session archives directory (default OUT/sessions)")
    s.add_argument("--participant", action="append", help="restrict to participant id (repeatable)")
    s.add_argument("--no-ica", action="store_true", help="skip ICA artifact rejection")
    s.set_defaults(func=cmd_preprocess)

    def training_flags(s):
        s.add_argument("--in", dest="input", help="epoch archives directory (default OUT/epochs)")
        s.add_argument("--participant", action="append", help="restrict to participant id (repeatable)")
        s.add_argument("--epochs1", type=int, default=50, help="Step 1 epochs")
        s.add_argument("--lr1", type=float, default=1e-3)
        s.add_argument("--epochs2", type=int, default=10, help="Step 2 (fine-tuning) epochs")
        s.add_argument("--lr2", type=float, default=1e-4)
        s.add_argument("--batch-size", type=_positive_int, default=64)
        s.add_argument("--width", type=float, default=1.0,
                       help="multiply the proposed model's layer widths (desk-scale runs)")

    s = sub.add_parser("train", parents=[common], help="train one model per participant and save checkpoints")
    training_flags(s)
    s.add_argument("--model", default="proposed")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="repeated k-fold cross-validation report")
    training_flags(s)
    s.add_argument("--models", default="proposed,psd_svm", help="comma list or 'all'")
    s.add_argument("--folds", type=_positive_int, default=5)
    s.add_argument("--repeats", type=_positive_int, default=4)
    s.add_argument("--grouped", action="store_true", help="keep each trial's epochs in one fold")
    s.add_argument("--test", choices=("wilcoxon", "paired_t"), default="wilcoxon")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("topo", parents=[common], help="per-channel band-power contrast and scalp map")
    s.add_argument("--in", dest="input", help="epoch archives directory (default OUT/epochs)")
    s.add_argument("--participant", action="append", help="restrict to participant id (repeatable)")
    s.add_argument("--band", default="theta", help="delta, theta, alpha or beta")
    s.add_argument("--contrast", default="NS,HW")
    s.add_argument("--svg", action="store_true", help="also write an SVG scalp map")
    s.set_defaults(func=cmd_topo)

    s = sub.add_parser("report", parents=[common], help="re-render a report from saved fold results")
    s.add_argument("--in", dest="input", help="cv_results.json or its directory (default OUT/report)")
    s.add_argument("--test", choices=("wilcoxon", "paired_t"), default="wilcoxon")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        RunConfig.from_args(args).check()
        with threadpool_limits(1):
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"eegworkload {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FoldTrainingFault, TrainingFault) as exc:
        print(f"eegworkload {args.command}: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (FormatError, ValidationError, InsufficientEpochsError, ValueError) as exc:
        print(f"eegworkload {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"eegworkload {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
