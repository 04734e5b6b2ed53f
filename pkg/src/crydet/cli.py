"""Command-line entry point: ``crydet <command> ...``."""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import SAMPLE_RATE, canonicalize, read_wav, resample, write_wav
from .augment import AugmentPolicy, AugmentResources, ImpulseResponse, augment_spectrogram, augment_waveform
from .errors import CheckpointError, DataError, DecodeError, NumericError, UnsupportedFormatError
from .features import log_mel, write_spectrogram
from .model import PRESETS, complexity_report
from .pipeline import (
    DEFAULT_SNRS,
    DatasetManifest,
    ManifestEntry,
    RunConfig,
    build_manifest,
    detect_stream,
    evaluate,
    format_table,
    invocations,
    label_for,
    load_items,
    load_model,
    load_run_config,
    save_run_config,
    snr_sweep_eval,
    stratified_kfold,
    train_model,
)
from .pipeline.training import snr_label

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ABLATIONS = ("esa", "cca", "adm", "multiscale")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# shared option groups
# ---------------------------------------------------------------------------


def _add_model_opts(p):
    p.add_argument("--config", type=Path, help="INI file with [model], [train] and [augment] sections")
    p.add_argument("--preset", choices=sorted(PRESETS), help="model size preset (overrides [model])")
    for name in ABLATIONS:
        p.add_argument(f"--no-{name}", action="store_true", help=f"disable the {name} component")


def _add_noise_opts(p):
    p.add_argument("--noise-dir", type=Path, help="directory of noise WAVs for mixing")
    p.add_argument("--literal-eq7", dest="power_db_gain", action="store_true",
                   help="use the /10 exponent in the noise gain (doubles the effective SNR in dB)")


def _run_config(args) -> RunConfig:
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
    except (ValueError, KeyError, configparser.Error, FileNotFoundError) as exc:
        raise UsageError(f"bad config file {args.config}: {exc}") from exc
    model = PRESETS[args.preset] if args.preset else cfg.model
    off = [n for n in ABLATIONS if getattr(args, f"no_{n}", False)]
    if off:
        model = model.ablate(*off)
    train = cfg.train
    if getattr(args, "power_db_gain", False):
        train = dataclasses.replace(train, policy=dataclasses.replace(train.policy, power_db_gain=True))
    return RunConfig(model, train)


def _wavs(directory: Path | None) -> list[Path]:
    if directory is None:
        return []
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    return sorted(directory.glob("*.wav"))


def _noise_pool(directory):
    return [resample(read_wav(p), SAMPLE_RATE) for p in _wavs(directory)]


def _emit(args, payload: dict, table: str | None) -> None:
    if table is not None and not args.json:
        print(table)
    if args.json or args.json_out:
        text = json.dumps(payload, indent=2)
        if args.json_out:
            Path(args.json_out).write_text(text + "\n")
        if args.json:
            print(text)


def _add_output_opts(p):
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.add_argument("--json-out", type=Path, help="also write JSON to this file")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _parse_rules(pairs: list[str]) -> dict[str, str]:
    rules = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"rule {pair!r} is not SUBCLASS=GLOB")
        sub, pattern = pair.split("=", 1)
        try:
            label_for(sub)
        except DataError as exc:
            raise UsageError(str(exc)) from exc
        rules[sub] = pattern
    return rules


def cmd_prepare(args) -> int:
    manifest = build_manifest(args.root, _parse_rules(args.rule))
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for e in manifest:
        chunks = canonicalize(read_wav(e.path), energy_threshold_db=args.threshold_db)
        for k, clip in enumerate(chunks):
            dest = out_dir / e.subclass / f"{Path(e.path).stem}_{k:03d}.wav"
            dest.parent.mkdir(parents=True, exist_ok=True)
            write_wav(dest, clip)
            entries.append(ManifestEntry(str(dest), e.label, e.subclass, clip.duration_s))
    if not entries:
        raise DataError("no samples left after silence removal")
    prepared = DatasetManifest(entries)
    prepared.to_jsonl(out_dir / "manifest.jsonl")
    print(f"{len(manifest)} files -> {len(prepared)} clips {prepared.counts()}; manifest at {out_dir / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_augment_preview(args) -> int:
    cfg = _run_config(args)
    policy = cfg.policy
    if not policy.active:
        policy = dataclasses.replace(policy, p_speed=0.5, p_reverb=0.5, p_scene=1.0, p_mask=1.0)
    clip = resample(read_wav(args.input), SAMPLE_RATE)
    resources = AugmentResources(_noise_pool(args.noise_dir), [ImpulseResponse.from_wav(p) for p in _wavs(args.ir_dir)])
    rng = np.random.default_rng(args.seed)
    out = augment_waveform(clip, policy, rng, resources)
    write_wav(args.output, out)
    msg = f"wrote {args.output}"
    if args.spectrogram:
        write_spectrogram(args.spectrogram, augment_spectrogram(log_mel(out), policy, rng))
        msg += f" and {args.spectrogram}"
    print(msg)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    train = cfg.train
    overrides = {k: getattr(args, k) for k in ("seed", "max_epochs", "batch_size") if getattr(args, k) is not None}
    if overrides:
        train = dataclasses.replace(train, **overrides)
    cfg = RunConfig(cfg.model, train)
    manifest = DatasetManifest.from_jsonl(args.manifest)
    folds = stratified_kfold(manifest, k=args.folds, seed=train.seed)
    resources = AugmentResources(_noise_pool(args.noise_dir), [ImpulseResponse.from_wav(p) for p in _wavs(args.ir_dir)])
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_run_config(args.out_dir / "run.ini", cfg)
    result = train_model(manifest, folds, cfg.model, train, args.out_dir, resources)
    rows = [(f"fold {k}", r) for k, r in enumerate(result.fold_reports)]
    summary = result.summary
    table = format_table(rows) + "\n\nmean +/- std: " + ", ".join(
        f"{name} {100 * v['mean']:.1f} +/- {100 * v['std']:.1f}" for name, v in summary.items()
    )
    _emit(args, {"folds": [r.as_dict() for r in result.fold_reports], "summary": summary,
                 "checkpoints": [str(p) for p in result.checkpoints]}, table)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    model = load_model(args.checkpoint, cfg.model)
    report = evaluate(model, DatasetManifest.from_jsonl(args.manifest), args.threshold)
    _emit(args, report.as_dict(), format_table([("test", report)]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    snrs = [None if s.lower() == "clean" else float(s) for s in args.snrs] if args.snrs else list(DEFAULT_SNRS)
    pool = _noise_pool(args.noise_dir)
    if any(s is not None for s in snrs) and not pool:
        raise DataError("noisy SNR points need a non-empty --noise-dir")
    model = load_model(args.checkpoint, cfg.model)
    items = load_items(DatasetManifest.from_jsonl(args.manifest))
    results = snr_sweep_eval(model, items, pool, snrs, args.seed, args.threshold, power_db_gain=args.power_db_gain)
    rows = [(snr_label(s), r) for s, r in results]
    _emit(args, {"points": [{"snr": snr_label(s), **r.as_dict()} for s, r in results]}, format_table(rows))
    return EXIT_OK


def cmd_complexity(args) -> int:
    cfg = _run_config(args)
    rep = complexity_report(cfg.model)
    table = f"parameters  {rep.n_params:,} ({rep.np_millions:.2f} M)\nFLOPs       {rep.flops:,} ({rep.flops_giga:.3f} G)"
    _emit(args, rep.as_dict(), table)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _run_config(args)
    model = load_model(args.checkpoint, cfg.model)
    stream = resample(read_wav(args.input), SAMPLE_RATE)
    dets = detect_stream(stream, model, args.threshold_db)
    lines = [f"{'start (s)':>10}  {'p(cry)':>7}  model"]
    lines += [f"{d.start_s:>10.2f}  {d.probability:>7.3f}  {'yes' if d.invoked else 'gated'}" for d in dets]
    lines.append(f"{invocations(dets)} of {len(dets)} windows passed the energy gate")
    _emit(args, {"windows": [{"start_s": d.start_s, "probability": d.probability, "invoked": d.invoked} for d in dets]},
          "\n".join(lines))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crydet", description="Lightweight noise-robust infant cry detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="scan a corpus, drop silence and cut 5 s clips")
    p.add_argument("root", type=Path)
    p.add_argument("--rule", action="append", required=True, metavar="SUBCLASS=GLOB",
                   help="e.g. Cry='cry/**/*.wav'; repeat per subclass")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--threshold-db", type=float, default=-40.0, help="silence threshold (dBFS)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("augment-preview", help="write one augmented version of a clip")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--spectrogram", type=Path, help="also dump the (masked) log-Mel spectrogram")
    p.add_argument("--ir-dir", type=Path, help="directory of impulse-response WAVs")
    p.add_argument("--seed", type=int, default=0)
    _add_model_opts(p)
    _add_noise_opts(p)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("train", help="k-fold cross-validated training")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--ir-dir", type=Path)
    _add_model_opts(p)
    _add_noise_opts(p)
    _add_output_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics of a checkpoint on a manifest")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("--threshold", type=float, default=0.5)
    _add_model_opts(p)
    _add_output_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="metrics under noisy scenes at several SNRs")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("manifest", type=Path)
    p.add_argument("--snrs", nargs="+", metavar="DB", help="SNR points; 'clean' for no corruption")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    _add_model_opts(p)
    _add_noise_opts(p)
    _add_output_opts(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("complexity", help="parameter count and FLOPs per 5 s forward pass")
    _add_model_opts(p)
    _add_output_opts(p)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("detect", help="sliding-window detection over a long recording")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("input", type=Path)
    p.add_argument("--threshold-db", type=float, default=-40.0, help="energy gate (dBFS)")
    _add_model_opts(p)
    _add_output_opts(p)
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crydet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"crydet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DecodeError, UnsupportedFormatError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"crydet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
