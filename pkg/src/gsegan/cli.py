"""Batch command-line surface for the whole pipeline.

Subcommands: synth-corpus, distort, train, enhance, evaluate,
gradcheck. Every command that takes --seed is bit-reproducible; when
the flag is absent the seed comes from the GSEGAN_SEED environment
variable, defaulting to 0. Exit codes: 0 success, 2 config errors,
3 data errors, 4 integrity errors, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .audio_io import CHUNK_SAMPLES, read_wav, write_wav
from .corpus import load_corpus_dir, synth_corpus
from .distortions import (AppliedDistortions, DistortionConfig,
                          apply_recorded, compose_random)
from .errors import ConfigError, DataError, GseError
from .gradsuite import run_suite
from .metrics import evaluate_corpus
from .trainer import (Trainer, TrainSchedule, enhance_waveform,
                      find_latest_checkpoint, load_generator, preset)

SEED_ENV = "GSEGAN_SEED"


def resolve_seed(value) -> int:
    """Explicit flag wins, then GSEGAN_SEED, then 0."""
    if value is not None:
        return int(value)
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _override_dataclass(base, overrides: dict, what: str):
    """dataclasses.replace with unknown-key rejection and the tuple
    coercion JSON loses."""
    names = {f.name for f in dataclasses.fields(base)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    fixed = {}
    for k, v in overrides.items():
        if isinstance(v, list):
            v = tuple(tuple(e) if isinstance(e, list) else e for e in v)
        fixed[k] = v
    return dataclasses.replace(base, **fixed)


@dataclass
class ExperimentConfig:
    """One training run, fully pinned: preset plus explicit overrides."""

    preset: str
    corpus_dir: str
    checkpoint_dir: str
    seed: int | None = None
    width_scale: float = 1.0
    chunk_samples: int = CHUNK_SAMPLES
    log_path: str | None = None
    schedule: dict = field(default_factory=dict)
    distortion: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("preset", "corpus_dir", "checkpoint_dir"):
            if key not in d:
                raise ConfigError(f"config is missing required key {key!r}")
        return cls(**d)

    def build_schedule(self) -> TrainSchedule:
        base = preset(self.preset)
        return _override_dataclass(base, self.schedule, "schedule")

    def build_distortion(self) -> DistortionConfig:
        return _override_dataclass(DistortionConfig(), self.distortion,
                                   "distortion")


def load_experiment_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(_read_json(path, "config"))


def _read_json(path, what: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {p} is not valid JSON: {e}")


def _wav_paths(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    paths = sorted(d.glob("*.wav"))
    if not paths:
        raise DataError(f"no .wav files in {d}")
    return paths


# ------------------------------------------------------------- commands

def cmd_synth_corpus(args) -> int:
    seed = resolve_seed(args.seed)
    rng = seeding.stream(seed, seeding.CORPUS)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = synth_corpus(args.n, rng, out)
    print(f"wrote {len(names)} utterances to {out} (seed {seed})")
    return 0


def cmd_distort(args) -> int:
    seed = resolve_seed(args.seed)
    overrides = _read_json(args.config, "distortion config") if args.config else {}
    if args.activation_p is not None:
        overrides["activation_p"] = args.activation_p
    cfg = _override_dataclass(DistortionConfig(), overrides, "distortion")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _wav_paths(args.in_dir)

    if args.replay:
        book = _read_json(args.replay, "manifest")
        items = book.get("items", {})
        for p in paths:
            if p.name not in items:
                raise DataError(f"manifest has no entry for {p.name}")
            recorded = AppliedDistortions.from_dict(items[p.name])
            write_wav(out / p.name, apply_recorded(read_wav(p), recorded, cfg))
        print(f"replayed {len(paths)} manifests into {out}")
        return 0

    rng = seeding.stream(seed, seeding.DISTORTION)
    items = {}
    active_counts = np.zeros(5, dtype=int)
    for p in paths:
        distorted, applied = compose_random(read_wav(p), cfg, rng)
        write_wav(out / p.name, distorted)
        items[p.name] = applied.to_dict()
        active_counts[len(applied.records)] += 1
    manifest = {
        "seed": seed,
        "config": dataclasses.asdict(cfg),
        "items": items,
    }
    (out / "manifests.json").write_text(json.dumps(manifest, indent=1))
    hist = {
        "counts": active_counts.tolist(),
        "fractions": (active_counts / max(1, len(paths))).round(6).tolist(),
    }
    (out / "activation_histogram.json").write_text(json.dumps(hist, indent=1))
    print(f"distorted {len(paths)} utterances into {out} (seed {seed})")
    return 0


def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    seed = resolve_seed(args.seed if args.seed is not None else cfg.seed)
    corpus = load_corpus_dir(cfg.corpus_dir)

    latest = find_latest_checkpoint(cfg.checkpoint_dir)
    if args.resume and latest is not None:
        # the checkpoint carries its own schedule/distortion/seed; the
        # config only supplies the paths
        trainer = Trainer.from_checkpoint(latest, corpus,
                                          checkpoint_dir=cfg.checkpoint_dir,
                                          log_path=cfg.log_path)
        print(f"resumed from {latest} at epoch {trainer.epoch}")
    else:
        trainer = Trainer(corpus, cfg.build_schedule(),
                          width_scale=cfg.width_scale, seed=seed,
                          distortion=cfg.build_distortion(),
                          chunk_samples=cfg.chunk_samples,
                          checkpoint_dir=cfg.checkpoint_dir,
                          log_path=cfg.log_path)
    trainer.train()
    print(f"trained {trainer.epoch} epochs "
          f"({trainer.global_step} steps); last checkpoint "
          f"{trainer.last_checkpoint}")
    return 0


def cmd_enhance(args) -> int:
    seed = resolve_seed(args.seed)
    gen, meta = load_generator(args.ckpt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _wav_paths(args.in_dir)
    chunk = int(meta.get("chunk_samples", CHUNK_SAMPLES))
    for p in paths:
        # one stream per file, keyed by name, so a file's output does
        # not depend on which other files sit in the directory
        rng = seeding.stream(seed, f"{seeding.ENHANCE}:{p.stem}")
        write_wav(out / p.name, enhance_waveform(gen, read_wav(p), rng, chunk))
    print(f"enhanced {len(paths)} utterances into {out} (seed {seed})")
    return 0


def cmd_evaluate(args) -> int:
    report = evaluate_corpus(args.ref, args.deg)
    if args.report:
        Path(args.report).write_text(report.to_json())
    print(report.table())
    return 0


def cmd_gradcheck(args) -> int:
    report = run_suite(seeds=tuple(range(args.seeds)),
                       width_scale=args.scale)
    print(report.table())
    return 0 if report.passed else 1


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gsegan",
        description="speech-corruption lab: corrupt, train, enhance, score")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("distort", help="corrupt a corpus, write manifests")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None,
                   help="JSON file of DistortionConfig overrides")
    p.add_argument("--activation-p", type=float, default=None)
    p.add_argument("--replay", default=None,
                   help="manifests.json from a previous run; reproduces "
                        "its outputs bit-exactly")
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("train", help="run a training experiment")
    p.add_argument("--config", required=True,
                   help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the config seed")
    p.add_argument("--resume", action="store_true",
                   help="continue from the latest checkpoint if present")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance a corpus with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score a degraded corpus against "
                                        "its reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--deg", required=True)
    p.add_argument("--report", default=None, help="write JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--scale", type=float, default=1 / 16)
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GseError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


def entry() -> None:
    sys.exit(main())
