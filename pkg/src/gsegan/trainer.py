"""Two-stage adversarial training: batch assembly, TTUR schedule,
per-epoch checkpoints, and chunked whole-utterance inference.

Stage 1 trains with the three-term least-squares objective under TTUR
rates; stage 2 switches both networks to the acoustic-regression
objectives and resets both rates to the shared stage-2 value. Optimizer
moments carry across the boundary. Every random draw comes from a named
seed stream and both stream positions are checkpointed, so a run is
bit-reproducible and resumable from any epoch boundary.

Draw order per step pair (one batch): spectral power iteration (no
draws), latent for the detached fake, discriminator phase shuffles,
then in g_step a fresh latent and the g-side phase shuffles. Batch
assembly earlier drew, per item, one chunk position from the training
stream and the corruption draws from the distortion stream, then one
rotation offset for the unaligned conditioning.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import CHUNK_SAMPLES, Waveform, random_chunk
from .distortions import DistortionConfig, compose_random
from .errors import ConfigError, DataError
from .features import COL_VOICED, extract_acoustic_features
from .losses import (PowerLossConfig, ThetaStats, acoustic_loss,
                     d_loss_acoustic, d_loss_baseline, g_loss_acoustic,
                     g_loss_baseline, power_loss)
from .nn import Adam, Tensor, load_tensors, no_grad, ops, save_tensors
from .seeding import DISTORTION, MODEL_INIT, TRAINING, get_state, set_state, stream
from .segan import (DiscriminatorConfig, GeneratorConfig, build_discriminator,
                    build_generator)

# --------------------------------------------------------------- schedule

@dataclass(frozen=True)
class TrainSchedule:
    """Epoch counts and learning rates for the two training stages.

    Rates for an absent stage are None. batch_size is the full-scale
    150 by default; smoke configurations override it.
    """

    preset: str
    stage1_epochs: int
    stage2_epochs: int
    lr_d_stage1: float | None
    lr_g_stage1: float | None
    lr_stage2: float | None
    batch_size: int = 150

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (unaligned "
                              "conditioning needs a second item)")
        if self.stage1_epochs > 0:
            if not self.lr_d_stage1 or not self.lr_g_stage1:
                raise ConfigError("stage 1 requires both stage-1 rates")
        if self.stage2_epochs > 0 and not self.lr_stage2:
            raise ConfigError("stage 2 requires lr_stage2")

    @property
    def total_epochs(self) -> int:
        return self.stage1_epochs + self.stage2_epochs


PRESETS = {
    "SEGAN": TrainSchedule("SEGAN", 400, 0, 4e-4, 1e-4, None),
    "SEGAN-Aco": TrainSchedule("SEGAN-Aco", 0, 400, None, None, 5e-5),
    "SEGAN-PTAco": TrainSchedule("SEGAN-PTAco", 100, 300, 4e-4, 1e-4, 5e-5),
}


def preset(name: str, **overrides) -> TrainSchedule:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from "
                          f"{sorted(PRESETS)}")
    return dataclasses.replace(PRESETS[name], **overrides)


def _rebuild(cls, d: dict):
    """Reconstruct a frozen config dataclass from checkpoint JSON,
    restoring tuple-typed fields that JSON stored as lists."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        v = d[f.name]
        if isinstance(v, list):
            v = tuple(tuple(e) if isinstance(e, list) else e for e in v)
        kwargs[f.name] = v
    return cls(**kwargs)


# ------------------------------------------------------------------ batch

@dataclass
class TrainingBatch:
    """One optimizer batch: clean chunks, their corrupted versions, a
    deranged copy of the corrupted chunks for unaligned conditioning,
    and (when requested) raw acoustic target matrices."""

    clean: np.ndarray          # (B, L) float64
    distorted: np.ndarray      # (B, L)
    unaligned: np.ndarray      # (B, L), rotation of distorted
    theta: np.ndarray | None   # (B, T, 277) raw targets
    voiced: np.ndarray | None  # (B, T) raw voiced flags
    manifests: list
    rotation: int

    @property
    def size(self) -> int:
        return int(self.clean.shape[0])


def make_batch(corpus: list, schedule: TrainSchedule,
               rng: np.random.Generator,
               distortion: DistortionConfig | None = None,
               chunk_samples: int = CHUNK_SAMPLES,
               indices=None,
               distortion_rng: np.random.Generator | None = None,
               need_theta: bool = False) -> TrainingBatch:
    """Assemble one batch: chunk, corrupt, derange.

    corpus is a list of (name, samples) pairs. When indices is None a
    fresh permutation picks batch_size utterances; the trainer passes
    explicit index groups so an epoch covers every utterance once.
    Chunk positions come from rng, corruption draws from distortion_rng
    (defaulting to rng), and the rotation offset again from rng.
    """
    if not corpus:
        raise DataError("cannot build a batch from an empty corpus")
    distortion = distortion or DistortionConfig()
    if distortion_rng is None:
        distortion_rng = rng
    if indices is None:
        if schedule.batch_size > len(corpus):
            raise DataError(f"batch size {schedule.batch_size} exceeds "
                            f"corpus size {len(corpus)}")
        indices = rng.permutation(len(corpus))[:schedule.batch_size]
    indices = np.asarray(indices, dtype=np.int64)
    bsz = len(indices)
    if bsz < 2:
        raise DataError("a batch needs at least 2 items to derange")

    clean = np.empty((bsz, chunk_samples), dtype=np.float64)
    distorted = np.empty_like(clean)
    manifests = []
    for row, idx in enumerate(indices):
        _, samples = corpus[int(idx)]
        chunk = random_chunk(Waveform(samples), chunk_samples, rng)
        bad, applied = compose_random(Waveform(chunk), distortion,
                                      distortion_rng)
        clean[row] = chunk
        distorted[row] = bad.samples
        manifests.append(applied)
    rotation = int(rng.integers(1, bsz))
    unaligned = np.roll(distorted, -rotation, axis=0)

    theta = voiced = None
    if need_theta:
        mats = [extract_acoustic_features(clean[i]).data for i in range(bsz)]
        theta = np.stack(mats)
        voiced = theta[:, :, COL_VOICED]
    return TrainingBatch(clean=clean, distorted=distorted,
                         unaligned=unaligned, theta=theta, voiced=voiced,
                         manifests=manifests, rotation=rotation)


def _rows3(x: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(x[:, None, :].astype(dtype))


# ---------------------------------------------------------------- trainer

class Trainer:
    """Owns both networks, their optimizers, and the seed streams."""

    def __init__(self, corpus: list, schedule: TrainSchedule, *,
                 width_scale: float = 1.0, seed: int = 0,
                 distortion: DistortionConfig | None = None,
                 power: PowerLossConfig | None = None,
                 chunk_samples: int = CHUNK_SAMPLES,
                 checkpoint_dir=None, log_path=None, dtype=np.float32):
        if len(corpus) < 2:
            raise DataError("training needs at least 2 utterances")
        self.corpus = list(corpus)
        self.schedule = schedule
        self.width_scale = float(width_scale)
        self.seed = int(seed)
        self.distortion = distortion or DistortionConfig()
        self.power = power or PowerLossConfig()
        self.chunk_samples = int(chunk_samples)
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.log_path = Path(log_path) if log_path else None
        self.dtype = np.dtype(dtype)

        init_rng = stream(self.seed, MODEL_INIT)
        self.gen = build_generator(GeneratorConfig(width_scale=width_scale),
                                   init_rng, dtype=self.dtype)
        self.dis = build_discriminator(
            DiscriminatorConfig(width_scale=width_scale,
                                input_length=self.chunk_samples),
            init_rng, dtype=self.dtype)

        sched = self.schedule
        lr_d = sched.lr_d_stage1 if sched.stage1_epochs > 0 else sched.lr_stage2
        lr_g = sched.lr_g_stage1 if sched.stage1_epochs > 0 else sched.lr_stage2
        self.opt_d = Adam(self.dis.parameters(), lr=lr_d)
        self.opt_g = Adam(self.gen.parameters(), lr=lr_g)

        self.train_rng = stream(self.seed, TRAINING)
        self.distort_rng = stream(self.seed, DISTORTION)
        self.epoch = 0
        self.global_step = 0
        self.theta_stats: ThetaStats | None = None
        self.history: list[dict] = []
        self.last_checkpoint: Path | None = None
        if self.checkpoint_dir is not None:
            self.checkpoint_dir.mkdir(parents=True, exist_ok=True)

    # ------------------------------------------------------------- plan

    def stage_for(self, epoch_index: int) -> int:
        return 1 if epoch_index < self.schedule.stage1_epochs else 2

    def _epoch_indices(self) -> list[np.ndarray]:
        """Seeded utterance permutation split into ceil(N/B) groups.

        A trailing singleton cannot be deranged, so it borrows one item
        from the previous group.
        """
        perm = self.train_rng.permutation(len(self.corpus))
        bsz = self.schedule.batch_size
        groups = [perm[i:i + bsz] for i in range(0, len(perm), bsz)]
        if len(groups) >= 2 and len(groups[-1]) == 1:
            groups[-1] = np.concatenate([groups[-2][-1:], groups[-1]])
            groups[-2] = groups[-2][:-1]
        return groups

    def _make_batch(self, indices, need_theta: bool) -> TrainingBatch:
        return make_batch(self.corpus, self.schedule, self.train_rng,
                          distortion=self.distortion,
                          chunk_samples=self.chunk_samples, indices=indices,
                          distortion_rng=self.distort_rng,
                          need_theta=need_theta)

    # ------------------------------------------------------------- steps

    def _generate(self, distorted: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
        """Detached fake batch G(z, x~) as a plain (B, 1, L) array."""
        bsz = distorted.shape[0]
        with no_grad():
            z = self.gen.sample_latent(rng, bsz, self.chunk_samples)
            y = self.gen.forward(Tensor(_rows3(distorted, self.dtype)), z)
        return y.data

    def _d_losses(self, batch: TrainingBatch, stage: int, fake: np.ndarray,
                  shuffle_rng):
        bsz = batch.size
        clean3 = _rows3(batch.clean, self.dtype)
        signal = np.concatenate([clean3, fake.astype(self.dtype), clean3])
        cond3 = _rows3(batch.distorted, self.dtype)
        condition = np.concatenate([cond3, cond3,
                                    _rows3(batch.unaligned, self.dtype)])
        out = self.dis.forward(Tensor(signal), Tensor(condition),
                               shuffle_rng=shuffle_rng,
                               want_acoustic=(stage == 2),
                               acoustic_rows=(0, bsz))
        s_real = ops.slice_rows(out.score, 0, bsz)
        s_fake = ops.slice_rows(out.score, bsz, 2 * bsz)
        s_unal = ops.slice_rows(out.score, 2 * bsz, 3 * bsz)
        if stage == 2:
            target = self.theta_stats.standardize(batch.theta)
            aco = acoustic_loss(out.acoustic_pred, target, batch.voiced)
            loss = d_loss_acoustic(s_real, s_fake, s_unal, aco)
            aco_val = float(aco.data)
        else:
            loss = d_loss_baseline(s_real, s_fake, s_unal)
            aco_val = 0.0
        terms = {
            "d_loss": float(loss.data),
            "d_adv_real": float(np.mean((s_real.data - 1.0) ** 2)),
            "d_adv_fake": float(np.mean((s_fake.data + 1.0) ** 2)),
            "d_adv_unaligned": float(np.mean((s_unal.data + 1.0) ** 2)),
            "d_acoustic": aco_val,
        }
        return loss, terms

    def d_step(self, batch: TrainingBatch, stage: int,
               fake: np.ndarray | None = None) -> dict:
        """One discriminator update; the generator is untouched."""
        self.dis.update_spectral(1)
        if fake is None:
            fake = self._generate(batch.distorted, self.train_rng)
        loss, terms = self._d_losses(batch, stage, fake, self.train_rng)
        self.dis.zero_grad()
        loss.backward()
        self.opt_d.step()
        return terms

    def _g_losses(self, batch: TrainingBatch, stage: int, z: Tensor,
                  shuffle_rng):
        bsz = batch.size
        cond = Tensor(_rows3(batch.distorted, self.dtype))
        fake = self.gen.forward(cond, z)
        out = self.dis.forward(fake, cond, shuffle_rng=shuffle_rng,
                               want_acoustic=(stage == 2))
        if stage == 2:
            target = self.theta_stats.standardize(batch.theta)
            aco = acoustic_loss(out.acoustic_pred, target, batch.voiced)
            pw = power_loss(ops.reshape(fake, (bsz, self.chunk_samples)),
                            batch.clean, self.power)
            loss = g_loss_acoustic(out.score, aco, pw)
            aco_val, pw_val = float(aco.data), float(pw.data)
        else:
            loss = g_loss_baseline(out.score)
            aco_val = pw_val = 0.0
        terms = {
            "g_loss": float(loss.data),
            "g_adv": float(np.mean(out.score.data ** 2)),
            "g_acoustic": aco_val,
            "g_power": pw_val,
        }
        return loss, terms

    def g_step(self, batch: TrainingBatch, stage: int,
               z: Tensor | None = None) -> dict:
        """One generator update; discriminator weights are frozen."""
        if z is None:
            z = self.gen.sample_latent(self.train_rng, batch.size,
                                       self.chunk_samples)
        self.dis.requires_grad_(False)
        try:
            loss, terms = self._g_losses(batch, stage, z, self.train_rng)
            self.gen.zero_grad()
            self.dis.zero_grad()
            loss.backward()
            self.opt_g.step()
        finally:
            self.dis.requires_grad_(True)
        return terms

    def evaluate_d_terms(self, batch: TrainingBatch, stage: int,
                         fake: np.ndarray) -> dict:
        """Loss terms without shuffle noise or any update."""
        with no_grad():
            _, terms = self._d_losses(batch, stage, fake, None)
        return terms

    def evaluate_g_terms(self, batch: TrainingBatch, stage: int,
                         z: Tensor) -> dict:
        with no_grad():
            _, terms = self._g_losses(batch, stage, z, None)
        return terms

    # ------------------------------------------------------------- loop

    def _compute_theta_stats(self) -> None:
        """Standardization statistics from the first stage-2 epoch's
        clean chunks, frozen thereafter.

        The pass replays exactly the batches that epoch will train on:
        stream positions are snapshotted, the epoch's batches are
        generated once to collect targets, and the positions are
        restored so training consumes identical draws.
        """
        ts = get_state(self.train_rng)
        ds = get_state(self.distort_rng)
        mats = []
        for idx in self._epoch_indices():
            bt = self._make_batch(idx, need_theta=True)
            mats.extend(bt.theta)
        set_state(self.train_rng, ts)
        set_state(self.distort_rng, ds)
        self.theta_stats = ThetaStats.from_matrices(mats)

    def _log(self, record: dict) -> None:
        self.history.append(record)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def run_epoch(self) -> list[dict]:
        """Train one epoch (one pass over the shuffled corpus)."""
        ep = self.epoch
        stage = self.stage_for(ep)
        if stage == 2 and self.theta_stats is None:
            self._compute_theta_stats()
            self.opt_d.lr = self.schedule.lr_stage2
            self.opt_g.lr = self.schedule.lr_stage2
        records = []
        for bi, idx in enumerate(self._epoch_indices()):
            batch = self._make_batch(idx, need_theta=(stage == 2))
            d_terms = self.d_step(batch, stage)
            g_terms = self.g_step(batch, stage)
            self.global_step += 1
            rec = {"step": self.global_step, "epoch": ep + 1, "batch": bi,
                   "stage": stage, "lr_d": self.opt_d.lr,
                   "lr_g": self.opt_g.lr}
            rec.update(d_terms)
            rec.update(g_terms)
            records.append(rec)
            self._log(rec)
        self.epoch += 1
        if self.checkpoint_dir is not None:
            path = self.checkpoint_dir / f"epoch{self.epoch:04d}.gsck"
            self.save_checkpoint(path)
            self.last_checkpoint = path
        return records

    def train(self):
        """Run all remaining epochs; returns the final checkpoint path
        (None when no checkpoint directory was given)."""
        while self.epoch < self.schedule.total_epochs:
            self.run_epoch()
        return self.last_checkpoint

    # ------------------------------------------------------ persistence

    def save_checkpoint(self, path) -> Path:
        path = Path(path)
        tensors = {}
        for k, v in self.gen.state_dict().items():
            tensors[f"g/{k}"] = v
        for k, v in self.dis.state_dict().items():
            tensors[f"d/{k}"] = v
        for opt, tag in ((self.opt_d, "adam_d"), (self.opt_g, "adam_g")):
            state = opt.state_dict()
            for name, arr in state["m"].items():
                tensors[f"{tag}/m/{name}"] = arr
            for name, arr in state["v"].items():
                tensors[f"{tag}/v/{name}"] = arr
        if self.theta_stats is not None:
            tensors["theta/mean"] = self.theta_stats.mean
            tensors["theta/std"] = self.theta_stats.std
        meta = {
            "epoch": self.epoch,
            "global_step": self.global_step,
            "seed": self.seed,
            "width_scale": self.width_scale,
            "chunk_samples": self.chunk_samples,
            "dtype": self.dtype.name,
            "schedule": dataclasses.asdict(self.schedule),
            "distortion": dataclasses.asdict(self.distortion),
            "power": dataclasses.asdict(self.power),
            "adam_d": {"t": self.opt_d.t, "lr": self.opt_d.lr},
            "adam_g": {"t": self.opt_g.t, "lr": self.opt_g.lr},
            "rng": {"training": get_state(self.train_rng),
                    "distortion": get_state(self.distort_rng)},
            "has_theta_stats": self.theta_stats is not None,
        }
        save_tensors(path, tensors, meta)
        return path

    @classmethod
    def from_checkpoint(cls, path, corpus: list, *, checkpoint_dir=None,
                        log_path=None) -> "Trainer":
        """Rebuild a trainer in exactly the state it was saved in."""
        tensors, meta = load_tensors(path)
        trainer = cls(corpus,
                      _rebuild(TrainSchedule, meta["schedule"]),
                      width_scale=meta["width_scale"],
                      seed=meta["seed"],
                      distortion=_rebuild(DistortionConfig,
                                          meta["distortion"]),
                      power=_rebuild(PowerLossConfig, meta["power"]),
                      chunk_samples=meta["chunk_samples"],
                      checkpoint_dir=checkpoint_dir, log_path=log_path,
                      dtype=np.dtype(meta["dtype"]))
        trainer.gen.load_state_dict(
            {k[2:]: v for k, v in tensors.items() if k.startswith("g/")})
        trainer.dis.load_state_dict(
            {k[2:]: v for k, v in tensors.items() if k.startswith("d/")})
        for opt, tag in ((trainer.opt_d, "adam_d"), (trainer.opt_g, "adam_g")):
            state = {"t": meta[tag]["t"], "lr": meta[tag]["lr"],
                     "m": {}, "v": {}}
            prefix_m, prefix_v = f"{tag}/m/", f"{tag}/v/"
            for k, v in tensors.items():
                if k.startswith(prefix_m):
                    state["m"][k[len(prefix_m):]] = v
                elif k.startswith(prefix_v):
                    state["v"][k[len(prefix_v):]] = v
            opt.load_state_dict(state)
        if meta["has_theta_stats"]:
            trainer.theta_stats = ThetaStats(mean=tensors["theta/mean"],
                                             std=tensors["theta/std"])
        set_state(trainer.train_rng, meta["rng"]["training"])
        set_state(trainer.distort_rng, meta["rng"]["distortion"])
        trainer.epoch = int(meta["epoch"])
        trainer.global_step = int(meta["global_step"])
        return trainer


def parameter_digest(*models) -> str:
    """Order-stable sha256 over all parameter bytes of the models."""
    h = hashlib.sha256()
    for model in models:
        for name in sorted(model.state_dict()):
            arr = model.state_dict()[name]
            h.update(name.encode("utf-8"))
            h.update(arr.tobytes())
    return h.hexdigest()


def find_latest_checkpoint(directory) -> Path | None:
    paths = sorted(Path(directory).glob("epoch*.gsck"))
    return paths[-1] if paths else None


# -------------------------------------------------------------- inference

def overlap_add(process, x: np.ndarray, chunk_samples: int = CHUNK_SAMPLES,
                window_batch: int = 8) -> np.ndarray:
    """Process x in half-overlapped windows and cross-fade the results.

    process maps a (g, chunk_samples) array to a same-shape array. The
    triangular fade pairs sum to one at every interior sample and the
    output is normalized by the accumulated window weight, so a process
    that returns its input reconstructs x exactly. Output length equals
    input length.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n == 0:
        return x.copy()
    hop = chunk_samples // 2
    n_win = 1 if n <= chunk_samples else math.ceil((n - chunk_samples) / hop) + 1
    padded = (n_win - 1) * hop + chunk_samples
    xp = np.zeros(padded, dtype=np.float64)
    xp[:n] = x
    ramp = (np.arange(hop, dtype=np.float64) + 0.5) / hop
    fade = np.concatenate([ramp, ramp[::-1]])
    acc = np.zeros(padded, dtype=np.float64)
    den = np.zeros(padded, dtype=np.float64)
    starts = [i * hop for i in range(n_win)]
    for lo in range(0, n_win, window_batch):
        group = starts[lo:lo + window_batch]
        segs = np.stack([xp[s:s + chunk_samples] for s in group])
        outs = np.asarray(process(segs), dtype=np.float64)
        if outs.shape != segs.shape:
            raise DataError(f"window processor returned {outs.shape}, "
                            f"expected {segs.shape}")
        for j, s in enumerate(group):
            acc[s:s + chunk_samples] += outs[j] * fade
            den[s:s + chunk_samples] += fade
    return (acc / den)[:n]


def enhance_waveform(gen, w: Waveform, rng: np.random.Generator,
                     chunk_samples: int = CHUNK_SAMPLES,
                     window_batch: int = 8) -> Waveform:
    """Enhance a whole utterance with 50%-overlap windows.

    One latent is drawn per window in window order, so the latent
    sequence does not depend on window_batch (outputs agree across
    batchings to float rounding).
    """
    def process(segs: np.ndarray) -> np.ndarray:
        g = segs.shape[0]
        with no_grad():
            z = gen.sample_latent(rng, g, chunk_samples)
            y = gen.forward(Tensor(segs[:, None, :].astype(gen.dtype)), z)
        return y.data[:, 0, :]

    out = overlap_add(process, w.samples, chunk_samples, window_batch)
    return Waveform(out, w.sample_rate)


def load_generator(path):
    """Generator (weights restored) plus checkpoint meta."""
    tensors, meta = load_tensors(path)
    cfg = GeneratorConfig(width_scale=meta["width_scale"])
    gen = build_generator(cfg, stream(meta["seed"], MODEL_INIT),
                          dtype=np.dtype(meta["dtype"]))
    gen.load_state_dict(
        {k[2:]: v for k, v in tensors.items() if k.startswith("g/")})
    return gen, meta
