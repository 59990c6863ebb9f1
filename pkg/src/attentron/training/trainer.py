"""Two-phase training loop: single-speaker warm start, then multi-speaker.

Every step derives its own rng stream from (seed, phase, step), so a run
resumed from a checkpoint samples exactly the same batches, references and
dropout masks as an uninterrupted run. Loss lines go to
<checkpoint_dir>/loss_log.csv as `step,phase,lr,loss`.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import RunConfig, TrainConfig, text_to_ids
from ..dsp import load_mel
from ..errors import ConfigError, SamplingError, TrainingDivergedError
from ..nn import Adam, AdamHyper
from ..synthesizer import Synthesizer
from .checkpoint import load_into_model, read_checkpoint, save_checkpoint
from .manifest import Entry, Manifest

log = logging.getLogger(__name__)


def lr_schedule(step: int, phase: int, config: TrainConfig) -> float:
    """Piecewise-constant rate: drops once per phase at the decay step."""
    if phase == 1:
        return config.phase1_lr if step < config.phase1_decay_step else config.phase1_lr2
    if phase == 2:
        return config.phase2_lr if step < config.phase2_decay_step else config.phase2_lr2
    raise ConfigError(f"unknown phase {phase}")


def sample_references(manifest: Manifest, target: Entry, n: int,
                      rng: np.random.Generator,
                      include_target: bool = False) -> list[Entry]:
    """n same-speaker references, excluding the target unless told otherwise.

    Falls back to sampling with replacement (with a warning) when the
    speaker has too few other utterances.
    """
    pool = [e for e in manifest.by_speaker().get(target.speaker_id, [])
            if include_target or e.utterance_id != target.utterance_id]
    if not pool:
        raise SamplingError(f"speaker {target.speaker_id!r} has no usable "
                            f"references for {target.utterance_id!r}")
    if len(pool) >= n:
        idx = rng.choice(len(pool), size=n, replace=False)
    else:
        log.warning("speaker %s has only %d references, sampling %d with replacement",
                    target.speaker_id, len(pool), n)
        idx = rng.choice(len(pool), size=n, replace=True)
    return [pool[i] for i in idx]


def step_rng(seed: int, phase: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(phase, step)))


@dataclass
class MelStore:
    """All cached features for a manifest, loaded up front."""
    frames: dict[str, np.ndarray]

    @classmethod
    def load(cls, manifest: Manifest, cache_dir) -> "MelStore":
        cache_dir = Path(cache_dir)
        frames = {}
        for e in manifest.entries:
            path = cache_dir / f"{e.utterance_id}.mels"
            if not path.exists():
                raise FileNotFoundError(f"missing mel cache {path}; run featurize first")
            frames[e.utterance_id] = load_mel(path).frames
        return cls(frames=frames)


def assemble_batch(entries: list[Entry], refs_per_entry: list[list[Entry]],
                   store: MelStore, dtype=np.float32):
    """Pad texts, targets and references to batch-wide maxima, build masks."""
    ids_list = [text_to_ids(e.text) for e in entries]
    l_t = max(len(i) for i in ids_list)
    ids = np.zeros((len(entries), l_t), dtype=np.int64)
    text_lens = np.array([len(i) for i in ids_list])
    for row, seq in enumerate(ids_list):
        ids[row, :len(seq)] = seq

    mels = [store.frames[e.utterance_id] for e in entries]
    t_max = max(m.shape[0] for m in mels)
    n_mels = mels[0].shape[1]
    target = np.zeros((len(entries), t_max, n_mels), dtype=dtype)
    target_lens = np.array([m.shape[0] for m in mels])
    for row, m in enumerate(mels):
        target[row, :m.shape[0]] = m

    n_refs = len(refs_per_entry[0])
    ref_mels = [[store.frames[r.utterance_id] for r in refs] for refs in refs_per_entry]
    l_r = max(m.shape[0] for refs in ref_mels for m in refs)
    ref_specs = np.zeros((len(entries), n_refs, l_r, n_mels), dtype=dtype)
    ref_lens = np.zeros((len(entries), n_refs), dtype=np.int64)
    for row, refs in enumerate(ref_mels):
        for col, m in enumerate(refs):
            ref_specs[row, col, :m.shape[0]] = m
            ref_lens[row, col] = m.shape[0]
    return ids, text_lens, target, target_lens, ref_specs, ref_lens


@dataclass
class PhaseResult:
    losses: list[float]
    final_step: int


def run_phase(model: Synthesizer, opt: Adam, manifest: Manifest, store: MelStore,
              cfg: TrainConfig, phase: int, steps: int, start_step: int,
              checkpoint_dir, log_lines: list[str],
              checkpoint_every: int) -> PhaseResult:
    losses = []
    checkpoint_dir = Path(checkpoint_dir)
    entries = manifest.entries
    for step in range(start_step, steps):
        rng = step_rng(cfg.seed, phase, step)
        idx = rng.choice(len(entries), size=min(cfg.batch_size, len(entries)),
                         replace=len(entries) < cfg.batch_size)
        batch = [entries[i] for i in idx]
        refs = [sample_references(manifest, e, cfg.n_refs_train, rng,
                                  include_target=cfg.include_target_as_ref)
                for e in batch]
        ids, text_lens, target, target_lens, ref_specs, ref_lens = \
            assemble_batch(batch, refs, store, dtype=model.dtype)
        model.zero_grad()
        pred, stop_logits = model.forward_teacher_forced(
            ids, text_lens, target, target_lens, ref_specs, ref_lens,
            train=True, rng=rng)
        loss = model.compute_loss(pred, target, stop_logits, target_lens)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            save_checkpoint(checkpoint_dir / "diagnostic.atrn", model, opt.state,
                            step, phase)
            raise TrainingDivergedError(
                f"non-finite loss at phase {phase} step {step}; "
                f"diagnostic checkpoint written")
        loss.backward()
        lr = lr_schedule(step, phase, cfg)
        opt.step(lr)
        losses.append(loss_val)
        if step % cfg.log_every == 0:
            log_lines.append(f"{step},{phase},{lr:.8g},{loss_val:.8f}")
        if checkpoint_every and (step + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_dir / f"phase{phase}_step{step + 1:06d}.atrn",
                            model, opt.state, step + 1, phase)
    return PhaseResult(losses=losses, final_step=steps)


def smoothed(losses: list[float], alpha: float = 0.98) -> list[float]:
    """Exponential moving average of a loss trace."""
    out = []
    acc = None
    for x in losses:
        acc = x if acc is None else alpha * acc + (1.0 - alpha) * x
        out.append(acc)
    return out


def train(cfg: RunConfig, manifest1: Manifest | None, manifest2: Manifest | None,
          checkpoint_dir, resume: str | None = None,
          phases: tuple[int, ...] = (1, 2)) -> Path:
    """Run the requested phases; returns the path of the final checkpoint."""
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    model = Synthesizer(cfg.hp, seed=cfg.train.seed)
    opt = Adam(model.parameters(),
               AdamHyper(beta1=cfg.train.beta1, beta2=cfg.train.beta2,
                         epsilon=cfg.train.adam_eps,
                         weight_decay=cfg.train.weight_decay))
    start_phase, start_step = phases[0], 0
    if resume:
        ckpt = read_checkpoint(resume)
        load_into_model(ckpt, model, opt.state)
        start_phase, start_step = ckpt.phase, ckpt.step
        phases = tuple(p for p in phases if p >= start_phase)
        log.info("resumed from %s at phase %d step %d", resume, start_phase, start_step)

    log_path = checkpoint_dir / "loss_log.csv"
    if not resume or not log_path.exists():
        log_path.write_text("step,phase,lr,loss\n", encoding="utf-8")

    final = None
    for phase in phases:
        manifest = manifest1 if phase == 1 else manifest2
        steps = cfg.train.phase1_steps if phase == 1 else cfg.train.phase2_steps
        if manifest is None or steps == 0:
            continue
        store = MelStore.load(manifest, cfg.cache_dir)
        first = start_step if phase == start_phase else 0
        lines: list[str] = []
        run_phase(model, opt, manifest, store, cfg.train, phase, steps, first,
                  checkpoint_dir, lines, cfg.train.checkpoint_every)
        with open(log_path, "a", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
        final = checkpoint_dir / f"phase{phase}_final.atrn"
        save_checkpoint(final, model, opt.state, steps, phase)
    if final is None:
        raise ConfigError("no phase was run; check manifests and step counts")
    return final
