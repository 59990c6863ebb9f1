"""Corpus plumbing, checkpoints, and the two-phase training loop."""

from .checkpoint import (Checkpoint, load_into_model, load_model,
                         read_checkpoint, save_checkpoint)
from .manifest import Entry, Manifest, parse_manifest, write_manifest
from .toy_corpus import (ToySpeakerSpec, generate_toy_corpus, render_utterance,
                         speaker_specs, utterance_text)
from .trainer import (MelStore, assemble_batch, lr_schedule, run_phase,
                      sample_references, smoothed, step_rng, train)

__all__ = [
    "Checkpoint", "load_into_model", "load_model", "read_checkpoint",
    "save_checkpoint", "Entry", "Manifest", "parse_manifest", "write_manifest",
    "ToySpeakerSpec", "generate_toy_corpus", "render_utterance",
    "speaker_specs", "utterance_text", "MelStore", "assemble_batch",
    "lr_schedule", "run_phase", "sample_references", "smoothed", "step_rng",
    "train",
]
