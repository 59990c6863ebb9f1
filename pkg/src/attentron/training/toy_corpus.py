"""Deterministic synthetic speakers for desk-scale experiments.

Each speaker is a band-limited pulse train (stacked harmonics) shaped by
two two-pole resonators, plus noise 40 dB down. Symbols a..j map to fixed
pitch-multiplier/duration patterns; texts are random symbol strings shared
across speakers (utterance i has the same text for every speaker) so
same-text cross-speaker comparisons isolate timbre. Speaker attributes sit
on shuffled grids, which keeps any two speakers clearly apart at any seed.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ..dsp import Waveform, save_wav
from ..errors import ConfigError
from .manifest import Entry, Manifest, write_manifest

SR = 16000
SYMBOLS = "abcdefghij"
# per-symbol pitch multiplier; roughly within an octave
PITCH_MULT = np.array([1.00, 1.12, 1.26, 0.89, 1.41, 0.79, 1.59, 0.71, 1.19, 0.94])
# per-symbol relative duration; mean exactly 1.0
REL_DURATION = np.array([1.00, 1.10, 0.90, 1.05, 0.95, 1.08, 0.92, 1.12, 0.88, 1.00])
EDGE_SILENCE = 0.03          # seconds of leading/trailing quiet
NOISE_DB = -40.0
HARMONIC_CUTOFF = 7200.0


@dataclass
class ToySpeakerSpec:
    speaker_id: str
    f0_base: float               # Hz in [90, 300]
    resonance1: float
    resonance2: float
    rate: float                  # symbols per second

    def __post_init__(self):
        if not 90.0 <= self.f0_base <= 300.0:
            raise ConfigError(f"f0_base {self.f0_base} outside [90, 300]")
        if not self.resonance1 < self.resonance2 < 7600.0:
            raise ConfigError("need resonance1 < resonance2 < 7600")


def speaker_specs(n_speakers: int, seed: int) -> list[ToySpeakerSpec]:
    """Grid-spaced attributes with rng-shuffled assignment and small jitter."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    f0 = np.geomspace(95.0, 290.0, n_speakers)
    r1 = np.linspace(500.0, 1100.0, n_speakers)
    r2 = np.linspace(1900.0, 3200.0, n_speakers)
    rate = np.linspace(6.5, 9.5, n_speakers)
    for grid in (f0, r1, r2, rate):
        rng.shuffle(grid)
    specs = []
    for i in range(n_speakers):
        jit = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1, i)))
        specs.append(ToySpeakerSpec(
            speaker_id=f"spk{i:02d}",
            f0_base=float(f0[i] * jit.uniform(0.99, 1.01)),
            resonance1=float(r1[i] * jit.uniform(0.98, 1.02)),
            resonance2=float(r2[i] * jit.uniform(0.98, 1.02)),
            rate=float(rate[i])))
    return specs


def utterance_text(utt_index: int, seed: int) -> str:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2, utt_index)))
    length = int(rng.integers(4, 11))
    return "".join(SYMBOLS[i] for i in rng.integers(0, len(SYMBOLS), size=length))


def _resonator_coeffs(freq: float, r: float = 0.96):
    w = 2.0 * np.pi * freq / SR
    a = np.array([1.0, -2.0 * r * np.cos(w), r * r])
    b = np.array([1.0 - r])
    return b, a


def render_utterance(spec: ToySpeakerSpec, text: str, seed: int,
                     utt_index: int) -> Waveform:
    """Phase-continuous harmonic train through the speaker's resonators."""
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=seed, spawn_key=(3, utt_index, int(spec.f0_base * 100))))
    f0_jitter = float(rng.uniform(0.98, 1.02))
    pieces = []
    phase = 0.0
    for ch in text:
        k = SYMBOLS.index(ch)
        f0 = spec.f0_base * PITCH_MULT[k] * f0_jitter
        n = int(round(REL_DURATION[k] / spec.rate * SR))
        phi = phase + 2.0 * np.pi * f0 / SR * np.arange(n)
        n_harm = max(1, int(HARMONIC_CUTOFF / f0))
        harmonics = np.arange(1, n_harm + 1)
        sig = np.cos(np.outer(harmonics, phi)).sum(axis=0) / n_harm
        pieces.append(sig)
        phase = phi[-1] + 2.0 * np.pi * f0 / SR
    x = np.concatenate(pieces)
    for freq in (spec.resonance1, spec.resonance2):
        b, a = _resonator_coeffs(freq)
        x = lfilter(b, a, x)
    rms = np.sqrt(np.mean(x ** 2))
    noise = rng.standard_normal(len(x)) * rms * 10.0 ** (NOISE_DB / 20.0)
    x = x + noise
    pad = np.zeros(int(EDGE_SILENCE * SR))
    x = np.concatenate([pad, x, pad])
    peak = np.abs(x).max()
    if peak > 0:
        x = x * (0.85 / peak)
    return Waveform(x, SR)


def generate_toy_corpus(n_speakers: int, utts_per_speaker: int, seed: int,
                        out_dir) -> Manifest:
    """Write WAVs plus manifest.tsv under out_dir; fully seed-deterministic."""
    if n_speakers < 2:
        raise ConfigError("toy corpus needs at least 2 speakers")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    specs = speaker_specs(n_speakers, seed)
    entries = []
    for ui in range(utts_per_speaker):
        text = utterance_text(ui, seed)
        for spec in specs:
            utt_id = f"{spec.speaker_id}_utt{ui:03d}"
            wav_path = wav_dir / f"{utt_id}.wav"
            save_wav(wav_path, render_utterance(spec, text, seed, ui))
            entries.append(Entry(utterance_id=utt_id, speaker_id=spec.speaker_id,
                                 wav_path=str(wav_path), text=text))
    entries.sort(key=lambda e: e.utterance_id)
    manifest = Manifest(entries)
    write_manifest(out_dir / "manifest.tsv", manifest,
                   header_comment=f"toy corpus seed={seed} speakers={n_speakers} "
                                  f"utts={utts_per_speaker}")
    return manifest
