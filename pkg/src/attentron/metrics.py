"""Objective evaluation: DTW-aligned mel-cepstral distortion, embedding
cosine similarity, and attention-collapse counting.

Similarity scores here come from this package's own coarse encoder (or
caller-supplied vectors), not from a pretrained speaker-verification
model, so absolute values are not comparable with published figures;
only orderings within one run are meaningful.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import MelSpectrogram, mel_cepstrum
from .errors import LengthError, UndefinedSimilarityError

MCD_CONSTANT = (10.0 / np.log(10.0)) * np.sqrt(2.0)
COLLAPSE_FACTOR = 4


@dataclass
class AlignmentResult:
    cost: float
    path: list                       # [(i, j)] from (0,0) to (L_a-1, L_b-1)


@dataclass
class EvalRecord:
    utterance_id: str
    l_v: int                         # synthesized frame count
    l_t: int                         # input text length
    mcd_dtw: float
    similarity: float

    @property
    def collapsed(self) -> bool:
        return self.l_v > COLLAPSE_FACTOR * self.l_t


def dtw_align(a: np.ndarray, b: np.ndarray) -> AlignmentResult:
    """Full-grid DTW with steps {down, right, diagonal}, Euclidean local cost.

    Ties prefer diagonal, then down (advance in a), then right.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    la, lb = a.shape[0], b.shape[0]
    if la == 0 or lb == 0:
        raise LengthError("dtw_align: empty input")
    local = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    acc = np.full((la, lb), np.inf)
    move = np.zeros((la, lb), dtype=np.int8)   # 0 diag, 1 down, 2 right
    acc[0, 0] = local[0, 0]
    for j in range(1, lb):
        acc[0, j] = acc[0, j - 1] + local[0, j]
        move[0, j] = 2
    for i in range(1, la):
        acc[i, 0] = acc[i - 1, 0] + local[i, 0]
        move[i, 0] = 1
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, lb):
            diag, down, right = prev[j - 1], prev[j], row[j - 1]
            best, m = diag, 0
            if down < best:
                best, m = down, 1
            if right < best:
                best, m = right, 2
            row[j] = best + local[i, j]
            move[i, j] = m
    path = []
    i, j = la - 1, lb - 1
    while True:
        path.append((i, j))
        if i == 0 and j == 0:
            break
        m = move[i, j]
        if m == 0:
            i, j = i - 1, j - 1
        elif m == 1:
            i -= 1
        else:
            j -= 1
    path.reverse()
    return AlignmentResult(cost=float(acc[la - 1, lb - 1]), path=path)


def mcd_dtw(mel_a, mel_b, n_coeffs: int = 13) -> float:
    """Mel-cepstral distortion in dB after DTW alignment on cepstra 1..13."""
    a = mel_a if isinstance(mel_a, MelSpectrogram) else MelSpectrogram(frames=np.asarray(mel_a))
    b = mel_b if isinstance(mel_b, MelSpectrogram) else MelSpectrogram(frames=np.asarray(mel_b))
    if len(a) == 0 or len(b) == 0:
        raise LengthError("mcd_dtw: empty spectrogram")
    ca = mel_cepstrum(a, n_coeffs)
    cb = mel_cepstrum(b, n_coeffs)
    ali = dtw_align(ca, cb)
    return float(MCD_CONSTANT * ali.cost / len(ali.path))


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _as_embedding(item, embedder):
    arr = np.asarray(item.frames if isinstance(item, MelSpectrogram) else item)
    if arr.ndim == 1:
        return arr.astype(np.float64)
    if embedder is None:
        raise UndefinedSimilarityError("2-d input needs an embedder")
    return np.asarray(embedder(item), dtype=np.float64)


def speaker_similarity(synth, target_utterances: list, embedder=None) -> float:
    """Cosine between the synthetic embedding and the mean of the targets'.

    Items may be mel spectrograms (run through `embedder`) or ready vectors.
    Target embeddings are L2-normalized before averaging.
    """
    if not target_utterances:
        raise LengthError("speaker_similarity: no target utterances")
    synth_emb = _as_embedding(synth, embedder)
    targets = []
    for item in target_utterances:
        e = _as_embedding(item, embedder)
        n = np.linalg.norm(e)
        if n == 0.0:
            raise UndefinedSimilarityError("target embedding is a zero vector")
        targets.append(e / n)
    return cosine_similarity(synth_emb, np.mean(targets, axis=0))


def collapse_count(records) -> int:
    """Count items whose synthesized length strictly exceeds 4x text length."""
    total = 0
    for item in records:
        if isinstance(item, EvalRecord):
            total += item.collapsed
        else:
            l_v, l_t = item
            total += l_v > COLLAPSE_FACTOR * l_t
    return total


# ---------------------------------------------------------------- reports

REPORT_HEADER = ["utterance_id", "L_v", "L_t", "mcd_dtw", "similarity", "collapsed"]


def write_report(path, records: list[EvalRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for r in records:
            writer.writerow([r.utterance_id, r.l_v, r.l_t,
                             f"{r.mcd_dtw:.6f}", f"{r.similarity:.6f}",
                             str(r.collapsed).lower()])


def write_summary(path, records: list[EvalRecord]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(records)
    mean_mcd = float(np.mean([r.mcd_dtw for r in records])) if n else float("nan")
    mean_sim = float(np.mean([r.similarity for r in records])) if n else float("nan")
    text = (f"mean_mcd={mean_mcd:.6f}\n"
            f"mean_sim={mean_sim:.6f}\n"
            f"collapse_count={collapse_count(records)}\n"
            f"n={n}\n")
    path.write_text(text, encoding="utf-8")


def read_report(path) -> list[EvalRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(EvalRecord(
                utterance_id=row["utterance_id"], l_v=int(row["L_v"]),
                l_t=int(row["L_t"]), mcd_dtw=float(row["mcd_dtw"]),
                similarity=float(row["similarity"])))
    return records
