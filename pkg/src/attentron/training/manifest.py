"""Tab-separated corpus manifests: utterance_id, speaker_id, wav_path, text."""

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from ..errors import ManifestError


@dataclass
class Entry:
    utterance_id: str
    speaker_id: str
    wav_path: str
    text: str


@dataclass
class Manifest:
    entries: list[Entry]

    def __len__(self):
        return len(self.entries)

    def by_speaker(self) -> dict[str, list[Entry]]:
        out: dict[str, list[Entry]] = {}
        for e in self.entries:
            out.setdefault(e.speaker_id, []).append(e)
        return out

    def speakers(self) -> list[str]:
        seen = dict.fromkeys(e.speaker_id for e in self.entries)
        return list(seen)

    def filter_speakers(self, speaker_ids) -> "Manifest":
        wanted = set(speaker_ids)
        return Manifest([e for e in self.entries if e.speaker_id in wanted])


def parse_manifest(path, require_pairs: bool = True) -> Manifest:
    """Parse and validate; `#` lines are comments. Errors carry line numbers."""
    path = Path(path)
    entries = []
    seen_ids: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields, "
                                f"got {len(parts)}")
        utt, spk, wav, text = (p.strip() for p in parts)
        if not utt or not spk or not wav or not text:
            raise ManifestError(f"{path}:{lineno}: empty field")
        if utt in seen_ids:
            raise ManifestError(f"{path}:{lineno}: duplicate utterance_id {utt!r} "
                                f"(first seen on line {seen_ids[utt]})")
        seen_ids[utt] = lineno
        entries.append(Entry(utt, spk, wav, text))
    if not entries:
        raise ManifestError(f"{path}: no entries")
    if require_pairs:
        counts = Counter(e.speaker_id for e in entries)
        lonely = [s for s, c in counts.items() if c < 2]
        if lonely:
            raise ManifestError(f"{path}: speakers with fewer than 2 utterances: "
                                f"{', '.join(sorted(lonely))}")
    return Manifest(entries)


def write_manifest(path, manifest: Manifest, header_comment: str = ""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    for e in manifest.entries:
        lines.append(f"{e.utterance_id}\t{e.speaker_id}\t{e.wav_path}\t{e.text}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
