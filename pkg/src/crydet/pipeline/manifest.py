"""Labelled sample index stored as JSON lines."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..audio_io import read_wav
from ..errors import DataError

log = logging.getLogger(__name__)

SUBCLASSES = ("Cry", "Speech", "Household", "Non-speech", "CatMeows", "Silences")
CRY, NON_CRY = "cry", "non-cry"
AUDIO_SUFFIXES = (".wav",)


def label_for(subclass: str) -> str:
    if subclass not in SUBCLASSES:
        raise DataError(f"unknown subclass {subclass!r}; expected one of {SUBCLASSES}")
    return CRY if subclass == "Cry" else NON_CRY


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    subclass: str
    duration_s: float

    @property
    def target(self) -> int:
        return 1 if self.label == CRY else 0


class DatasetManifest:
    def __init__(self, entries: Iterable[ManifestEntry]):
        self.entries = list(entries)
        self.validate()

    def validate(self) -> None:
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise DataError(f"duplicate manifest path {e.path}")
            seen.add(e.path)
            if e.label != label_for(e.subclass):
                raise DataError(f"{e.path}: label {e.label!r} inconsistent with subclass {e.subclass!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i) -> ManifestEntry:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    @property
    def targets(self) -> np.ndarray:
        return np.array([e.target for e in self.entries], dtype=np.int64)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.label] = out.get(e.label, 0) + 1
        return out

    def subset(self, indices) -> "DatasetManifest":
        return DatasetManifest(self.entries[int(i)] for i in indices)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(asdict(e)) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "DatasetManifest":
        entries = []
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    entries.append(
                        ManifestEntry(str(rec["path"]), rec["label"], rec["subclass"], float(rec["duration_s"]))
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"{path}:{n}: bad manifest record ({exc})") from exc
        if not entries:
            raise DataError(f"{path}: no samples")
        return cls(entries)


def build_manifest(root, rules: dict[str, str]) -> DatasetManifest:
    """Scan ``root`` with one glob per subclass; unreadable files are logged and skipped."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    claimed: dict[Path, str] = {}
    entries = []
    for subclass, pattern in rules.items():
        label = label_for(subclass)
        for path in sorted(root.glob(pattern)):
            if not path.is_file():
                continue
            if path.suffix.lower() not in AUDIO_SUFFIXES:
                log.info("skipping non-audio file %s", path)
                continue
            if path in claimed:
                raise DataError(f"{path} matched by both {claimed[path]!r} and {subclass!r}")
            claimed[path] = subclass
            try:
                clip = read_wav(path)
            except Exception as exc:  # noqa: BLE001 - any decode failure means skip
                log.warning("skipping unreadable file %s: %s", path, exc)
                continue
            entries.append(ManifestEntry(str(path), label, subclass, round(clip.duration_s, 6)))
    if not entries:
        raise DataError(f"no samples found under {root}")
    return DatasetManifest(entries)
