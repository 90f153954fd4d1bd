"""Synthetic transcription corpus: generation, persistence, statistics.

Each utterance is a token sequence rendered into a frame matrix: every
token emits a few copies of its prototype vector plus Gaussian noise.
Homophone pairs are distinct token ids that share one prototype, so
their acoustics are statistically indistinguishable and only context
free guessing can separate them. Generation is a pure function of the
spec (seed included).

File format "mtkd-corpus-v1": line-delimited JSON, header first, one
utterance per line, numbers at full precision so read(write(c)) == c.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

CORPUS_FORMAT = "mtkd-corpus-v1"
SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class Vocabulary:
    """z content tokens with dense ids 0..z-1 plus reserved markers."""

    size: int

    @property
    def blank_id(self) -> int:
        return self.size

    @property
    def bos_id(self) -> int:
        return self.size + 1

    @property
    def eos_id(self) -> int:
        return self.size + 2

    def validate_tokens(self, tokens: Iterable[int]) -> None:
        for t in tokens:
            if not 0 <= t < self.size:
                raise ValueError(f"token id {t} outside content vocabulary of size {self.size}")


@dataclass(frozen=True)
class GenerationSpec:
    z: int = 12
    d: int = 20
    length_range: tuple[int, int] = (3, 10)
    repeat_range: tuple[int, int] = (2, 5)
    sigma: float = 0.3
    homophone_pairs: tuple[tuple[int, int], ...] = ((1, 8), (4, 11))
    split_sizes: tuple[int, int, int] = (2000, 200, 200)
    seed: int = 0

    def validate(self) -> None:
        if self.z < 2:
            raise ValueError("spec: need at least 2 content tokens")
        if self.d < 1:
            raise ValueError("spec: feature dimension must be >= 1")
        lo, hi = self.length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"spec: bad length range {self.length_range}")
        rlo, rhi = self.repeat_range
        if not 1 <= rlo <= rhi:
            raise ValueError(f"spec: bad repeat range {self.repeat_range}")
        if self.sigma < 0:
            raise ValueError("spec: sigma must be non-negative")
        if len(self.split_sizes) != 3 or any(s < 1 for s in self.split_sizes):
            raise ValueError("spec: all three splits must be non-empty")
        for a, b in self.homophone_pairs:
            if a == b:
                raise ValueError(f"spec: homophone pair ({a},{b}) must name distinct tokens")
            if not (0 <= a < self.z and 0 <= b < self.z):
                raise ValueError(f"spec: homophone pair ({a},{b}) outside vocabulary")


@dataclass
class Utterance:
    id: str
    tokens: list[int]
    repeats: list[int]
    frames: np.ndarray  # (T_x, d) float64

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class Corpus:
    vocab: Vocabulary
    spec: GenerationSpec
    prototypes: np.ndarray  # (z, d)
    splits: dict[str, list[Utterance]] = field(default_factory=dict)

    def split(self, name: str) -> list[Utterance]:
        if name not in self.splits:
            raise ValueError(f"unknown split {name!r}")
        return self.splits[name]

    def validate(self) -> None:
        seen: set[str] = set()
        for name in SPLIT_NAMES:
            for utt in self.splits.get(name, []):
                if utt.id in seen:
                    raise ValueError(f"duplicate utterance id {utt.id}")
                seen.add(utt.id)
                self.vocab.validate_tokens(utt.tokens)
                if len(utt.tokens) != len(utt.repeats):
                    raise ValueError(f"{utt.id}: tokens/repeats length mismatch")
                if utt.num_frames != sum(utt.repeats):
                    raise ValueError(f"{utt.id}: frame count does not match repeats")
                if utt.num_frames < len(utt.tokens):
                    raise ValueError(f"{utt.id}: more tokens than frames")
                if not len(utt.tokens):
                    raise ValueError(f"{utt.id}: empty token sequence")


def generate_corpus(spec: GenerationSpec) -> Corpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    prototypes = rng.normal(size=(spec.z, spec.d))
    for a, b in spec.homophone_pairs:
        prototypes[b] = prototypes[a]

    corpus = Corpus(Vocabulary(spec.z), spec, prototypes)
    lo, hi = spec.length_range
    rlo, rhi = spec.repeat_range
    for name, count in zip(SPLIT_NAMES, spec.split_sizes):
        utts = []
        for i in range(count):
            length = int(rng.integers(lo, hi + 1))
            tokens = rng.integers(0, spec.z, size=length)
            repeats = rng.integers(rlo, rhi + 1, size=length)
            proto_rows = np.repeat(prototypes[tokens], repeats, axis=0)
            frames = proto_rows + spec.sigma * rng.normal(size=proto_rows.shape)
            utts.append(Utterance(f"{name}-{i:05d}", tokens.tolist(), repeats.tolist(), frames))
        corpus.splits[name] = utts
    corpus.validate()
    return corpus


def write_corpus(corpus: Corpus, path) -> None:
    header = {
        "format": CORPUS_FORMAT,
        "z": corpus.vocab.size,
        "d": corpus.spec.d,
        "blank_id": corpus.vocab.blank_id,
        "bos_id": corpus.vocab.bos_id,
        "eos_id": corpus.vocab.eos_id,
        "spec": asdict(corpus.spec),
        "prototypes": corpus.prototypes.tolist(),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for name in SPLIT_NAMES:
            for utt in corpus.splits.get(name, []):
                rec = {
                    "id": utt.id,
                    "split": name,
                    "tokens": utt.tokens,
                    "repeats": utt.repeats,
                    "frames": utt.frames.tolist(),
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _spec_from_dict(d: dict) -> GenerationSpec:
    return GenerationSpec(
        z=d["z"],
        d=d["d"],
        length_range=tuple(d["length_range"]),
        repeat_range=tuple(d["repeat_range"]),
        sigma=d["sigma"],
        homophone_pairs=tuple(tuple(p) for p in d["homophone_pairs"]),
        split_sizes=tuple(d["split_sizes"]),
        seed=d["seed"],
    )


def read_corpus(path) -> Corpus:
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise ValueError(f"{path}: empty corpus file (line 1)")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed header (line 1): {exc}") from exc
        if header.get("format") != CORPUS_FORMAT:
            raise ValueError(
                f"{path}: unsupported format {header.get('format')!r}, expected {CORPUS_FORMAT} (line 1)"
            )
        spec = _spec_from_dict(header["spec"])
        z, d = header["z"], header["d"]
        if (z, d) != (spec.z, spec.d):
            raise ValueError(f"{path}: header z/d disagree with spec (line 1)")
        prototypes = np.asarray(header["prototypes"], dtype=np.float64)
        if prototypes.shape != (z, d):
            raise ValueError(f"{path}: prototypes shape {prototypes.shape} != ({z}, {d}) (line 1)")
        corpus = Corpus(Vocabulary(z), spec, prototypes, {name: [] for name in SPLIT_NAMES})
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                raise ValueError(f"{path}: blank record (line {lineno})")
            try:
                rec = json.loads(line)
                utt = Utterance(
                    rec["id"],
                    rec["tokens"],
                    rec["repeats"],
                    np.asarray(rec["frames"], dtype=np.float64),
                )
                split = rec["split"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: malformed utterance record (line {lineno}): {exc}") from exc
            if split not in SPLIT_NAMES:
                raise ValueError(f"{path}: unknown split {split!r} (line {lineno})")
            if utt.frames.ndim != 2 or utt.frames.shape[1] != d:
                raise ValueError(
                    f"{path}: frame matrix shape {utt.frames.shape} incompatible with d={d} (line {lineno})"
                )
            if utt.num_frames != sum(utt.repeats):
                raise ValueError(f"{path}: frames/repeats mismatch for {utt.id} (line {lineno})")
            corpus.splits[split].append(utt)
    corpus.validate()
    return corpus


def corpus_stats(corpus: Corpus) -> dict:
    """Exact counts: split sizes, token frequencies, length distributions."""
    all_utts = [u for name in SPLIT_NAMES for u in corpus.splits.get(name, [])]
    if not all_utts:
        raise ValueError("corpus_stats: empty corpus")
    token_freq = [0] * corpus.vocab.size
    for u in all_utts:
        for t in u.tokens:
            token_freq[t] += 1
    tx = np.array([u.num_frames for u in all_utts])
    ty = np.array([len(u.tokens) for u in all_utts])
    return {
        "split_sizes": {name: len(corpus.splits.get(name, [])) for name in SPLIT_NAMES},
        "num_utterances": len(all_utts),
        "token_frequencies": token_freq,
        "total_tokens": int(ty.sum()),
        "frames": {"min": int(tx.min()), "mean": float(tx.mean()), "max": int(tx.max())},
        "tokens": {"min": int(ty.min()), "mean": float(ty.mean()), "max": int(ty.max())},
        "mean_frames_per_token": float(tx.sum() / ty.sum()),
    }
