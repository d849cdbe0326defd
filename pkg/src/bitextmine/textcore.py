"""Tokenization, sentence segmentation, vocabularies, and integer encoding."""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "PAD_ID",
    "UNK_ID",
    "BOS_ID",
    "EOS_ID",
    "SPECIAL_TOKENS",
    "Sentence",
    "Vocabulary",
    "build_vocab",
    "encode_sentence",
    "load_vocab",
    "segment_sentences",
    "tokenize",
]

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")

# terminal punctuation that may end a sentence (incl. Devanagari danda)
_SENT_SPLIT = re.compile(r"(?<=[.!?।॥])\s+")


def tokenize(text: str) -> list[str]:
    """Split text into word tokens.

    NFC-normalizes, lowercases (a no-op for scripts without case), splits on
    whitespace, and breaks punctuation characters out as standalone tokens.
    Deterministic; empty input yields an empty list.
    """
    text = unicodedata.normalize("NFC", text).lower()
    tokens: list[str] = []
    for chunk in text.split():
        run: list[str] = []
        for ch in chunk:
            if unicodedata.category(ch).startswith("P"):
                if run:
                    tokens.append("".join(run))
                    run = []
                tokens.append(ch)
            else:
                run.append(ch)
        if run:
            tokens.append("".join(run))
    return tokens


def segment_sentences(text: str) -> list[str]:
    """Split plain text into sentences.

    Cuts after '.', '!', '?', '।' or '॥' when followed by whitespace, so
    abbreviation-internal dots ("3.14") never split.  Whitespace-only
    segments are dropped; trailing text without terminal punctuation is
    kept as a final segment.
    """
    return [seg for seg in (s.strip() for s in _SENT_SPLIT.split(text)) if seg]


@dataclass(frozen=True)
class Sentence:
    """Token-id sequence plus the surface text it came from."""

    ids: tuple[int, ...]
    surface: str

    def __len__(self) -> int:
        return len(self.ids)


class Vocabulary:
    """Immutable token<->id mapping for one language.

    Ids are dense in [0, size); ids 0..3 are the reserved specials
    <pad>, <unk>, <bos>, <eos> and are never remapped.
    """

    def __init__(self, lang: str, tokens: Sequence[str], counts: Sequence[int]):
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the four special tokens")
        if len(tokens) != len(set(tokens)):
            raise ValueError("duplicate tokens in vocabulary")
        if len(counts) != len(tokens):
            raise ValueError("counts and tokens length mismatch")
        self.lang = lang
        self.id_to_token: tuple[str, ...] = tuple(tokens)
        self.counts: tuple[int, ...] = tuple(int(c) for c in counts)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(tokens)}

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        """Id of ``token``, or UNK for out-of-vocabulary tokens."""
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def serialize(self) -> str:
        """Canonical text form: header plus one 'token<TAB>id<TAB>count' line per id."""
        lines = [f"#vocab v1 lang={self.lang} size={self.size}"]
        for i, (tok, cnt) in enumerate(zip(self.id_to_token, self.counts)):
            lines.append(f"{tok}\t{i}\t{cnt}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    def content_hash(self) -> str:
        """sha256 of the canonical serialization; used to pin checkpoints."""
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def __repr__(self) -> str:
        return f"Vocabulary(lang={self.lang!r}, size={self.size})"


_HEADER = re.compile(r"^#vocab v1 lang=(\S+) size=(\d+)$")


def load_vocab(path: str | Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty vocabulary file")
    m = _HEADER.match(lines[0])
    if m is None:
        raise ValueError(f"{path}: bad vocabulary header {lines[0]!r}")
    lang, size = m.group(1), int(m.group(2))
    if len(lines) - 1 != size:
        raise ValueError(f"{path}: header says {size} entries, found {len(lines) - 1}")
    tokens: list[str] = []
    counts: list[int] = []
    for n, line in enumerate(lines[1:]):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}: malformed line {n + 2}")
        tok, tid, cnt = fields
        if int(tid) != n:
            raise ValueError(f"{path}: ids not dense at line {n + 2}")
        tokens.append(tok)
        counts.append(int(cnt))
    return Vocabulary(lang, tokens, counts)


def build_vocab(
    corpus: Iterable[Sequence[str]],
    lang: str,
    max_size: int = 30000,
    min_count: int = 1,
) -> Vocabulary:
    """Build a vocabulary from a stream of token sequences.

    Keeps the most frequent tokens with count >= ``min_count``, capped at
    ``max_size`` including the four specials.  Ties break by first
    occurrence, so the result is deterministic for a fixed stream.
    An empty corpus yields a specials-only vocabulary.
    """
    if max_size < len(SPECIAL_TOKENS) + 1:
        raise ValueError(f"max_size must be >= {len(SPECIAL_TOKENS) + 1}, got {max_size}")
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    n = 0
    for seq in corpus:
        for tok in seq:
            if tok not in counts:
                counts[tok] = 1
                first_seen[tok] = n
            else:
                counts[tok] += 1
            n += 1
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], first_seen[t]),
    )[: max_size - len(SPECIAL_TOKENS)]
    tokens = list(SPECIAL_TOKENS) + kept
    return Vocabulary(lang, tokens, [0] * len(SPECIAL_TOKENS) + [counts[t] for t in kept])


def encode_sentence(
    tokens: Sequence[str],
    vocab: Vocabulary,
    surface: str | None = None,
) -> Sentence:
    """Map tokens to ids (OOV -> UNK), retaining the surface text."""
    if not tokens:
        raise ValueError("empty sentence")
    if surface is None:
        surface = " ".join(tokens)
    return Sentence(tuple(vocab.id_of(t) for t in tokens), surface)
