"""Synthetic cipher-language bitext with exact ground truth, plus scoring.

The "target language" is a bijective token substitution of the source with
window-local shuffling and optional noise, so gold alignments are known by
construction and precision/recall of an extraction run are objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .ingest import Article, BootstrapCorpus

__all__ = [
    "GoldAlignment",
    "SyntheticData",
    "SyntheticSpec",
    "format_metrics",
    "gen_synthetic",
    "precision_recall",
    "read_gold_tsv",
    "write_bootstrap_tsv",
    "write_gold_tsv",
    "write_wiki_dump",
]


@dataclass(frozen=True)
class SyntheticSpec:
    vocab_size: int = 120  # content tokens per language
    n_bootstrap: int = 2000
    n_articles: int = 500
    sents_per_article: tuple[int, int] = (5, 20)
    parallel_fraction: float = 0.3
    noise: float = 0.0  # per-token replacement rate on the target side
    seed: int = 0
    sent_len: tuple[int, int] = (4, 9)  # content tokens per sentence
    shuffle_window: int = 2  # local shuffle block size; 1 = pure substitution

    def validate(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 0.0 <= self.parallel_fraction <= 1.0:
            raise ValueError("parallel_fraction must be in [0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if self.shuffle_window < 1:
            raise ValueError("shuffle_window must be >= 1")
        if self.sent_len[0] < 1 or self.sent_len[0] > self.sent_len[1]:
            raise ValueError("bad sent_len range")
        if self.sents_per_article[0] < 1 or self.sents_per_article[0] > self.sents_per_article[1]:
            raise ValueError("bad sents_per_article range")


class GoldAlignment:
    """The true (pair_id, src_idx, tgt_idx) alignments; a matching per side."""

    def __init__(self, items: Iterable[tuple[str, int, int]]):
        self.items: frozenset[tuple[str, int, int]] = frozenset(items)
        per_side_src = {(pid, s) for pid, s, _ in self.items}
        per_side_tgt = {(pid, t) for pid, _, t in self.items}
        if len(per_side_src) != len(self.items) or len(per_side_tgt) != len(self.items):
            raise ValueError("gold alignment reuses a sentence index on one side")

    def __len__(self) -> int:
        return len(self.items)

    def __eq__(self, other) -> bool:
        return isinstance(other, GoldAlignment) and self.items == other.items


@dataclass
class SyntheticData:
    bootstrap: BootstrapCorpus
    src_articles: list[Article]
    tgt_articles: list[Article]
    title_map: list[tuple[str, str]]
    gold: GoldAlignment


def _sentence_indices(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    length = int(rng.integers(spec.sent_len[0], spec.sent_len[1] + 1))
    return rng.integers(0, spec.vocab_size, length)


def _src_surface(indices: np.ndarray) -> str:
    return " ".join(f"s{k}" for k in indices) + " ."


def _tgt_surface(indices: np.ndarray) -> str:
    return " ".join(f"t{k}" for k in indices) + " ."


def _translate(indices: np.ndarray, cipher: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    out = cipher[indices].copy()
    w = spec.shuffle_window
    if w > 1:
        for start in range(0, len(out), w):
            block = out[start : start + w]
            out[start : start + len(block)] = block[rng.permutation(len(block))]
    if spec.noise > 0.0:
        mask = rng.random(len(out)) < spec.noise
        out[mask] = rng.integers(0, spec.vocab_size, int(mask.sum()))
    return out


def gen_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Generate a bootstrap corpus, comparable articles, and gold alignments.

    Articles mix gold-aligned translated sentences (parallel_fraction of the
    smaller side) with unaligned distractors; everything is deterministic
    given the seed.  Articles round-trip through the standard ingestion path:
    sentence segmentation recovers exactly the generated sentences, so gold
    indices line up with extractor indices.
    """
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0])
    cipher = rng.permutation(spec.vocab_size)

    pairs = []
    for _ in range(spec.n_bootstrap):
        src = _sentence_indices(spec, rng)
        pairs.append((_src_surface(src), _tgt_surface(_translate(src, cipher, spec, rng))))
    bootstrap = BootstrapCorpus(pairs=pairs, source="<synthetic>", retained=len(pairs), rejected=0)

    src_articles: list[Article] = []
    tgt_articles: list[Article] = []
    title_map: list[tuple[str, str]] = []
    gold: list[tuple[str, int, int]] = []
    art_rng = np.random.default_rng([spec.seed, 1])
    lo, hi = spec.sents_per_article
    for a in range(spec.n_articles):
        pair_id = f"syn{a:05d}"
        n_src = int(art_rng.integers(lo, hi + 1))
        n_tgt = int(art_rng.integers(lo, hi + 1))
        n_gold = round(spec.parallel_fraction * min(n_src, n_tgt))
        src_slots = art_rng.permutation(n_src)[:n_gold]
        tgt_slots = art_rng.permutation(n_tgt)[:n_gold]

        src_sents = [_src_surface(_sentence_indices(spec, art_rng)) for _ in range(n_src)]
        tgt_sents = [_tgt_surface(_sentence_indices(spec, art_rng)) for _ in range(n_tgt)]
        for si, ti in zip(src_slots, tgt_slots):
            aligned = _sentence_indices(spec, art_rng)
            src_sents[si] = _src_surface(aligned)
            tgt_sents[ti] = _tgt_surface(_translate(aligned, cipher, spec, art_rng))
            gold.append((pair_id, int(si), int(ti)))

        src_articles.append(Article(title=pair_id, text=" ".join(src_sents), lang="src"))
        tgt_articles.append(Article(title=pair_id, text=" ".join(tgt_sents), lang="tgt"))
        title_map.append((pair_id, pair_id))

    return SyntheticData(
        bootstrap=bootstrap,
        src_articles=src_articles,
        tgt_articles=tgt_articles,
        title_map=title_map,
        gold=GoldAlignment(gold),
    )


def precision_recall(
    extracted: Iterable[tuple[str, int, int]],
    gold: GoldAlignment,
) -> tuple[float, float, float]:
    """Precision, recall, and F1 of an extraction against gold alignments.

    An empty extraction has precision 1.0 (nothing asserted, nothing wrong);
    empty gold with an empty extraction scores (1, 1, 1); F1 is 0 when
    precision + recall is 0.
    """
    ext = set(extracted)
    hits = len(ext & gold.items)
    if not ext and not gold.items:
        return (1.0, 1.0, 1.0)
    precision = hits / len(ext) if ext else 1.0
    recall = hits / len(gold.items) if gold.items else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return (precision, recall, f1)


def format_metrics(precision: float, recall: float, f1: float) -> str:
    return f"{precision:.4f}\t{recall:.4f}\t{f1:.4f}\n"


def write_gold_tsv(gold: GoldAlignment, path: str | Path) -> None:
    lines = [f"{pid}\t{s}\t{t}" for pid, s, t in sorted(gold.items)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_gold_tsv(path: str | Path) -> GoldAlignment:
    items = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}: malformed gold line {n}")
        items.append((fields[0], int(fields[1]), int(fields[2])))
    return GoldAlignment(items)


def write_bootstrap_tsv(corpus: BootstrapCorpus, path: str | Path) -> None:
    Path(path).write_text(
        "".join(f"{s}\t{t}\n" for s, t in corpus.pairs),
        encoding="utf-8",
    )


def write_wiki_dump(
    articles: Iterable[Article],
    path: str | Path,
    lang: str = "en",
    redirect_every: int | None = None,
    non_main_every: int | None = None,
) -> dict[str, int]:
    """Write articles as a MediaWiki pages-articles XML export.

    Optionally interleaves a redirect page every ``redirect_every`` articles
    and a talk-namespace page every ``non_main_every``, for exercising the
    parser's skip counters.  Streams, so arbitrarily large dumps stay cheap.
    Returns the page counts written.
    """
    counts = {"pages": 0, "articles": 0, "redirects": 0, "non_main": 0}
    with open(path, "w", encoding="utf-8") as f:
        f.write(f'<mediawiki xml:lang="{lang}">\n')

        def page(title, text, ns=0, redirect=False):
            counts["pages"] += 1
            f.write("<page>\n")
            f.write(f"  <title>{escape(title)}</title>\n")
            f.write(f"  <ns>{ns}</ns>\n")
            if redirect:
                f.write(f'  <redirect title="{escape(text, {chr(34): "&quot;"})}" />\n')
                f.write("  <revision><text></text></revision>\n")
            else:
                f.write(f"  <revision><text>{escape(text)}</text></revision>\n")
            f.write("</page>\n")

        for i, art in enumerate(articles):
            page(art.title, art.text)
            counts["articles"] += 1
            if redirect_every and (i + 1) % redirect_every == 0:
                page(f"Redirect {i}", art.title, redirect=True)
                counts["redirects"] += 1
            if non_main_every and (i + 1) % non_main_every == 0:
                page(f"Talk:Page {i}", "talk talk", ns=1)
                counts["non_main"] += 1
        f.write("</mediawiki>\n")
    return counts
