"""Readers for bootstrap corpora and comparable-article sources.

Covers tab-separated parallel corpora, streaming MediaWiki XML dumps
(optionally gzip/bzip2 compressed), a pragmatic wikitext stripper, and
title-map based article pairing.
"""

from __future__ import annotations

import bz2
import gzip
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Sequence

from .textcore import Sentence, Vocabulary, encode_sentence, segment_sentences, tokenize

__all__ = [
    "Article",
    "ArticlePair",
    "BootstrapCorpus",
    "DumpCounts",
    "DumpParseError",
    "PairingStats",
    "pair_articles",
    "parse_wiki_dump",
    "read_parallel_tsv",
    "read_title_map",
    "strip_markup",
]


@dataclass
class BootstrapCorpus:
    """Sentence-aligned seed corpus: (source, target) surface pairs."""

    pairs: list[tuple[str, str]]
    source: str
    retained: int
    rejected: int

    @property
    def total(self) -> int:
        return self.retained + self.rejected


def read_parallel_tsv(path: str | Path) -> BootstrapCorpus:
    """Read one 'src<TAB>tgt' pair per line, skipping and counting malformed
    lines (missing side, stray tabs).  Order is preserved.
    """
    pairs: list[tuple[str, str]] = []
    rejected = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2 or not fields[0].strip() or not fields[1].strip():
                rejected += 1
                continue
            pairs.append((fields[0].strip(), fields[1].strip()))
    if not pairs:
        raise ValueError(f"{path}: empty corpus (no well-formed pairs)")
    return BootstrapCorpus(pairs=pairs, source=str(path), retained=len(pairs), rejected=rejected)


@dataclass(frozen=True)
class Article:
    title: str
    text: str
    lang: str


@dataclass
class DumpCounts:
    pages: int = 0
    articles: int = 0
    redirects: int = 0
    non_main: int = 0

    def conserved(self) -> bool:
        return self.pages == self.articles + self.redirects + self.non_main


class DumpParseError(ValueError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (near byte {byte_offset})")
        self.byte_offset = byte_offset


class _CountingStream:
    """Wraps a binary stream, tracking how many bytes the parser consumed."""

    def __init__(self, raw: BinaryIO):
        self._raw = raw
        self.bytes_read = 0

    def read(self, n: int = -1) -> bytes:
        chunk = self._raw.read(n)
        self.bytes_read += len(chunk)
        return chunk


def _open_dump(source) -> BinaryIO:
    if hasattr(source, "read"):
        return source
    path = Path(source)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    if path.suffix == ".bz2":
        return bz2.open(path, "rb")
    return open(path, "rb")


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_wiki_dump(source, counts: DumpCounts | None = None) -> Iterator[Article]:
    """Stream articles out of a MediaWiki pages-articles XML export.

    Yields (title, text) for main-namespace, non-redirect pages in dump
    order; redirects and other namespaces are counted and skipped.  Memory
    stays constant in the dump size: each page element is discarded as soon
    as it has been processed.  Raises ``DumpParseError`` with an approximate
    byte offset on malformed or truncated XML; pages yielded before the
    error remain valid.
    """
    if counts is None:
        counts = DumpCounts()
    stream = _CountingStream(_open_dump(source))
    lang = "und"
    root = None
    try:
        for event, elem in ET.iterparse(stream, events=("start", "end")):
            if event == "start":
                if root is None:
                    root = elem
                    lang = elem.get("{http://www.w3.org/XML/1998/namespace}lang", "und")
                continue
            if _local(elem.tag) != "page":
                continue
            counts.pages += 1
            ns = None
            title = ""
            text = ""
            redirect = False
            for child in elem:
                tag = _local(child.tag)
                if tag == "title":
                    title = (child.text or "").replace("\t", " ").replace("\n", " ").strip()
                elif tag == "ns":
                    ns = int(child.text or 0)
                elif tag == "redirect":
                    redirect = True
                elif tag == "revision":
                    for sub in child:
                        if _local(sub.tag) == "text":
                            text = sub.text or ""
            if redirect:
                counts.redirects += 1
            elif ns not in (None, 0):
                counts.non_main += 1
            else:
                counts.articles += 1
                yield Article(title=title, text=text, lang=lang)
            elem.clear()
            if root is not None:
                root.clear()
    except ET.ParseError as exc:
        raise DumpParseError(f"malformed XML: {exc}", stream.bytes_read) from exc


# --- wikitext stripping -------------------------------------------------

_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_REF_PAIR = re.compile(r"<ref[^>/]*>.*?</ref>", re.DOTALL | re.IGNORECASE)
_REF_SELF = re.compile(r"<ref[^>]*/>", re.IGNORECASE)
_REF_OPEN = re.compile(r"<ref[^>]*>[^\n]*", re.IGNORECASE)
_TEMPLATE = re.compile(r"\{\{[^{}]*\}\}")
_TABLE = re.compile(r"\{\|.*?\|\}", re.DOTALL)
_UNBALANCED_BRACE = re.compile(r"(\{\{|\{\|)[^\n]*")
_LINK_LABELED = re.compile(r"\[\[([^\[\]|]*)\|([^\[\]|]*)\]\]")
_LINK_PLAIN = re.compile(r"\[\[([^\[\]|]*)\]\]")
_EXT_LINK_LABELED = re.compile(r"\[(?:https?|ftp)://[^\s\]]*\s+([^\]]*)\]")
_EXT_LINK_BARE = re.compile(r"\[(?:https?|ftp)://[^\s\]]*\]")
_HTML_TAG = re.compile(r"</?[a-zA-Z][^>\n]*>")
_HEADING = re.compile(r"^=+.*=+\s*$", re.MULTILINE)
_LIST_MARKER = re.compile(r"^[*#:;]+\s*", re.MULTILINE)
_MEDIA_PREFIXES = ("file:", "image:", "category:")


def _drop_media_links(text: str) -> str:
    # [[File:...]] captions may nest [[links]]; needs a depth scan
    out = []
    i = 0
    n = len(text)
    while True:
        k = text.find("[[", i)
        if k == -1:
            out.append(text[i:])
            break
        head = text[k + 2 : k + 14].lower()
        if not any(head.startswith(p) for p in _MEDIA_PREFIXES):
            out.append(text[i : k + 2])
            i = k + 2
            continue
        out.append(text[i:k])
        depth = 1
        j = k + 2
        while depth > 0:
            nxt_open = text.find("[[", j)
            nxt_close = text.find("]]", j)
            if nxt_close == -1:
                break  # unbalanced: drop to end of line
            if nxt_open != -1 and nxt_open < nxt_close:
                depth += 1
                j = nxt_open + 2
            else:
                depth -= 1
                j = nxt_close + 2
        if depth == 0:
            i = j
        else:
            nl = text.find("\n", k)
            i = n if nl == -1 else nl
    return "".join(out)


def strip_markup(wikitext: str) -> str:
    """Reduce wikitext to plain text: drop templates, tables, refs, comments,
    media/category links and HTML tags; rewrite [[target|label]] to the label.
    Best-effort on unbalanced markup (drops to end of line).  Idempotent.
    """
    text = _COMMENT.sub("", wikitext)
    text = _REF_PAIR.sub("", text)
    text = _REF_SELF.sub("", text)
    text = _REF_OPEN.sub("", text)
    while True:
        new = _TEMPLATE.sub("", text)
        if new == text:
            break
        text = new
    while True:
        new = _TABLE.sub("", text)
        if new == text:
            break
        text = new
    text = _UNBALANCED_BRACE.sub("", text)
    text = text.replace("|}", "").replace("}}", "")  # strays from unbalanced nesting
    text = _drop_media_links(text)
    while True:
        new = _LINK_LABELED.sub(r"\2", text)
        new = _LINK_PLAIN.sub(r"\1", new)
        if new == text:
            break
        text = new
    text = _EXT_LINK_LABELED.sub(r"\1", text)
    text = _EXT_LINK_BARE.sub("", text)
    text = _HEADING.sub("", text)
    text = _HTML_TAG.sub("", text)
    text = text.replace("'''", "").replace("''", "")
    text = text.replace("&nbsp;", " ")
    text = _LIST_MARKER.sub("", text)
    lines = [re.sub(r"[ \t]+", " ", ln).strip() for ln in text.split("\n")]
    return "\n".join(ln for ln in lines if ln)


# --- article pairing ----------------------------------------------------


@dataclass
class ArticlePair:
    """Aligned comparable documents, segmented and encoded."""

    pair_id: str
    src_sents: list[Sentence]
    tgt_sents: list[Sentence]


@dataclass
class PairingStats:
    map_rows: int = 0
    paired: int = 0
    skipped_missing: int = 0

    def conserved(self) -> bool:
        return self.map_rows == self.paired + self.skipped_missing


def read_title_map(path: str | Path) -> list[tuple[str, str]]:
    """TSV of 'src_title<TAB>tgt_title' rows."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0].strip() or not fields[1].strip():
                raise ValueError(f"{path}: malformed title-map line {n}")
            rows.append((fields[0].strip(), fields[1].strip()))
    return rows


def _encode_article(text: str, vocab: Vocabulary) -> list[Sentence]:
    sents = []
    for seg in segment_sentences(text):
        toks = tokenize(seg)
        if toks:
            sents.append(encode_sentence(toks, vocab, seg))
    return sents


def pair_articles(
    src_articles: Iterable[Article],
    tgt_articles: Iterable[Article],
    title_map: Sequence[tuple[str, str]],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    stats: PairingStats | None = None,
) -> Iterator[ArticlePair]:
    """Join articles on a title map, segmenting and encoding each side.

    The source title becomes the pair id.  Map rows whose articles are
    missing on either side are skipped and counted.  Duplicate titles in
    the map are an error (they would make pair ids ambiguous).
    """
    if stats is None:
        stats = PairingStats()
    dup_src = _duplicates(t for t, _ in title_map)
    dup_tgt = _duplicates(t for _, t in title_map)
    if dup_src or dup_tgt:
        raise ValueError(f"duplicate titles in map: {sorted(dup_src | dup_tgt)!r}")
    stats.map_rows = len(title_map)
    by_src = {a.title: a for a in src_articles}
    by_tgt = {a.title: a for a in tgt_articles}
    for src_title, tgt_title in title_map:
        src = by_src.get(src_title)
        tgt = by_tgt.get(tgt_title)
        if src is None or tgt is None:
            stats.skipped_missing += 1
            continue
        stats.paired += 1
        yield ArticlePair(
            pair_id=src_title,
            src_sents=_encode_article(src.text, src_vocab),
            tgt_sents=_encode_article(tgt.text, tgt_vocab),
        )


def _duplicates(items: Iterable[str]) -> set[str]:
    seen: set[str] = set()
    dups: set[str] = set()
    for it in items:
        if it in seen:
            dups.add(it)
        seen.add(it)
    return dups
