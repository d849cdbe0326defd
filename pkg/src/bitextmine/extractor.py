"""Candidate generation, scoring, threshold decisions, and greedy decoding."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Tape
from .classifier import match_features, probability
from .encoder import encode
from .ingest import ArticlePair
from .model import SiameseModel
from .textcore import Sentence

__all__ = [
    "ExtractConfig",
    "ExtractedRow",
    "ExtractionReport",
    "ScoredPair",
    "candidate_pairs",
    "decide",
    "extract_corpus",
    "format_extraction_tsv",
    "format_sweep_tsv",
    "greedy_extract",
    "score_pairs",
    "sweep",
]


@dataclass(frozen=True)
class ExtractConfig:
    threshold: float = 0.99  # decision cutoff on the translation probability
    greedy: bool = False
    max_len_ratio: float | None = None
    batch: int = 64  # sentences encoded per tape

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.max_len_ratio is not None and self.max_len_ratio <= 1.0:
            raise ValueError(f"max_len_ratio must be > 1, got {self.max_len_ratio}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")


@dataclass(frozen=True)
class ScoredPair:
    pair_id: str
    src_idx: int
    tgt_idx: int
    p: float
    y_hat: int = 0


def candidate_pairs(ap: ArticlePair, cfg: ExtractConfig) -> list[tuple[int, int]]:
    """Cartesian product of the article pair's sentences, optionally dropping
    pairs whose longer/shorter token-length ratio exceeds ``max_len_ratio``.
    """
    out = []
    for i, s in enumerate(ap.src_sents):
        for j, t in enumerate(ap.tgt_sents):
            if cfg.max_len_ratio is not None:
                lo, hi = sorted((len(s.ids), len(t.ids)))
                if hi > cfg.max_len_ratio * lo:
                    continue
            out.append((i, j))
    return out


def _check_vocab(sents: Iterable[Sentence], size: int, side: str) -> None:
    for s in sents:
        if s.ids and max(s.ids) >= size:
            raise ValueError(
                f"vocabulary mismatch: {side} sentence uses id {max(s.ids)} "
                f"but the model's {side} vocabulary has {size} entries"
            )


def _encode_side(model: SiameseModel, sents: Sequence[Sentence], which: str, batch: int) -> list[np.ndarray]:
    vecs: list[np.ndarray] = []
    for start in range(0, len(sents), batch):
        tape = Tape()
        for s in sents[start : start + batch]:
            vecs.append(encode(s, which, model.encoder, tape).data)
    return vecs


def score_pairs(
    model: SiameseModel,
    ap: ArticlePair,
    candidates: Sequence[tuple[int, int]],
    batch: int = 64,
) -> list[ScoredPair]:
    """Score candidate (src_idx, tgt_idx) pairs of one article pair.

    Each sentence is encoded once and cached; candidate order is preserved.
    The model is read-only here, so articles can be scored concurrently.
    """
    dims = model.dims
    _check_vocab(ap.src_sents, dims.src_vocab, "source")
    _check_vocab(ap.tgt_sents, dims.tgt_vocab, "target")
    src_vecs = _encode_side(model, ap.src_sents, "source", batch)
    tgt_vecs = _encode_side(model, ap.tgt_sents, "target", batch)
    scored = []
    for i, j in candidates:
        tape = Tape()
        prod, diff = match_features(tape.constant(src_vecs[i]), tape.constant(tgt_vecs[j]))
        p = probability(prod, diff, model.head, tape)
        scored.append(ScoredPair(ap.pair_id, i, j, float(p.data)))
    return scored


def decide(scored: Iterable[ScoredPair], threshold: float) -> list[ScoredPair]:
    """Label each pair parallel iff p >= threshold (boundary inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return [dataclasses.replace(s, y_hat=int(s.p >= threshold)) for s in scored]


def greedy_extract(scored: Iterable[ScoredPair], threshold: float) -> list[ScoredPair]:
    """Extraction without replacement: visit candidates by descending score
    (ties: lower (src_idx, tgt_idx) first) and accept a pair iff it clears the
    threshold and neither of its sentences was already used.  The result is a
    partial matching: no sentence index repeats on either side.
    """
    used_src: set[tuple[str, int]] = set()
    used_tgt: set[tuple[str, int]] = set()
    accepted = []
    for s in sorted(scored, key=lambda s: (-s.p, s.pair_id, s.src_idx, s.tgt_idx)):
        if s.p < threshold:
            break
        if (s.pair_id, s.src_idx) in used_src or (s.pair_id, s.tgt_idx) in used_tgt:
            continue
        used_src.add((s.pair_id, s.src_idx))
        used_tgt.add((s.pair_id, s.tgt_idx))
        accepted.append(dataclasses.replace(s, y_hat=1))
    return accepted


def sweep(scored: Sequence[ScoredPair], thresholds: Sequence[float]) -> list[tuple[float, int, int]]:
    """Per-threshold extraction counts, thresholded and greedy.

    Thresholds must be sorted ascending.  Counts are non-increasing in the
    threshold, and greedy counts never exceed thresholded counts.
    """
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    rows = []
    for rho in thresholds:
        n_threshold = sum(1 for s in scored if s.p >= rho)
        n_greedy = len(greedy_extract(scored, rho))
        rows.append((rho, n_threshold, n_greedy))
    return rows


@dataclass(frozen=True)
class ExtractedRow:
    pair_id: str
    src_idx: int
    tgt_idx: int
    p: float
    src_surface: str
    tgt_surface: str


@dataclass
class ExtractionReport:
    rows: list[ExtractedRow]
    articles: int
    candidates: int

    def keys(self) -> set[tuple[str, int, int]]:
        return {(r.pair_id, r.src_idx, r.tgt_idx) for r in self.rows}


def _extract_article(model: SiameseModel, ap: ArticlePair, cfg: ExtractConfig):
    cands = candidate_pairs(ap, cfg)
    scored = score_pairs(model, ap, cands, cfg.batch)
    if cfg.greedy:
        kept = greedy_extract(scored, cfg.threshold)
    else:
        kept = [s for s in decide(scored, cfg.threshold) if s.y_hat]
    rows = [
        ExtractedRow(
            pair_id=s.pair_id,
            src_idx=s.src_idx,
            tgt_idx=s.tgt_idx,
            p=s.p,
            src_surface=ap.src_sents[s.src_idx].surface,
            tgt_surface=ap.tgt_sents[s.tgt_idx].surface,
        )
        for s in sorted(kept, key=lambda s: (s.src_idx, s.tgt_idx))
    ]
    return rows, len(cands)


def extract_corpus(
    model: SiameseModel,
    article_pairs: Iterable[ArticlePair],
    cfg: ExtractConfig,
    jobs: int = 1,
) -> ExtractionReport:
    """Run extraction over article pairs; output order follows input order.

    ``jobs`` > 1 scores article pairs in worker processes; the merge is by
    input order, so the report is identical to a sequential run.
    """
    pairs = list(article_pairs)
    if jobs > 1 and len(pairs) > 1:
        results = _extract_parallel(model, pairs, cfg, jobs)
    else:
        results = [_extract_article(model, ap, cfg) for ap in pairs]
    rows: list[ExtractedRow] = []
    candidates = 0
    for r, c in results:
        rows.extend(r)
        candidates += c
    return ExtractionReport(rows=rows, articles=len(pairs), candidates=candidates)


_WORKER_STATE: dict = {}


def _worker_init(model, cfg):
    _WORKER_STATE["model"] = model
    _WORKER_STATE["cfg"] = cfg


def _worker_run(ap):
    return _extract_article(_WORKER_STATE["model"], ap, _WORKER_STATE["cfg"])


def _extract_parallel(model, pairs, cfg, jobs):
    import multiprocessing as mp

    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
    with ctx.Pool(processes=jobs, initializer=_worker_init, initargs=(model, cfg)) as pool:
        return pool.map(_worker_run, pairs)


def format_extraction_tsv(report: ExtractionReport) -> str:
    """One line per extracted pair:
    pair_id<TAB>src_idx<TAB>tgt_idx<TAB>p<TAB>src_surface<TAB>tgt_surface.
    """
    return "".join(
        f"{r.pair_id}\t{r.src_idx}\t{r.tgt_idx}\t{r.p:.6f}\t{r.src_surface}\t{r.tgt_surface}\n"
        for r in report.rows
    )


def format_sweep_tsv(rows: Sequence[tuple[float, int, int]]) -> str:
    """One line per threshold: rho<TAB>count_threshold<TAB>count_greedy."""
    return "".join(f"{rho:g}\t{n_t}\t{n_g}\n" for rho, n_t, n_g in rows)
