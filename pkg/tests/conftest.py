"""Shared fixtures: the expensive trained models are session-scoped so the
overfit run and the mining-scale run each happen once per pytest session."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from bitextmine.classifier import LabeledPair
from bitextmine.extractor import ExtractConfig, ScoredPair, candidate_pairs, score_pairs
from bitextmine.ingest import ArticlePair, PairingStats, pair_articles
from bitextmine.syntheval import GoldAlignment, SyntheticData, SyntheticSpec, gen_synthetic
from bitextmine.textcore import Vocabulary, build_vocab, tokenize
from bitextmine.trainer import Checkpoint, TrainConfig, encode_bootstrap, train


def build_vocabs(data: SyntheticData) -> tuple[Vocabulary, Vocabulary]:
    src = build_vocab((tokenize(s) for s, _ in data.bootstrap.pairs), "src")
    tgt = build_vocab((tokenize(t) for _, t in data.bootstrap.pairs), "tgt")
    return src, tgt


@dataclass
class TrainedPipeline:
    data: SyntheticData
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    bootstrap: list[LabeledPair]
    checkpoint: Checkpoint
    articles: list[ArticlePair]


def run_pipeline(spec: SyntheticSpec, cfg: TrainConfig) -> TrainedPipeline:
    data = gen_synthetic(spec)
    src_vocab, tgt_vocab = build_vocabs(data)
    bootstrap = encode_bootstrap(data.bootstrap, src_vocab, tgt_vocab)
    checkpoint = train(bootstrap, src_vocab, tgt_vocab, cfg)
    articles = list(
        pair_articles(data.src_articles, data.tgt_articles, data.title_map, src_vocab, tgt_vocab)
    )
    return TrainedPipeline(data, src_vocab, tgt_vocab, bootstrap, checkpoint, articles)


# 50-pair overfit fixture: small bootstrap driven to near-zero loss (the
# regression fixture for convergence, and the model for score spot checks).
OVERFIT_SPEC = SyntheticSpec(
    vocab_size=40,
    n_bootstrap=50,
    n_articles=8,
    sents_per_article=(4, 8),
    parallel_fraction=0.4,
    noise=0.0,
    seed=13,
    sent_len=(4, 9),
)
OVERFIT_CONFIG = TrainConfig(
    negatives=3,
    epochs=200,
    batch_size=16,
    learning_rate=1e-3,
    seed=7,
    embed_dim=32,
    hidden_dim=32,
    match_dim=32,
    stop_loss=5e-4,
)


@pytest.fixture(scope="session")
def overfit_pipeline() -> TrainedPipeline:
    return run_pipeline(OVERFIT_SPEC, OVERFIT_CONFIG)


# mining-scale fixture: 2,000 bootstrap pairs, 500 comparable article pairs.
MINING_SPEC = SyntheticSpec(
    vocab_size=120,
    n_bootstrap=2000,
    n_articles=500,
    sents_per_article=(5, 20),
    parallel_fraction=0.3,
    noise=0.0,
    seed=11,
    sent_len=(4, 9),
)
MINING_CONFIG = TrainConfig(
    negatives=3,
    epochs=40,
    batch_size=16,
    learning_rate=3e-3,
    seed=5,
    embed_dim=32,
    hidden_dim=32,
    match_dim=32,
    stop_loss=1.5e-3,
)


@pytest.fixture(scope="session")
def mining_pipeline() -> TrainedPipeline:
    return run_pipeline(MINING_SPEC, MINING_CONFIG)


@pytest.fixture(scope="session")
def mining_scores(mining_pipeline) -> list[ScoredPair]:
    """Every candidate of the mining corpus, scored once."""
    model = mining_pipeline.checkpoint.model
    cfg = ExtractConfig()
    scored: list[ScoredPair] = []
    for ap in mining_pipeline.articles:
        scored.extend(score_pairs(model, ap, candidate_pairs(ap, cfg), cfg.batch))
    return scored
