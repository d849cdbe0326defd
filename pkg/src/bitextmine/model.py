"""The full siamese scoring model: encoder parameters plus matching head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tape, Tensor
from .classifier import HeadParams, LabeledPair, init_head, match_features, pair_loss, probability
from .encoder import EncoderParams, encode, init_encoder
from .textcore import Sentence

__all__ = ["ModelDims", "SiameseModel", "init_model", "score_pair", "example_loss"]


@dataclass(frozen=True)
class ModelDims:
    src_vocab: int
    tgt_vocab: int
    embed: int
    hidden: int
    match: int


@dataclass
class SiameseModel:
    encoder: EncoderParams
    head: HeadParams

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            src_vocab=self.encoder.emb_src.value.shape[0],
            tgt_vocab=self.encoder.emb_tgt.value.shape[0],
            embed=self.encoder.embed_size,
            hidden=self.encoder.hidden_size,
            match=self.head.match_size,
        )

    def parameters(self) -> list[Parameter]:
        """All trainable parameters in the canonical (checkpoint) order."""
        return self.encoder.parameters() + self.head.parameters()


def init_model(dims: ModelDims, seed: int) -> SiameseModel:
    """Seeded initialization; the draw order is fixed so results are reproducible."""
    rng = np.random.default_rng([seed, 0])
    enc = init_encoder(dims.src_vocab, dims.tgt_vocab, dims.embed, dims.hidden, rng)
    head = init_head(2 * dims.hidden, dims.match, rng)
    return SiameseModel(enc, head)


def score_pair(model: SiameseModel, src: Sentence, tgt: Sentence, tape: Tape) -> Tensor:
    """Translation probability of one sentence pair (scalar tensor)."""
    h_src = encode(src, "source", model.encoder, tape)
    h_tgt = encode(tgt, "target", model.encoder, tape)
    prod, diff = match_features(h_src, h_tgt)
    return probability(prod, diff, model.head, tape)


def example_loss(model: SiameseModel, pair: LabeledPair, tape: Tape) -> tuple[Tensor, float]:
    """Cross-entropy of one labeled pair; returns (loss tensor, probability)."""
    p = score_pair(model, pair.src, pair.tgt, tape)
    return pair_loss(p, pair.y), float(p.data)
