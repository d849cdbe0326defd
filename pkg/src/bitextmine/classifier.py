"""Matching features, translation-probability head, and cross-entropy loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .autodiff import (
    Parameter,
    Tape,
    Tensor,
    absolute,
    affine3,
    clamp,
    log,
    scalar_affine,
    sigmoid,
    tanh,
)
from .encoder import INIT_SCALE
from .textcore import Sentence

__all__ = [
    "CLAMP_EPS",
    "HeadParams",
    "LabeledPair",
    "batch_loss",
    "init_head",
    "match_features",
    "pair_loss",
    "probability",
]

CLAMP_EPS = 1e-12  # probabilities are clipped to [eps, 1-eps] before logs


@dataclass
class HeadParams:
    """Fully connected matching head.

    W_prod / W_diff weight the element-wise product and absolute-difference
    features; w_out and b_out produce the final logit.
    """

    W_prod: Parameter  # (match, 2*hidden)
    W_diff: Parameter  # (match, 2*hidden)
    b_hidden: Parameter  # (match,)
    w_out: Parameter  # (match,)
    b_out: Parameter  # ()

    @property
    def match_size(self) -> int:
        return self.W_prod.value.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.W_prod, self.W_diff, self.b_hidden, self.w_out, self.b_out]


def init_head(sent_vec_size: int, match_size: int, rng: np.random.Generator) -> HeadParams:
    return HeadParams(
        W_prod=Parameter("head.W_prod", rng.uniform(-INIT_SCALE, INIT_SCALE, (match_size, sent_vec_size))),
        W_diff=Parameter("head.W_diff", rng.uniform(-INIT_SCALE, INIT_SCALE, (match_size, sent_vec_size))),
        b_hidden=Parameter("head.b_hidden", np.zeros(match_size)),
        w_out=Parameter("head.w_out", rng.uniform(-INIT_SCALE, INIT_SCALE, match_size)),
        b_out=Parameter("head.b_out", np.zeros(())),
    )


@dataclass(frozen=True)
class LabeledPair:
    """A source/target sentence pair with a translation label (1) or not (0)."""

    src: Sentence
    tgt: Sentence
    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y}")


def match_features(h_src: Tensor, h_tgt: Tensor) -> tuple[Tensor, Tensor]:
    """Element-wise product and absolute difference of two sentence vectors.

    Both features are symmetric in their arguments, so swapping the inputs
    leaves the downstream probability bit-identical.
    """
    return h_src * h_tgt, absolute(h_src - h_tgt)


def probability(prod: Tensor, diff: Tensor, head: HeadParams, tape: Tape) -> Tensor:
    """Translation probability sigma(w_out . tanh(W_prod@prod + W_diff@diff + b) + b_out)."""
    hidden = tanh(
        affine3(tape.watch(head.W_prod), prod, tape.watch(head.W_diff), diff, tape.watch(head.b_hidden))
    )
    return sigmoid(tape.watch(head.w_out) @ hidden + tape.watch(head.b_out))


def pair_loss(p: Tensor, y: int) -> Tensor:
    """Differentiable cross-entropy of one scored pair, with probability clamping."""
    if y == 1:
        q = clamp(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    else:
        q = clamp(scalar_affine(p, -1.0, 1.0), CLAMP_EPS, 1.0 - CLAMP_EPS)
    return scalar_affine(log(q), -1.0, 0.0)


def batch_loss(scored: Iterable[tuple[float, int]]) -> float:
    """Summed cross-entropy over (probability, label) pairs.

    A sum, not a mean; accumulation follows the given order.  Uses the
    same clamping arithmetic as ``pair_loss`` so the two agree exactly.
    """
    total = 0.0
    n = 0
    for p, y in scored:
        q = p if y == 1 else 1.0 - p
        q = min(max(q, CLAMP_EPS), 1.0 - CLAMP_EPS)
        total += -math.log(q)
        n += 1
    if n == 0:
        raise ValueError("empty batch")
    return total
