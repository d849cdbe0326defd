"""Embedding lookup and bidirectional GRU sentence encoder.

Both languages share one BiGRU (siamese weight sharing); only the
embedding matrices are language-specific.  A sentence is represented by
the concatenation of the forward GRU's final state and the backward
GRU's state at the first token, a vector of size 2*hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Parameter,
    Tape,
    Tensor,
    affine3,
    blend,
    concat,
    sigmoid,
    take_row,
    tanh,
)
from .textcore import Sentence

__all__ = [
    "EncoderParams",
    "GruParams",
    "INIT_SCALE",
    "embed",
    "encode",
    "gru_step",
    "init_encoder",
]

INIT_SCALE = 0.08  # uniform(-INIT_SCALE, INIT_SCALE) for all weight matrices


@dataclass
class GruParams:
    """One direction's gate weights: input-to-hidden W_*, hidden-to-hidden U_*, biases b_*."""

    W_z: Parameter
    W_r: Parameter
    W_h: Parameter
    U_z: Parameter
    U_r: Parameter
    U_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter

    @property
    def hidden_size(self) -> int:
        return self.U_z.value.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.W_z, self.W_r, self.W_h, self.U_z, self.U_r, self.U_h,
                self.b_z, self.b_r, self.b_h]


@dataclass
class EncoderParams:
    """Per-language embeddings plus the shared forward/backward GRUs."""

    emb_src: Parameter
    emb_tgt: Parameter
    fwd: GruParams
    bwd: GruParams

    @property
    def embed_size(self) -> int:
        return self.emb_src.value.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    def parameters(self) -> list[Parameter]:
        return [self.emb_src, self.emb_tgt] + self.fwd.parameters() + self.bwd.parameters()


def _init_gru(prefix: str, embed_size: int, hidden_size: int, rng: np.random.Generator) -> GruParams:
    def mat(name, rows, cols):
        return Parameter(f"{prefix}.{name}", rng.uniform(-INIT_SCALE, INIT_SCALE, (rows, cols)))

    def vec(name):
        return Parameter(f"{prefix}.{name}", np.zeros(hidden_size))

    return GruParams(
        W_z=mat("W_z", hidden_size, embed_size),
        W_r=mat("W_r", hidden_size, embed_size),
        W_h=mat("W_h", hidden_size, embed_size),
        U_z=mat("U_z", hidden_size, hidden_size),
        U_r=mat("U_r", hidden_size, hidden_size),
        U_h=mat("U_h", hidden_size, hidden_size),
        b_z=vec("b_z"),
        b_r=vec("b_r"),
        b_h=vec("b_h"),
    )


def init_encoder(
    src_vocab_size: int,
    tgt_vocab_size: int,
    embed_size: int,
    hidden_size: int,
    rng: np.random.Generator,
) -> EncoderParams:
    """Initialize embeddings and both GRU directions; draw order is fixed."""
    emb_src = Parameter("emb_src", rng.uniform(-INIT_SCALE, INIT_SCALE, (src_vocab_size, embed_size)))
    emb_tgt = Parameter("emb_tgt", rng.uniform(-INIT_SCALE, INIT_SCALE, (tgt_vocab_size, embed_size)))
    fwd = _init_gru("fwd", embed_size, hidden_size, rng)
    bwd = _init_gru("bwd", embed_size, hidden_size, rng)
    return EncoderParams(emb_src, emb_tgt, fwd, bwd)


def embed(sentence: Sentence, which: str, params: EncoderParams, tape: Tape) -> list[Tensor]:
    """Embedding rows for each token position, participating in gradient flow."""
    if which == "source":
        matrix = params.emb_src
    elif which == "target":
        matrix = params.emb_tgt
    else:
        raise ValueError(f"which must be 'source' or 'target', got {which!r}")
    leaf = tape.watch(matrix)
    return [take_row(leaf, i) for i in sentence.ids]


def gru_step(h_prev: Tensor, x: Tensor, g: GruParams, tape: Tape) -> Tensor:
    """One GRU update: h = (1-z)*h_prev + z*h_cand."""
    z = sigmoid(affine3(tape.watch(g.W_z), x, tape.watch(g.U_z), h_prev, tape.watch(g.b_z)))
    r = sigmoid(affine3(tape.watch(g.W_r), x, tape.watch(g.U_r), h_prev, tape.watch(g.b_r)))
    h_cand = tanh(affine3(tape.watch(g.W_h), x, tape.watch(g.U_h), r * h_prev, tape.watch(g.b_h)))
    return blend(z, h_prev, h_cand)


def encode(sentence: Sentence, which: str, params: EncoderParams, tape: Tape) -> Tensor:
    """Fixed-size sentence vector: [forward final state; backward state at t=1]."""
    if not sentence.ids:
        raise ValueError("empty sentence")
    xs = embed(sentence, which, params, tape)
    d = params.hidden_size
    h = tape.constant(np.zeros(d))
    for x in xs:
        h = gru_step(h, x, params.fwd, tape)
    h_fwd = h
    h = tape.constant(np.zeros(d))
    for x in reversed(xs):
        h = gru_step(h, x, params.bwd, tape)
    return concat(h_fwd, h)
