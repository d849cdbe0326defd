"""Negative sampling, epoch construction, the optimization loop, and checkpoints."""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, backward
from .classifier import LabeledPair
from .ingest import BootstrapCorpus
from .model import ModelDims, SiameseModel, example_loss, init_model
from .textcore import Sentence, Vocabulary, encode_sentence, tokenize

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "TrainConfig",
    "TrainingDiverged",
    "build_epoch",
    "encode_bootstrap",
    "load_checkpoint",
    "sample_negatives",
    "save_checkpoint",
    "train",
]

CHECKPOINT_MAGIC = b"BXM1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is corrupt, has the wrong version, or pins other vocabularies."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    negatives: int = 7  # non-translation targets sampled per source, per epoch
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"  # or "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    embed_dim: int = 128
    hidden_dim: int = 128
    match_dim: int = 128
    stop_loss: float | None = None  # stop early once mean epoch loss drops below

    def validate(self) -> None:
        if self.negatives < 1:
            raise ValueError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        for dim_name in ("embed_dim", "hidden_dim", "match_dim"):
            if getattr(self, dim_name) < 1:
                raise ValueError(f"{dim_name} must be >= 1")


@dataclass
class Checkpoint:
    """Model parameters plus everything needed to reproduce and reuse them."""

    src_vocab_hash: str
    tgt_vocab_hash: str
    config: TrainConfig
    epoch: int  # epochs completed when this checkpoint was taken
    loss_history: list[tuple[int, float, float]]  # (epoch, sum_loss, mean_loss)
    model: SiameseModel
    version: int = CHECKPOINT_VERSION


def sample_negatives(
    src_index: int,
    targets: Sequence[Sentence],
    negatives: int,
    rng: np.random.Generator,
) -> list[Sentence]:
    """Draw target sentences uniformly without replacement, excluding the
    aligned target at ``src_index``.  Deterministic for a given generator state.
    """
    if negatives < 1:
        raise ValueError(f"negatives must be >= 1, got {negatives}")
    pool = len(targets)
    if pool < negatives + 1:
        raise ValueError(f"target pool of {pool} too small to draw {negatives} negatives")
    draw = rng.choice(pool - 1, size=negatives, replace=False)
    return [targets[j if j < src_index else j + 1] for j in draw]


def build_epoch(
    bootstrap: Sequence[LabeledPair],
    negatives: int,
    rng: np.random.Generator,
    extra_targets: Sequence[Sentence] = (),
) -> list[LabeledPair]:
    """One epoch of training examples: every positive pair plus ``negatives``
    freshly sampled label-0 pairs per source, shuffled.  The result always has
    exactly ``len(bootstrap) * (1 + negatives)`` examples.
    """
    if not bootstrap:
        raise ValueError("empty bootstrap")
    targets = [p.tgt for p in bootstrap] + list(extra_targets)
    examples: list[LabeledPair] = []
    for i, pair in enumerate(bootstrap):
        examples.append(pair)
        for neg in sample_negatives(i, targets, negatives, rng):
            examples.append(LabeledPair(pair.src, neg, 0))
    order = rng.permutation(len(examples))
    return [examples[k] for k in order]


def encode_bootstrap(
    corpus: BootstrapCorpus,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
) -> list[LabeledPair]:
    """Tokenize and encode a parallel corpus into positive training pairs."""
    pairs = []
    for src_text, tgt_text in corpus.pairs:
        src_toks = tokenize(src_text)
        tgt_toks = tokenize(tgt_text)
        if not src_toks or not tgt_toks:
            continue
        pairs.append(
            LabeledPair(
                encode_sentence(src_toks, src_vocab, src_text),
                encode_sentence(tgt_toks, tgt_vocab, tgt_text),
                1,
            )
        )
    if not pairs:
        raise ValueError("no encodable pairs in bootstrap corpus")
    return pairs


class _Sgd:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr

    def step(self, grads):
        for q in self.params:
            q.value -= self.lr * grads[q]


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {q: np.zeros_like(q.value) for q in params}
        self.v = {q: np.zeros_like(q.value) for q in params}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.b1, self.b2
        correct1 = 1.0 - b1**self.t
        correct2 = 1.0 - b2**self.t
        for q in self.params:
            g = grads[q]
            m = self.m[q]
            v = self.v[q]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            q.value -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def _make_optimizer(config: TrainConfig, params):
    if config.optimizer == "sgd":
        return _Sgd(params, config.learning_rate)
    return _Adam(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


def train(
    bootstrap: Sequence[LabeledPair],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    config: TrainConfig,
    epoch_callback: Callable[[Checkpoint], None] | None = None,
    initial_model: SiameseModel | None = None,
) -> Checkpoint:
    """Train the siamese classifier on encoded positive pairs.

    Negatives are resampled at the start of every epoch from a per-epoch
    seeded stream, minibatch gradients are summed in batch order, and the
    whole run is deterministic given (seed, data, config).  A checkpoint is
    passed to ``epoch_callback`` after every epoch; the final one is returned.
    Raises ``TrainingDiverged`` if the loss goes non-finite.
    """
    config.validate()
    if not bootstrap:
        raise ValueError("empty bootstrap")
    if any(p.y != 1 for p in bootstrap):
        raise ValueError("bootstrap must contain only positive pairs")

    dims = ModelDims(
        src_vocab=src_vocab.size,
        tgt_vocab=tgt_vocab.size,
        embed=config.embed_dim,
        hidden=config.hidden_dim,
        match=config.match_dim,
    )
    if initial_model is not None and initial_model.dims != dims:
        raise ValueError(f"initial model dims {initial_model.dims} do not match config dims {dims}")
    model = initial_model if initial_model is not None else init_model(dims, config.seed)
    params = model.parameters()
    opt = _make_optimizer(config, params)
    buffers = {q: np.zeros_like(q.value) for q in params}

    loss_history: list[tuple[int, float, float]] = []

    def snapshot(epochs_done: int) -> Checkpoint:
        return Checkpoint(
            src_vocab_hash=src_vocab.content_hash(),
            tgt_vocab_hash=tgt_vocab.content_hash(),
            config=config,
            epoch=epochs_done,
            loss_history=list(loss_history),
            model=model,
        )

    for epoch in range(config.epochs):
        rng = np.random.default_rng([config.seed, 1, epoch])
        examples = build_epoch(bootstrap, config.negatives, rng)
        sum_loss = 0.0
        for batch_idx in range(0, len(examples), config.batch_size):
            batch = examples[batch_idx : batch_idx + config.batch_size]
            for q in params:
                buffers[q][...] = 0.0
            for ex in batch:
                tape = Tape()
                loss_t, _ = example_loss(model, ex, tape)
                value = float(loss_t.data)
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {batch_idx // config.batch_size}"
                    )
                backward(tape, loss_t, into=buffers)
                sum_loss += value
            opt.step(buffers)
        mean_loss = sum_loss / len(examples)
        loss_history.append((epoch, sum_loss, mean_loss))
        if epoch_callback is not None:
            epoch_callback(snapshot(epoch + 1))
        if config.stop_loss is not None and mean_loss < config.stop_loss:
            break

    return snapshot(len(loss_history))


def format_loss_log(loss_history: Sequence[tuple[int, float, float]]) -> str:
    """One line per epoch: epoch<TAB>sum_loss<TAB>mean_loss."""
    return "".join(f"{e}\t{s:.6f}\t{m:.6f}\n" for e, s, m in loss_history)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Binary layout: magic, version, length-prefixed JSON header, then raw
    little-endian float64 parameter blocks in canonical order.  Writing the
    result of ``load_checkpoint`` reproduces the file byte for byte.
    """
    model = ckpt.model
    header = {
        "config": dataclasses.asdict(ckpt.config),
        "dims": dataclasses.asdict(model.dims),
        "epoch": ckpt.epoch,
        "loss_history": [[e, s, m] for e, s, m in ckpt.loss_history],
        "params": [{"name": q.name, "shape": list(q.value.shape)} for q in model.parameters()],
        "src_vocab_hash": ckpt.src_vocab_hash,
        "tgt_vocab_hash": ckpt.tgt_vocab_hash,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", ckpt.version, len(blob)))
        f.write(blob)
        for q in model.parameters():
            f.write(np.ascontiguousarray(q.value, dtype="<f8").tobytes())


def load_checkpoint(
    path: str | Path,
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
) -> Checkpoint:
    """Read a checkpoint; when vocabularies are given, refuse to load one
    that was trained against different vocabulary contents.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: corrupt checkpoint (bad magic)")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version mismatch (file v{version}, supported v{CHECKPOINT_VERSION})")
    if len(raw) < 12 + header_len:
        raise CheckpointError(f"{path}: corrupt checkpoint (truncated header)")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint (bad header)") from exc

    dims = ModelDims(**header["dims"])
    config = TrainConfig(**header["config"])
    model = init_model(dims, config.seed)
    offset = 12 + header_len
    declared = header["params"]
    params = model.parameters()
    if [q.name for q in params] != [d["name"] for d in declared]:
        raise CheckpointError(f"{path}: corrupt checkpoint (parameter list mismatch)")
    for q, decl in zip(params, declared):
        if list(q.value.shape) != decl["shape"]:
            raise CheckpointError(f"{path}: corrupt checkpoint (shape mismatch for {q.name})")
        nbytes = q.value.size * 8
        block = raw[offset : offset + nbytes]
        if len(block) != nbytes:
            raise CheckpointError(f"{path}: corrupt checkpoint (truncated parameter block {q.name})")
        q.value[...] = np.frombuffer(block, dtype="<f8").reshape(q.value.shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: corrupt checkpoint (trailing bytes)")

    ckpt = Checkpoint(
        src_vocab_hash=header["src_vocab_hash"],
        tgt_vocab_hash=header["tgt_vocab_hash"],
        config=config,
        epoch=header["epoch"],
        loss_history=[(int(e), float(s), float(m)) for e, s, m in header["loss_history"]],
        model=model,
        version=version,
    )
    if src_vocab is not None and src_vocab.content_hash() != ckpt.src_vocab_hash:
        raise CheckpointError(f"{path}: vocabulary mismatch (source)")
    if tgt_vocab is not None and tgt_vocab.content_hash() != ckpt.tgt_vocab_hash:
        raise CheckpointError(f"{path}: vocabulary mismatch (target)")
    return ckpt
