"""bitextmine: mine parallel sentence pairs from comparable corpora.

A small library (plus `bitextmine` CLI) that trains a siamese
bidirectional-GRU sentence-pair classifier on a seed parallel corpus and
uses it to extract translation pairs from topic-aligned article pairs,
with plain thresholding or greedy without-replacement decoding.
"""

from .autodiff import Parameter, ShapeError, Tape, Tensor, backward
from .classifier import HeadParams, LabeledPair, batch_loss, match_features, pair_loss, probability
from .encoder import EncoderParams, GruParams, embed, encode, gru_step, init_encoder
from .extractor import (
    ExtractConfig,
    ExtractionReport,
    ScoredPair,
    candidate_pairs,
    decide,
    extract_corpus,
    greedy_extract,
    score_pairs,
    sweep,
)
from .ingest import (
    Article,
    ArticlePair,
    BootstrapCorpus,
    DumpParseError,
    pair_articles,
    parse_wiki_dump,
    read_parallel_tsv,
    read_title_map,
    strip_markup,
)
from .model import ModelDims, SiameseModel, example_loss, init_model, score_pair
from .syntheval import (
    GoldAlignment,
    SyntheticSpec,
    gen_synthetic,
    precision_recall,
)
from .textcore import (
    Sentence,
    Vocabulary,
    build_vocab,
    encode_sentence,
    load_vocab,
    segment_sentences,
    tokenize,
)
from .trainer import (
    Checkpoint,
    CheckpointError,
    TrainConfig,
    TrainingDiverged,
    build_epoch,
    encode_bootstrap,
    load_checkpoint,
    sample_negatives,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
