"""Command-line interface: build-vocab, train, extract, sweep, and eval.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data error.
Flags override config-file values, which override built-in defaults; every
successful run writes a key=value manifest next to its main output.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from pathlib import Path

from . import extractor, ingest, syntheval, textcore, trainer
from .trainer import CheckpointError, TrainConfig, TrainingDiverged

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_DATA = 3


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    values = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {n} is not key=value")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def _resolve(args, name: str, cast, default, config: dict[str, str]):
    """Flag > config file > default."""
    val = getattr(args, name.replace("-", "_"), None)
    if val is not None:
        return val
    if name in config:
        try:
            return cast(config[name])
        except ValueError as exc:
            raise UsageError(f"config value for {name}: {exc}") from exc
    return default


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: Path, entries: dict[str, object]) -> None:
    manifest = Path(str(out_path) + ".manifest")
    body = "".join(f"{k}={entries[k]}\n" for k in sorted(entries))
    tmp = manifest.with_suffix(manifest.suffix + ".tmp")
    tmp.write_text(body, encoding="utf-8")
    os.replace(tmp, manifest)


def _bool_flag(value: str) -> bool:
    if value.lower() in ("1", "true", "yes", "on"):
        return True
    if value.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


# --- subcommands ---------------------------------------------------------


def _cmd_build_vocab(args) -> int:
    config = _read_config_file(args.config)
    max_size = _resolve(args, "max-size", int, 30000, config)
    min_count = _resolve(args, "min-count", int, 1, config)
    if max_size < 5:
        raise UsageError(f"--max-size must be >= 5 (4 specials + 1), got {max_size}")
    if min_count < 1:
        raise UsageError(f"--min-count must be >= 1, got {min_count}")
    column = _resolve(args, "column", int, 0, config)
    started = time.time()

    input_path = Path(args.input)
    def token_stream():
        with open(input_path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if column:
                    fields = line.split("\t")
                    if len(fields) < column:
                        continue
                    line = fields[column - 1]
                yield textcore.tokenize(line)

    vocab = textcore.build_vocab(token_stream(), args.lang, max_size, min_count)
    out = Path(args.out)
    vocab.save(out)
    _write_manifest(out, {
        "subcommand": "build-vocab",
        "input_hash.input": _sha256_file(input_path),
        "config.lang": args.lang,
        "config.max_size": max_size,
        "config.min_count": min_count,
        "config.column": column,
        "output.vocab": out,
        "wall_clock_sec": f"{time.time() - started:.3f}",
    })
    print(f"wrote {out} ({vocab.size} entries)")
    return EXIT_OK


def _cmd_train(args) -> int:
    config_file = _read_config_file(args.config)
    cfg = TrainConfig(
        negatives=_resolve(args, "m", int, 7, config_file),
        epochs=_resolve(args, "epochs", int, 10, config_file),
        batch_size=_resolve(args, "batch", int, 32, config_file),
        learning_rate=_resolve(args, "lr", float, 1e-3, config_file),
        seed=_resolve(args, "seed", int, 0, config_file),
        optimizer=_resolve(args, "optimizer", str, "adam", config_file),
        embed_dim=_resolve(args, "embed-dim", int, 128, config_file),
        hidden_dim=_resolve(args, "hidden-dim", int, 128, config_file),
        match_dim=_resolve(args, "match-dim", int, 128, config_file),
        stop_loss=_resolve(args, "stop-loss", float, None, config_file),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    started = time.time()

    src_vocab = textcore.load_vocab(args.src_vocab)
    tgt_vocab = textcore.load_vocab(args.tgt_vocab)
    corpus = ingest.read_parallel_tsv(args.bootstrap)
    bootstrap = trainer.encode_bootstrap(corpus, src_vocab, tgt_vocab)

    out = Path(args.out_ckpt)
    save_epochs = args.save_epoch_checkpoints

    def per_epoch(ckpt):
        e, s, m = ckpt.loss_history[-1]
        print(f"epoch {e}: sum_loss={s:.6f} mean_loss={m:.6f}")
        if save_epochs:
            trainer.save_checkpoint(ckpt, Path(f"{out}.epoch{e:04d}"))

    ckpt = trainer.train(bootstrap, src_vocab, tgt_vocab, cfg, epoch_callback=per_epoch)
    trainer.save_checkpoint(ckpt, out)
    loss_log = Path(str(out) + ".loss")
    loss_log.write_text(trainer.format_loss_log(ckpt.loss_history), encoding="utf-8")

    manifest = {
        "subcommand": "train",
        "input_hash.bootstrap": _sha256_file(Path(args.bootstrap)),
        "input_hash.src_vocab": _sha256_file(Path(args.src_vocab)),
        "input_hash.tgt_vocab": _sha256_file(Path(args.tgt_vocab)),
        "output.checkpoint": out,
        "output.loss_log": loss_log,
        "seed": cfg.seed,
        "wall_clock_sec": f"{time.time() - started:.3f}",
    }
    for key in ("negatives", "epochs", "batch_size", "learning_rate", "optimizer",
                "embed_dim", "hidden_dim", "match_dim", "stop_loss"):
        manifest[f"config.{key}"] = getattr(cfg, key)
    _write_manifest(out, manifest)
    print(f"wrote {out} after {ckpt.epoch} epochs")
    return EXIT_OK


def _load_articles(path: str | None, dump: str | None, lang: str):
    if (path is None) == (dump is None):
        raise UsageError(f"exactly one of --{lang}-articles / --{lang}-dump is required")
    if dump is not None:
        return list(ingest.parse_wiki_dump(dump)), Path(dump)
    articles = []
    p = Path(path)
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ValueError(f"{path}: articles line {n} is not title<TAB>text")
        articles.append(ingest.Article(title=fields[0], text=fields[1], lang=lang))
    return articles, p


def _prepare_extraction(args, config_file):
    src_vocab = textcore.load_vocab(args.src_vocab)
    tgt_vocab = textcore.load_vocab(args.tgt_vocab)
    ckpt = trainer.load_checkpoint(args.ckpt, src_vocab, tgt_vocab)
    src_articles, src_path = _load_articles(args.src_articles, args.src_dump, "src")
    tgt_articles, tgt_path = _load_articles(args.tgt_articles, args.tgt_dump, "tgt")
    title_map = ingest.read_title_map(args.title_map)
    stats = ingest.PairingStats()
    pairs = list(ingest.pair_articles(src_articles, tgt_articles, title_map, src_vocab, tgt_vocab, stats))
    print(f"paired {stats.paired} articles ({stats.skipped_missing} map rows skipped)")
    hashes = {
        "input_hash.ckpt": _sha256_file(Path(args.ckpt)),
        "input_hash.src_vocab": _sha256_file(Path(args.src_vocab)),
        "input_hash.tgt_vocab": _sha256_file(Path(args.tgt_vocab)),
        "input_hash.src_articles": _sha256_file(src_path),
        "input_hash.tgt_articles": _sha256_file(tgt_path),
        "input_hash.title_map": _sha256_file(Path(args.title_map)),
    }
    return ckpt, pairs, hashes


def _cmd_extract(args) -> int:
    config_file = _read_config_file(args.config)
    rho = _resolve(args, "rho", float, 0.99, config_file)
    greedy = _resolve(args, "greedy", _bool_flag, False, config_file)
    max_len_ratio = _resolve(args, "max-len-ratio", float, None, config_file)
    jobs = _resolve(args, "jobs", int, 1, config_file)
    if not 0.0 < rho < 1.0:
        raise UsageError(f"--rho must be in (0, 1), got {rho}")
    if max_len_ratio is not None and max_len_ratio <= 1.0:
        raise UsageError(f"--max-len-ratio must be > 1, got {max_len_ratio}")
    if jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {jobs}")
    started = time.time()

    ckpt, pairs, hashes = _prepare_extraction(args, config_file)
    cfg = extractor.ExtractConfig(threshold=rho, greedy=greedy, max_len_ratio=max_len_ratio)
    report = extractor.extract_corpus(ckpt.model, pairs, cfg, jobs=jobs)
    out = Path(args.out)
    out.write_text(extractor.format_extraction_tsv(report), encoding="utf-8")

    manifest = {
        "subcommand": "extract",
        **hashes,
        "config.rho": rho,
        "config.greedy": greedy,
        "config.max_len_ratio": max_len_ratio,
        "config.jobs": jobs,
        "output.extraction": out,
        "wall_clock_sec": f"{time.time() - started:.3f}",
    }
    _write_manifest(out, manifest)
    print(f"extracted {len(report.rows)} pairs from {report.articles} articles "
          f"({report.candidates} candidates) -> {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config_file = _read_config_file(args.config)
    rhos_raw = _resolve(args, "rhos", str, "0.5,0.8,0.9,0.99", config_file)
    max_len_ratio = _resolve(args, "max-len-ratio", float, None, config_file)
    jobs = _resolve(args, "jobs", int, 1, config_file)
    try:
        rhos = [float(r) for r in rhos_raw.split(",") if r.strip()]
    except ValueError as exc:
        raise UsageError(f"--rhos: {exc}") from exc
    if not rhos or any(not 0.0 < r < 1.0 for r in rhos):
        raise UsageError(f"--rhos values must be in (0, 1), got {rhos_raw!r}")
    if rhos != sorted(rhos):
        raise UsageError("--rhos must be ascending")
    started = time.time()

    ckpt, pairs, hashes = _prepare_extraction(args, config_file)
    cfg = extractor.ExtractConfig(max_len_ratio=max_len_ratio)
    scored: list[extractor.ScoredPair] = []
    for ap in pairs:
        scored.extend(extractor.score_pairs(ckpt.model, ap, extractor.candidate_pairs(ap, cfg), cfg.batch))
    rows = extractor.sweep(scored, rhos)
    out = Path(args.out)
    out.write_text(extractor.format_sweep_tsv(rows), encoding="utf-8")

    _write_manifest(out, {
        "subcommand": "sweep",
        **hashes,
        "config.rhos": rhos_raw,
        "config.max_len_ratio": max_len_ratio,
        "config.jobs": jobs,
        "output.sweep": out,
        "wall_clock_sec": f"{time.time() - started:.3f}",
    })
    for rho, n_t, n_g in rows:
        print(f"rho={rho:g}: threshold={n_t} greedy={n_g}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    started = time.time()
    extracted = []
    for n, line in enumerate(Path(args.extracted).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise ValueError(f"{args.extracted}: line {n} is not a 6-column extraction row")
        extracted.append((fields[0], int(fields[1]), int(fields[2])))
    gold = syntheval.read_gold_tsv(args.gold)
    p, r, f1 = syntheval.precision_recall(extracted, gold)
    line = syntheval.format_metrics(p, r, f1)
    sys.stdout.write(line)
    if args.out:
        out = Path(args.out)
        out.write_text(line, encoding="utf-8")
        _write_manifest(out, {
            "subcommand": "eval",
            "input_hash.extracted": _sha256_file(Path(args.extracted)),
            "input_hash.gold": _sha256_file(Path(args.gold)),
            "output.metrics": out,
            "wall_clock_sec": f"{time.time() - started:.3f}",
        })
    return EXIT_OK


# --- parser --------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="bitextmine", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def add_config(p):
        p.add_argument("--config", help="key=value config file (flags take precedence)")

    p = sub.add_parser("build-vocab", help="build a vocabulary file from a text corpus")
    p.add_argument("--input", required=True, help="UTF-8 text, one line per sentence")
    p.add_argument("--lang", required=True)
    p.add_argument("--max-size", type=int, dest="max_size")
    p.add_argument("--min-count", type=int, dest="min_count")
    p.add_argument("--column", type=int, help="1-based TSV column to read (0 = whole line)")
    p.add_argument("--out", required=True)
    add_config(p)
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("train", help="train the pair classifier on a bootstrap corpus")
    p.add_argument("--bootstrap", required=True, help="TSV of src<TAB>tgt sentence pairs")
    p.add_argument("--src-vocab", required=True)
    p.add_argument("--tgt-vocab", required=True)
    p.add_argument("--m", type=int, help="negative samples per source (default 7)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    p.add_argument("--match-dim", type=int, dest="match_dim")
    p.add_argument("--stop-loss", type=float, dest="stop_loss")
    p.add_argument("--save-epoch-checkpoints", action="store_true")
    p.add_argument("--out-ckpt", required=True, dest="out_ckpt")
    add_config(p)
    p.set_defaults(func=_cmd_train)

    def add_extract_inputs(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--src-vocab", required=True)
        p.add_argument("--tgt-vocab", required=True)
        p.add_argument("--src-dump", help="MediaWiki XML dump (.xml/.gz/.bz2)")
        p.add_argument("--src-articles", help="TSV of title<TAB>plain-text")
        p.add_argument("--tgt-dump")
        p.add_argument("--tgt-articles")
        p.add_argument("--title-map", required=True, help="TSV of src_title<TAB>tgt_title")
        p.add_argument("--max-len-ratio", type=float, dest="max_len_ratio")
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", required=True)
        add_config(p)

    p = sub.add_parser("extract", help="mine parallel sentence pairs from paired articles")
    add_extract_inputs(p)
    p.add_argument("--rho", type=float, help="decision threshold (default 0.99)")
    p.add_argument("--greedy", action="store_const", const=True,
                   help="each sentence joins at most one extracted pair")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("sweep", help="extraction counts across thresholds, both modes")
    add_extract_inputs(p)
    p.add_argument("--rhos", help="comma-separated ascending thresholds")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval", help="precision/recall/F1 of an extraction against gold")
    p.add_argument("--extracted", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bitextmine: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"bitextmine: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TrainingDiverged) as exc:
        print(f"bitextmine: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
