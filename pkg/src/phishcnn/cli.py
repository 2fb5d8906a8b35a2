"""Command-line entry point.

Subcommands mirror the workflow stages: ``build-vocab`` -> ``train`` ->
``eval`` / ``predict``, plus ``fetch`` for corpus building. Every run writes a
``run.json`` capturing the fully resolved configuration (seed included), so a
run can be replayed exactly; timing numbers are segregated under ``timing``
keys and excluded from reproducibility guarantees.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, corpus, metrics, model, nncore, tokenizer, training


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _load_vocab(path: str | None, kind: str) -> tokenizer.Vocabulary:
    if path is None:
        raise ValueError(f"--{kind[:4]}-vocab is required for this variant")
    if not Path(path).is_file():
        raise ValueError(f"vocabulary file not found: {path}")
    return tokenizer.Vocabulary.load(path, kind)


def _encode_manifest(manifest: corpus.CorpusManifest,
                     char_vocab: tokenizer.Vocabulary | None,
                     word_vocab: tokenizer.Vocabulary | None,
                     maxlen_1: int, maxlen_2: int) -> list[tokenizer.EncodedDocument]:
    return [tokenizer.encode(rec.html, rec.label, char_vocab, word_vocab,
                             maxlen_1=maxlen_1, maxlen_2=maxlen_2, doc_id=rec.id)
            for rec in manifest.records]


# ---------------------------------------------------------------------------
# build-vocab
# ---------------------------------------------------------------------------

def cmd_build_vocab(args) -> int:
    manifest = corpus.load_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {}
    if args.kind in ("char", "both"):
        vocab = tokenizer.build_vocab((r.html for r in manifest.records), "character")
        vocab.save(out_dir / "char_vocab.txt")
        summary["character"] = {"size": vocab.size,
                                "top_tokens": vocab.index_to_token[2:12]}
    if args.kind in ("word", "both"):
        vocab = tokenizer.build_vocab((r.html for r in manifest.records), "word",
                                      max_size=args.word_vocab_cap)
        vocab.save(out_dir / "word_vocab.txt")
        summary["word"] = {"size": vocab.size,
                           "top_tokens": vocab.index_to_token[2:12]}
    _write_json(out_dir / "vocab_summary.json", summary)
    for kind, info in summary.items():
        print(f"{kind} vocabulary: {info['size']} entries")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _run_config(args, extra: dict) -> dict:
    payload = {key: (str(val) if isinstance(val, Path) else val)
               for key, val in vars(args).items() if key != "func"}
    payload.update(extra)
    payload["package_version"] = __version__
    return payload


def cmd_train(args) -> int:
    variant = args.variant
    manifest = corpus.load_manifest(args.manifest)
    char_vocab = _load_vocab(args.char_vocab, "character") if variant != "word" else None
    word_vocab = _load_vocab(args.word_vocab, "word") if variant != "character" else None

    docs = _encode_manifest(manifest, char_vocab, word_vocab,
                            args.char_maxlen, args.word_maxlen)
    config = training.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
        seed=args.seed, early_stop_patience=args.patience, variant=variant)
    train_docs, val_docs, test_docs = training.split_dataset(
        docs, config.split_fractions, config.seed)

    spec = model.ArchitectureSpec(
        variant=variant,
        char_vocab_size=char_vocab.size if char_vocab else None,
        word_vocab_size=word_vocab.size if word_vocab else None,
        maxlen_1=args.char_maxlen if variant != "word" else None,
        maxlen_2=args.word_maxlen if variant != "character" else None,
        d=args.embed_dim, filters=args.filters, kernel=args.kernel_size,
        dropout=args.dropout)
    params = model.build_model(spec, nncore.make_rng(config.seed))

    started = time.monotonic()
    trained, report = training.train(params, config, train_docs, val_docs)
    train_time = time.monotonic() - started

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / f"model-{variant}{model.MODEL_SUFFIX}"
    model.save_model(trained, model_path)
    report.model_path = model_path.name

    final = {}
    for cut_name, cut_docs in (("train", train_docs), ("test", test_docs)):
        scores, labels = training.score_documents(trained, cut_docs)
        final[cut_name] = metrics.evaluate(scores, labels, args.threshold).to_dict()
        final[cut_name].pop("roc_points")
    report_payload = report.to_dict()
    report_payload["final"] = final
    report_payload["timing"]["train_time_s"] = train_time
    _write_json(out_dir / "report.json", report_payload)

    _write_json(out_dir / "run.json", _run_config(args, {
        "splits": {"train": [d.doc_id for d in train_docs],
                   "val": [d.doc_id for d in val_docs],
                   "test": [d.doc_id for d in test_docs]},
    }))

    log_lines = [f"variant={variant} seed={config.seed} "
                 f"train={len(train_docs)} val={len(val_docs)} test={len(test_docs)}"]
    for stats in report.epochs:
        log_lines.append(
            f"epoch {stats.epoch}: train_loss={stats.train_loss:.6f} "
            f"val_loss={stats.val_loss:.6f} val_accuracy={stats.val_accuracy:.4f}")
    log_lines.append(f"best_epoch={report.best_epoch}")
    (out_dir / "train.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    print(f"wrote {model_path}")
    if report.epochs:
        last = report.epochs[-1]
        print(f"best epoch {report.best_epoch}; last val_accuracy {last.val_accuracy:.4f}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    params = model.load_model(args.model)
    spec = params.spec
    char_vocab = _load_vocab(args.char_vocab, "character") if spec.uses_chars else None
    word_vocab = _load_vocab(args.word_vocab, "word") if spec.uses_words else None
    if char_vocab and char_vocab.size != spec.char_vocab_size:
        raise ValueError(f"char vocabulary size {char_vocab.size} does not match "
                         f"the model's {spec.char_vocab_size}")
    if word_vocab and word_vocab.size != spec.word_vocab_size:
        raise ValueError(f"word vocabulary size {word_vocab.size} does not match "
                         f"the model's {spec.word_vocab_size}")

    manifest = corpus.load_manifest(args.manifest)
    if not manifest.records:
        raise ValueError(f"empty test manifest: {args.manifest}")

    overlap = None
    if args.train_manifest:
        train_ids = {r.id for r in corpus.load_manifest(args.train_manifest).records}
        shared = sorted(train_ids & {r.id for r in manifest.records})
        if shared:
            raise ValueError(
                f"{len(shared)} document ids appear in both the training and "
                f"test manifests (first: {shared[0]}); temporal splits must be "
                f"disjoint")
        overlap = 0

    docs = _encode_manifest(manifest, char_vocab, word_vocab,
                            spec.maxlen_1 or 0, spec.maxlen_2 or 0)
    started = time.monotonic()
    scores, labels = training.score_documents(params, docs)
    elapsed = time.monotonic() - started

    report = metrics.evaluate(scores, labels, args.threshold)
    report.timing = {"total_s": elapsed, "per_document_s": elapsed / len(docs)}
    payload = report.to_dict()
    payload["n_documents"] = len(docs)
    payload["train_test_overlap"] = overlap

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", payload)
    if report.roc_points is not None:
        (out_dir / "roc.csv").write_text(
            "\n".join(metrics.roc_csv_lines(report.roc_points)) + "\n",
            encoding="utf-8")
    _write_json(out_dir / "run.json", _run_config(args, {}))

    acc = "-" if report.accuracy is None else f"{report.accuracy:.4f}"
    auc = "-" if report.auc is None else f"{report.auc:.4f}"
    print(f"scored {len(docs)} documents: accuracy={acc} auc={auc}")
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def cmd_predict(args) -> int:
    if (args.html_file is None) == (args.url is None):
        raise ValueError("provide exactly one of an HTML file or --url")
    params = model.load_model(args.model)
    spec = params.spec
    char_vocab = _load_vocab(args.char_vocab, "character") if spec.uses_chars else None
    word_vocab = _load_vocab(args.word_vocab, "word") if spec.uses_words else None
    if args.url is not None:
        html = corpus.fetch_html(args.url)
    else:
        html = Path(args.html_file).read_bytes().decode("utf-8", errors="replace")
    doc = tokenizer.encode(html, 0, char_vocab, word_vocab,
                           maxlen_1=spec.maxlen_1 or 0, maxlen_2=spec.maxlen_2 or 0)
    prob, _ = model.forward(params, doc, mode="infer")
    verdict = "phishing" if prob >= args.threshold else "legitimate"
    print(f"score={prob:.6f} verdict={verdict}")
    return 0


# ---------------------------------------------------------------------------
# fetch
# ---------------------------------------------------------------------------

def cmd_fetch(args) -> int:
    limits = corpus.FetchLimits(timeout=args.timeout, max_bytes=args.max_bytes,
                                max_redirects=args.max_redirects)
    body = corpus.fetch_bytes(args.url, limits)
    if args.out:
        Path(args.out).write_bytes(body)
        print(f"wrote {len(body)} bytes to {args.out}")
    else:
        sys.stdout.write(body.decode("utf-8", errors="replace"))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phishcnn",
        description="Train and run character/word CNN phishing page classifiers "
                    "over raw HTML.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build vocabularies from a training manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kind", choices=("char", "word", "both"), default="both")
    p.add_argument("--word-vocab-cap", type=int, default=None)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train one variant")
    p.add_argument("--manifest", required=True)
    p.add_argument("--char-vocab")
    p.add_argument("--word-vocab")
    p.add_argument("--variant", choices=model.VARIANTS, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.0015)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--char-maxlen", type=int, default=tokenizer.DEFAULT_CHAR_MAXLEN)
    p.add_argument("--word-maxlen", type=int, default=tokenizer.DEFAULT_WORD_MAXLEN)
    p.add_argument("--embed-dim", type=int, default=100)
    p.add_argument("--filters", type=int, default=32)
    p.add_argument("--kernel-size", type=int, default=8)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a test manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--char-vocab")
    p.add_argument("--word-vocab")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--train-manifest",
                   help="if given, reject any document id overlap with the test manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score one HTML file or URL")
    p.add_argument("html_file", nargs="?")
    p.add_argument("--url")
    p.add_argument("--model", required=True)
    p.add_argument("--char-vocab")
    p.add_argument("--word-vocab")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fetch", help="fetch a page, following redirects")
    p.add_argument("--url", required=True)
    p.add_argument("--out")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--max-bytes", type=int, default=5 * 1024 * 1024)
    p.add_argument("--max-redirects", type=int, default=10)
    p.set_defaults(func=cmd_fetch)

    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (corpus.ManifestError, corpus.FetchError, model.ModelFormatError,
            training.TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
