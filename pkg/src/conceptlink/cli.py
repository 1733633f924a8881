"""Command-line interface.

Model files are single versioned bundles; every command that mutates a
model reads it, applies one stage (vocabulary build, training, ...) and
writes it back out. All training commands are deterministic given their
inputs and --seed.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .engine import ModelBundle, dump_annotation_line
from .errors import ConceptLinkError
from .evaluation import learning_curve as run_learning_curve
from .evaluation import load_gold_jsonl, load_groups, score
from .linker import LinkerConfig
from .store import Vocabulary, attach_vectors, build_cdb, build_vcb, read_cdb_csv
from .textpipe import (
    DEFAULT_STOPWORDS,
    Pipeline,
    load_lemma_table,
    load_stopwords,
    tokenize,
)

log = logging.getLogger(__name__)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool):
    """Dictionary-based concept annotation: build, train, annotate, serve."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _read_corpus(path) -> list[tuple[str, str]]:
    """(doc_id, text) pairs from line-delimited JSON, or plain text with
    one document per line."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                rec = json.loads(line)
                docs.append((str(rec.get("doc_id", f"line-{i}")), rec["text"]))
            else:
                docs.append((f"line-{i}", line))
    return docs


def _load_export(path) -> dict:
    import jsonschema

    from .service import load_export_schema

    with open(path, encoding="utf-8") as fh:
        export = json.load(fh)
    try:
        jsonschema.validate(export, load_export_schema())
    except jsonschema.ValidationError as exc:
        raise ConceptLinkError(f"{path}: invalid annotation export: {exc.message}")
    return export


def _config_overrides(config: LinkerConfig, s_long, s_short, threshold) -> LinkerConfig:
    if s_long is not None:
        config.long_context_s = s_long
    if s_short is not None:
        config.short_context_s = s_short
    if threshold is not None:
        config.similarity_threshold = threshold
    return LinkerConfig(**vars(config))  # re-validate


@cli.command("build-cdb")
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("model_out", type=click.Path(dir_okay=False, writable=True))
@click.option("--lemma-table", type=click.Path(exists=True, dir_okay=False),
              help="TSV of word<TAB>lemma normalizations.")
@click.option("--stopwords", "stopwords_path",
              type=click.Path(exists=True, dir_okay=False),
              help="One stopword per line; defaults to the built-in list.")
@click.option("--dim", default=300, show_default=True,
              help="Word-vector dimensionality of the model.")
def build_cdb_cmd(csv_path, model_out, lemma_table, stopwords_path, dim):
    """Build a concept database from a cui,name,type_ids,name_status CSV."""
    lemmas = load_lemma_table(lemma_table) if lemma_table else {}
    stops = load_stopwords(stopwords_path) if stopwords_path else DEFAULT_STOPWORDS
    pipeline = Pipeline(lemma_table=lemmas, stopwords=stops)
    cdb = build_cdb(read_cdb_csv(csv_path), pipeline)
    bundle = ModelBundle(
        cdb=cdb, vcb=Vocabulary(dim=dim), lemma_table=lemmas, stopwords=stops
    )
    bundle.save(model_out)
    click.echo(f"built {len(cdb.concepts)} concepts -> {model_out}")


@cli.command("build-vcb")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Text corpus to count word frequencies from.")
@click.option("--vectors", type=click.Path(exists=True, dir_okay=False),
              help='Word-vector file with a "<count> <dim>" header.')
@click.option("--min-count", default=1, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, writable=True),
              help="Write to a new model file instead of updating in place.")
def build_vcb_cmd(model, corpus, vectors, min_count, output):
    """Count corpus words into the model vocabulary, optionally with vectors."""
    bundle = ModelBundle.load(model)

    def words():
        for _, text in _read_corpus(corpus):
            for tok in tokenize(text, "", bundle.lemma_table, bundle.stopwords).tokens:
                if tok.norm:
                    yield tok.norm

    vcb = build_vcb(words(), min_count=min_count, dim=bundle.vcb.dim)
    if vectors:
        vcb = attach_vectors(vcb, vectors)
    bundle.vcb = vcb
    bundle.invalidate_pipeline()
    bundle.save(output or model)
    click.echo(f"vocabulary: {len(vcb.entries)} words (dim {vcb.dim})"
               f" -> {output or model}")


_train_options = [
    click.option("--epochs", default=1, show_default=True),
    click.option("--seed", default=0, show_default=True),
    click.option("--s-long", type=int, help="Long context size (words per side)."),
    click.option("--s-short", type=int, help="Short context size (words per side)."),
    click.option("--threshold", type=float, help="Similarity threshold for linking."),
    click.option("-o", "--output", type=click.Path(dir_okay=False, writable=True),
                 help="Write to a new model file instead of updating in place."),
]


def _with_options(opts):
    def deco(f):
        for opt in reversed(opts):
            f = opt(f)
        return f
    return deco


@cli.command("train-self")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", required=True,
              type=click.Path(exists=True, dir_okay=False))
@_with_options(_train_options)
def train_self_cmd(model, corpus, epochs, seed, s_long, s_short, threshold, output):
    """Self-supervised concept-vector training on a raw corpus."""
    from .trainer import self_supervised_train

    bundle = ModelBundle.load(model)
    bundle.config = _config_overrides(bundle.config, s_long, s_short, threshold)
    stats = self_supervised_train(
        _read_corpus(corpus), bundle.cdb, bundle.vcb, bundle.pipeline,
        bundle.config, seed=seed, epochs=epochs,
    )
    bundle.save(output or model)
    click.echo(
        f"trained on {stats.docs_seen} docs: {stats.mentions_trained} mentions, "
        f"{len(stats.per_concept_counts)} concepts -> {output or model}"
    )


@cli.command("train-supervised")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--export", "export_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Annotation-project export (JSON).")
@_with_options(_train_options)
def train_supervised_cmd(model, export_path, epochs, seed, s_long, s_short,
                         threshold, output):
    """Train concept vectors from human-confirmed annotations."""
    from .trainer import supervised_train

    bundle = ModelBundle.load(model)
    bundle.config = _config_overrides(bundle.config, s_long, s_short, threshold)
    export = _load_export(export_path)
    stats = None
    for _ in range(max(1, epochs)):
        stats = supervised_train(
            export, bundle.cdb, bundle.vcb, bundle.pipeline, bundle.config, seed=seed
        )
    bundle.save(output or model)
    click.echo(
        f"applied {stats.mentions_trained} confirmed annotations "
        f"({stats.skipped} skipped) -> {output or model}"
    )


@cli.command("annotate")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Documents to annotate (JSON lines or plain text).")
@click.option("-o", "--output", type=click.Path(dir_okay=False, writable=True),
              help="Output file (JSON lines); defaults to stdout.")
def annotate_cmd(model, input_path, output):
    """Annotate documents, one JSON record per line."""
    bundle = ModelBundle.load(model)
    out = open(output, "w", encoding="utf-8") if output else sys.stdout
    try:
        n = 0
        for doc_id, text in _read_corpus(input_path):
            mentions = bundle.annotate(text, doc_id)
            out.write(dump_annotation_line(doc_id, text, mentions) + "\n")
            n += 1
    finally:
        if output:
            out.close()
    if output:
        click.echo(f"annotated {n} documents -> {output}")


@cli.command("train-meta")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--export", "export_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--task", "task_name", required=True,
              help="Meta-annotation task name (a key of annotation meta).")
@click.option("--context-window", default=15, show_default=True)
@click.option("--epochs", default=20, show_default=True)
@click.option("--lr", default=0.01, show_default=True)
@click.option("--hidden-dim", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report-dir", type=click.Path(file_okay=False),
              help="Also write per-epoch metrics (CSV + figure) here.")
@click.option("-o", "--output", type=click.Path(dir_okay=False, writable=True))
def train_meta_cmd(model, export_path, task_name, context_window, epochs, lr,
                   hidden_dim, seed, report_dir, output):
    """Train a context classifier for one meta-annotation task."""
    from .meta import MetaTask, build_examples, train_meta

    bundle = ModelBundle.load(model)
    export = _load_export(export_path)
    labels = sorted({
        ann["meta"][task_name]
        for project in export.get("projects", [])
        for document in project.get("documents", [])
        for ann in document.get("annotations", [])
        if task_name in ann.get("meta", {})
    })
    if not labels:
        raise ConceptLinkError(
            f"export contains no '{task_name}' labels; nothing to train"
        )
    task = MetaTask(name=task_name, labels=labels, context_window=context_window)
    examples = build_examples(export, task, bundle.pipeline)
    meta_model, metrics = train_meta(
        examples, task, bundle.vcb, epochs=epochs, lr=lr,
        hidden_dim=hidden_dim, seed=seed,
    )
    bundle.meta_models[task_name] = meta_model
    bundle.save(output or model)
    if report_dir:
        from .report import render_meta_training

        for path in render_meta_training(metrics, report_dir, task_name):
            click.echo(f"wrote {path}")
    last_test = [m for m in metrics if m["split"] == "test"]
    if last_test:
        click.echo(
            f"task '{task_name}' ({'/'.join(labels)}): "
            f"test macro-F1 {last_test[-1]['macro_f1']:.3f} -> {output or model}"
        )
    else:
        click.echo(f"task '{task_name}' stored untrained -> {output or model}")


@cli.command("evaluate")
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Gold JSON lines: {doc_id, text, mentions:[{start,end,cui}]}.")
@click.option("--groups", "groups_path",
              type=click.Path(exists=True, dir_okay=False),
              help='Concept-group config ("group_id: member, member").')
@click.option("--output-dir", required=True, type=click.Path(file_okay=False),
              help="Where metrics (JSON/CSV) and figures are written.")
def evaluate_cmd(model, gold, groups_path, output_dir):
    """Annotate gold documents and score precision/recall/F1."""
    from .report import render_evaluation

    bundle = ModelBundle.load(model)
    corpus = load_gold_jsonl(gold)
    groups = load_groups(groups_path) if groups_path else None
    pred = {}
    for doc in corpus.documents:
        pred[doc.doc_id] = [
            (m.start, m.end, m.linked_concept)
            for m in bundle.annotate(doc.text, doc.doc_id)
            if m.linked_concept is not None
        ]
    report = score(pred, corpus, groups)
    for path in render_evaluation(report, output_dir):
        click.echo(f"wrote {path}")
    click.echo(
        f"micro P/R/F1: {report.micro['precision']:.3f} "
        f"{report.micro['recall']:.3f} {report.micro['f1']:.3f}"
    )


@cli.command("learning-curve")
@click.option("--sizes", default="1,5,10,30", show_default=True,
              help="Comma-separated training-set sizes per concept.")
@click.option("--seed", default=0, show_default=True)
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
def learning_curve_cmd(sizes, seed, output_dir):
    """Disambiguation F1 vs training size on the built-in ambiguity corpus."""
    from .report import render_learning_curve
    from .synthetic import build_ambiguity_experiment

    size_list = sorted({int(s) for s in sizes.split(",") if s.strip()})
    if not size_list:
        raise ConceptLinkError("--sizes must list at least one integer")
    results = run_learning_curve(
        build_ambiguity_experiment, sizes=size_list, seed=seed
    )
    for path in render_learning_curve(results, output_dir):
        click.echo(f"wrote {path}")
    for size in size_list:
        click.echo(f"n={size}: micro-F1 {results[size]:.3f}")


@cli.command("serve")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--db", default=":memory:", show_default=True,
              help="Sqlite database path for projects and feedback.")
@click.option("--token", "tokens", multiple=True,
              help="Static bearer token; repeatable. Omit for open access.")
@click.option("--seed", default=0, show_default=True)
def serve_cmd(model, host, port, db, tokens, seed):
    """Run the annotation HTTP service."""
    import uvicorn

    from .service import create_app

    bundle = ModelBundle.load(model)
    app = create_app(
        bundle, db_path=db, auth_tokens=set(tokens) or None, seed=seed
    )
    uvicorn.run(app, host=host, port=port, log_level="info")


def main():
    try:
        cli(auto_envvar_prefix="CONCEPTLINK", standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(exc.exit_code or 1)
    except (ConceptLinkError, OSError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
