"""Command-line pipeline: split, train, predict, evaluate, stats, significance, diff-report.

Settings come from an optional TOML file (``--config``) of flat keys; any key
can be overridden by the flag of the same name, e.g. ``--seed 7`` or
``--model-dir models/``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

from codafy._io import atomic_write_text, read_lines
from codafy.align import format_stats_columns, format_stats_tsv, transformation_stats
from codafy.corpus import (
    CITY_DIALECTS,
    CITY_NAMES,
    Dialect,
    ParallelCorpus,
    Sentence,
    Split,
    apply_manifest,
    load_corpus,
    read_manifest,
    split_corpus,
    write_manifest,
)
from codafy.did import DidModel, did_predict, train_did
from codafy.evaluation import (
    DEFAULT_ITERATIONS,
    SIGNIFICANCE_LEVEL,
    approximate_randomization,
    category_distribution,
    diff_report,
    format_category_table,
    format_diff_tsv,
    format_report_table,
    m2_score,
    read_diff_tsv,
)
from codafy.normalize import (
    JOINT,
    ControlScheme,
    MleModel,
    Normalizer,
    NormalizerKind,
    format_control_input,
    load_control_table,
    load_hypotheses,
    train_mle,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass
class RunConfig:
    corpus: str = "data/corpus.tsv"
    manifest: str = "runs/manifest.tsv"
    model_dir: str = "runs/models"
    output_dir: str = "runs/outputs"
    train_ratio: float = 0.70
    dev_ratio: float = 0.15
    test_ratio: float = 0.15
    seed: int = 42
    control_tokens: str = ""
    did_orders: str = "1,2,3"
    msa_data: str = ""
    sig_iterations: int = DEFAULT_ITERATIONS
    sig_seed: int = 13

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.dev_ratio, self.test_ratio)

    @property
    def orders(self) -> tuple[int, ...]:
        try:
            orders = tuple(int(x) for x in str(self.did_orders).split(",") if x.strip())
        except ValueError:
            raise ValueError(f"did_orders must be comma-separated integers, got {self.did_orders!r}")
        if not orders or min(orders) < 1:
            raise ValueError(f"did_orders must be positive integers, got {self.did_orders!r}")
        return orders

    def validate(self) -> None:
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1.0, got {sum(self.ratios)!r}")
        if self.sig_iterations < 1:
            raise ValueError("sig_iterations must be >= 1")
        self.orders


CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        unknown = sorted(set(doc) - set(CONFIG_FIELDS))
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        values.update(doc)
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig(**values)
    for name, f in CONFIG_FIELDS.items():
        caster = {"int": int, "float": float, "str": str}[f.type]
        setattr(config, name, caster(getattr(config, name)))
    config.validate()
    return config


def model_path(config: RunConfig, name: str) -> Path:
    return Path(config.model_dir) / f"{name}.json"


def load_split(config: RunConfig, split: str) -> ParallelCorpus:
    corpus = load_corpus(config.corpus)
    if split == "all":
        if Path(config.manifest).exists():
            corpus = apply_manifest(corpus, read_manifest(config.manifest))
        return corpus
    if not Path(config.manifest).exists():
        raise FileNotFoundError(f"manifest {config.manifest} not found; run `codafy split` first")
    corpus = apply_manifest(corpus, read_manifest(config.manifest))
    return corpus.select(split=Split.parse(split))


def detok(sentences: Sequence[Sentence]) -> str:
    return "".join(s.text + "\n" for s in sentences)


def cmd_split(config: RunConfig, args) -> int:
    corpus = split_corpus(load_corpus(config.corpus), config.ratios, config.seed)
    write_manifest(corpus, config.manifest)
    counts = corpus.split_counts()
    print(f"{'dialect':<10}{'train':>8}{'dev':>8}{'test':>8}")
    for d, row in counts.items():
        print(f"{CITY_NAMES[d]:<10}{row[Split.TRAIN]:>8}{row[Split.DEV]:>8}{row[Split.TEST]:>8}")
    totals = [sum(row[s] for row in counts.values()) for s in (Split.TRAIN, Split.DEV, Split.TEST)]
    print(f"{'Total':<10}{totals[0]:>8}{totals[1]:>8}{totals[2]:>8}")
    print(f"wrote {config.manifest}")
    return 0


def _msa_sentences(config: RunConfig) -> list[Sentence]:
    if not config.msa_data:
        return []
    return [Sentence.from_text(line) for line in read_lines(config.msa_data) if line.strip()]


def cmd_train(config: RunConfig, args) -> int:
    train = load_split(config, "train")
    written = []
    if args.model in ("mle-joint", "mle-ensemble"):
        joint = train_mle(train, JOINT)
        joint.save(model_path(config, "mle-joint"))
        written.append(model_path(config, "mle-joint"))
    if args.model == "mle-ensemble":
        for d in CITY_DIALECTS:
            train_mle(train, d).save(model_path(config, f"mle-{d.value}"))
            written.append(model_path(config, f"mle-{d.value}"))
    if args.model == "did":
        labeled = [(ex.raw, ex.dialect) for ex in train]
        msa = _msa_sentences(config)
        labeled += [(s, Dialect.MSA) for s in msa]
        labels = list(CITY_DIALECTS) + ([Dialect.MSA] if msa else [])
        model = train_did(labeled, config.orders, labels=labels)
        model.save(model_path(config, "did"))
        written.append(model_path(config, "did"))
    for path in written:
        print(f"wrote {path}")
    return 0


def _load_did(config: RunConfig) -> DidModel:
    path = model_path(config, "did")
    if not path.exists():
        raise FileNotFoundError(f"missing model file {path}")
    return DidModel.load(path)


def _load_mle(config: RunConfig, name: str) -> MleModel:
    path = model_path(config, name)
    if not path.exists():
        raise FileNotFoundError(f"missing model file {path}")
    return MleModel.load(path)


def build_normalizer(config: RunConfig, system: str, force_dialect: str | None) -> Normalizer:
    kind = NormalizerKind(system)
    if kind is NormalizerKind.DO_NOTHING:
        return Normalizer(kind)
    joint = _load_mle(config, "mle-joint")
    if kind is NormalizerKind.MLE_JOINT:
        return Normalizer(kind, joint=joint)
    models = {d: _load_mle(config, f"mle-{d.value}") for d in CITY_DIALECTS}
    if force_dialect:
        forced = Dialect.parse(force_dialect)
        did = lambda sentence: forced  # noqa: E731
    else:
        did = _load_did(config)
    return Normalizer(kind, joint=joint, models=models, did=did)


def cmd_predict(config: RunConfig, args) -> int:
    corpus = load_split(config, args.split)
    normalizer = build_normalizer(config, args.system, args.force_dialect)
    outputs, chosen = [], []
    for ex in corpus:
        hyp, label = normalizer(ex.raw)
        outputs.append(hyp)
        chosen.append(label)
    output = args.output or str(Path(config.output_dir) / f"{args.system}.{args.split}.txt")
    atomic_write_text(output, detok(outputs))
    print(f"wrote {output}")
    if normalizer.kind is NormalizerKind.MLE_ENSEMBLE:
        atomic_write_text(output + ".dialects", "".join(f"{d.value}\n" for d in chosen))
        print(f"wrote {output}.dialects")
        gold = [ex.dialect for ex in corpus]
        hits = sum(g is c for g, c in zip(gold, chosen))
        if gold:
            print(f"DID accuracy: {100 * hits / len(gold):.2f}%")
    return 0


def cmd_format_control(config: RunConfig, args) -> int:
    corpus = load_split(config, args.split)
    table = load_control_table(config.control_tokens or None)
    scheme = ControlScheme.parse(args.scheme)
    if args.dialect_source == "did":
        did = _load_did(config)
        labels = []
        for ex in corpus:
            scores = did_predict(did, ex.raw).scores
            # Control tokens exist only for cities; an MSA call takes the best city.
            labels.append(max((d for d in CITY_DIALECTS if d in scores), key=scores.__getitem__))
    else:
        labels = [ex.dialect for ex in corpus]
    lines = [format_control_input(ex.raw, d, scheme, table) for ex, d in zip(corpus, labels)]
    output = args.output or str(Path(config.output_dir) / f"control.{scheme.value}.{args.split}.txt")
    atomic_write_text(output, "".join(line + "\n" for line in lines))
    print(f"wrote {output}")
    return 0


def _score(config: RunConfig, hyp_path: str, split: str):
    corpus = load_split(config, split)
    hyps = load_hypotheses(hyp_path, len(corpus))
    sources = [ex.raw for ex in corpus]
    refs = [ex.coda for ex in corpus]
    return corpus, sources, refs, hyps


def cmd_evaluate(config: RunConfig, args) -> int:
    corpus, sources, refs, hyps = _score(config, args.hyp, args.split)
    dialects = [ex.dialect for ex in corpus] if args.per_dialect else None
    report = m2_score(sources, hyps, refs, dialects)
    stem = args.report or str(Path(config.output_dir) / f"{Path(args.hyp).name}.report")
    table = format_report_table(report, title=f"{args.hyp} ({args.split})")
    atomic_write_text(stem + ".json", report.to_json())
    atomic_write_text(stem + ".txt", table)
    print(table, end="")
    print(f"wrote {stem}.json and {stem}.txt")
    return 0


def cmd_stats(config: RunConfig, args) -> int:
    corpus = load_split(config, args.split)
    if args.per_dialect:
        rankings = {d: transformation_stats(corpus, d) for d in CITY_DIALECTS}
        text = format_stats_columns(rankings, top=args.top)
    else:
        text = format_stats_tsv(transformation_stats(corpus), top=args.top)
    if args.output:
        atomic_write_text(args.output, text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_significance(config: RunConfig, args) -> int:
    corpus = load_split(config, args.split)
    hyps_a = load_hypotheses(args.hyp_a, len(corpus))
    hyps_b = load_hypotheses(args.hyp_b, len(corpus))
    result = approximate_randomization(
        [ex.raw for ex in corpus],
        [ex.coda for ex in corpus],
        hyps_a,
        hyps_b,
        metric=args.metric,
        iterations=config.sig_iterations,
        seed=config.sig_seed,
    )
    doc = {**result.__dict__, "significant": result.significant, "alpha": SIGNIFICANCE_LEVEL}
    verdict = "significant" if result.significant else "not significant"
    print(
        f"{result.metric}: A={result.score_a:.4f} B={result.score_b:.4f} "
        f"delta={result.observed_delta:.4f} p={result.p_value:.4f} "
        f"({verdict} at p < {SIGNIFICANCE_LEVEL})"
    )
    if args.output:
        atomic_write_text(args.output, json.dumps(doc, indent=2) + "\n")
        print(f"wrote {args.output}")
    return 0


def cmd_diff_report(config: RunConfig, args) -> int:
    corpus, sources, refs, hyps = _score(config, args.hyp, args.split)
    records = diff_report(
        sources, hyps, refs, [ex.dialect for ex in corpus], [ex.id for ex in corpus]
    )
    output = args.output or str(Path(config.output_dir) / f"{Path(args.hyp).name}.diff.tsv")
    atomic_write_text(output, format_diff_tsv(records))
    print(f"wrote {output} ({len(records)} records)")
    return 0


def cmd_categories(config: RunConfig, args) -> int:
    dist = category_distribution(read_diff_tsv(args.annotated))
    sys.stdout.write(format_category_table(dist))
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    group.add_argument("--config", help="TOML file of flat key = value settings")
    for name, f in CONFIG_FIELDS.items():
        caster = {"int": int, "float": float, "str": str}[f.type]
        flags = [f"--{name.replace('_', '-')}"]
        if "_" in name:
            flags.append(f"--{name}")
        group.add_argument(
            *flags, dest=name, type=caster, default=None, help=f"(default: {f.default!r})"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codafy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help, description=help)
        _add_config_flags(p)
        p.set_defaults(func=func)
        return p

    add("split", cmd_split, "Split the corpus per dialect and write the id/split manifest.")

    p = add("train", cmd_train, "Train and save MLE or DID models on the train split.")
    p.add_argument("--model", required=True, choices=["mle-joint", "mle-ensemble", "did"])

    p = add("predict", cmd_predict, "Normalize a split and write one hypothesis per line.")
    p.add_argument("--system", required=True, choices=["do-nothing", "mle-joint", "mle-ensemble"])
    p.add_argument("--split", default="dev")
    p.add_argument("--output")
    p.add_argument("--force-dialect", help="route every sentence to this dialect's model")

    p = add("format-control", cmd_format_control, "Write control-token inputs for a seq2seq system.")
    p.add_argument("--scheme", required=True, choices=[s.value for s in ControlScheme])
    p.add_argument("--split", default="train")
    p.add_argument("--dialect-source", choices=["gold", "did"], default="gold")
    p.add_argument("--output")

    p = add("evaluate", cmd_evaluate, "Score a hypothesis file: P/R/F1/F0.5 and WER.")
    p.add_argument("--hyp", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--per-dialect", action="store_true")
    p.add_argument("--report", help="output path stem for .json and .txt")

    p = add("stats", cmd_stats, "Rank raw-to-CODA character transformations.")
    p.add_argument("--split", default="all")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--per-dialect", action="store_true")
    p.add_argument("--output")

    p = add("significance", cmd_significance, "Approximate randomization test between two systems.")
    p.add_argument("--hyp-a", required=True)
    p.add_argument("--hyp-b", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--metric", default="f_half", choices=["f_half", "wer"])
    p.add_argument("--output")

    p = add("diff-report", cmd_diff_report, "List unmatched edits for manual error annotation.")
    p.add_argument("--hyp", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--output")

    p = add("categories", cmd_categories, "Summarize an annotated diff report by error category.")
    p.add_argument("--annotated", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {name: getattr(args, name) for name in CONFIG_FIELDS}
    try:
        config = load_config(args.config, overrides)
        return args.func(config, args)
    except (ValueError, OSError, KeyError, tomllib.TOMLDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"codafy {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
