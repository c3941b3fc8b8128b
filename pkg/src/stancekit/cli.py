"""Command-line pipeline: ingest, topics, neutrals, split, embed-stub, cluster,
train, baseline, eval, analyze, hpsearch, report.

Every command prints a one-line summary and writes machine-readable artifacts
(CSV or line-delimited dataset records) under the chosen output location.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from hashlib import blake2b
from typing import Optional, Sequence

import numpy as np

from . import baselines, embed, evaluate, gtr, hpsearch, model, topicx
from .corpus import (
    DatasetSplit,
    StanceLabel,
    aggregate_annotations,
    generate_neutrals,
    read_annotations,
    read_dataset,
    read_documents,
    split_dataset,
    write_dataset,
)
from .errors import MissingEmbedding, StanceKitError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not argparse's 2
        raise UsageError(message)


def stage_seed(master: int, stage: str) -> int:
    digest = blake2b(f"{master}:{stage}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2**31)


def _load_config_file(path: str) -> dict[str, str]:
    config: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            config[key.strip().replace("-", "_")] = value.strip()
    return config


def _inject_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Insert config-file values as flags right after the subcommand.

    Explicit command-line flags come later in argv and therefore win.
    Config keys the chosen subcommand does not accept are ignored.
    """
    config_path = None
    rest = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config requires a path")
            config_path = argv[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
            i += 1
            continue
        rest.append(tok)
        i += 1
    if config_path is None:
        return argv
    config = _load_config_file(config_path)
    sub_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    cmd_idx = next((i for i, tok in enumerate(rest) if tok in sub_action.choices), None)
    if cmd_idx is None:
        return rest
    sub = sub_action.choices[rest[cmd_idx]]
    valid: dict[str, tuple[str, argparse.Action]] = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                valid[opt[2:].replace("-", "_")] = (opt, action)
    injected: list[str] = []
    for key in sorted(config):
        if key not in valid:
            continue
        opt, action = valid[key]
        if isinstance(action, argparse._StoreTrueAction):
            if config[key].lower() in ("1", "true", "yes"):
                injected.append(opt)
        else:
            injected.extend([opt, config[key]])
    return rest[: cmd_idx + 1] + injected + rest[cmd_idx + 1 :]


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_csv(path: str) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- split and model artifact helpers ------------------------------------------


def write_split(split: DatasetSplit, out_dir: str) -> None:
    write_dataset(split.train, os.path.join(out_dir, "train.jsonl"))
    write_dataset(split.dev, os.path.join(out_dir, "dev.jsonl"))
    write_dataset(split.test, os.path.join(out_dir, "test.jsonl"))
    rows = []
    for partition, zero, few in (
        ("dev", split.zero_shot_dev, split.few_shot_dev),
        ("test", split.zero_shot_test, split.few_shot_test),
    ):
        rows.extend(("zero_shot", partition, i) for i in zero)
        rows.extend(("few_shot", partition, i) for i in few)
    _write_csv(os.path.join(out_dir, "subsets.csv"), ("subset", "partition", "index"), rows)


def read_split(split_dir: str) -> DatasetSplit:
    train = read_dataset(os.path.join(split_dir, "train.jsonl"))
    dev = read_dataset(os.path.join(split_dir, "dev.jsonl"))
    test = read_dataset(os.path.join(split_dir, "test.jsonl"))
    subsets = {("zero_shot", "dev"): [], ("few_shot", "dev"): [],
               ("zero_shot", "test"): [], ("few_shot", "test"): []}
    for row in _read_csv(os.path.join(split_dir, "subsets.csv")):
        subsets[(row["subset"], row["partition"])].append(int(row["index"]))
    return DatasetSplit(
        train=tuple(train),
        dev=tuple(dev),
        test=tuple(test),
        zero_shot_dev=tuple(subsets[("zero_shot", "dev")]),
        few_shot_dev=tuple(subsets[("few_shot", "dev")]),
        zero_shot_test=tuple(subsets[("zero_shot", "test")]),
        few_shot_test=tuple(subsets[("few_shot", "test")]),
    )


def save_tfidf(tfidf: embed.TfIdfModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"doc_count": tfidf.doc_count, "doc_freq": dict(sorted(tfidf.doc_freq.items()))},
            fh,
            sort_keys=True,
        )


def load_tfidf(path: str) -> embed.TfIdfModel:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return embed.TfIdfModel(doc_count=int(data["doc_count"]),
                            doc_freq={k: int(v) for k, v in data["doc_freq"].items()})


def write_predictions(path: str, rows: Sequence[tuple[str, int, Optional[np.ndarray]]]) -> None:
    out = []
    for example_id, pred, proba in rows:
        if proba is None:
            out.append((example_id, pred, "", "", ""))
        else:
            out.append((example_id, pred, repr(float(proba[0])), repr(float(proba[1])),
                        repr(float(proba[2]))))
    _write_csv(path, ("example_id", "pred", "p_con", "p_pro", "p_neutral"), out)


def read_predictions(path: str) -> dict[str, int]:
    return {row["example_id"]: int(row["pred"]) for row in _read_csv(path)}


def _report_rows(name: str, report: Optional[evaluate.EvalReport]) -> list[tuple]:
    if report is None:
        return [(name, "", "", "", "", 0)]
    return [
        (
            name,
            repr(report.macro_f1),
            repr(report.per_label[0].f1),
            repr(report.per_label[1].f1),
            repr(report.per_label[2].f1),
            report.n,
        )
    ]


# --- commands -------------------------------------------------------------------


def cmd_ingest(args) -> int:
    records = read_annotations(args.annotations)
    documents, sarcasm = read_documents(args.documents)
    examples = aggregate_annotations(
        records,
        documents,
        min_agreement=args.min_agreement,
        sarcasm=sarcasm,
        invert_scale=args.invert_scale,
    )
    write_dataset(examples, args.out_file)
    print(f"ingest: {len(records)} annotations -> {len(examples)} examples -> {args.out_file}")
    return 0


def cmd_topics(args) -> int:
    categories: list[list[str]] = []
    if args.categories:
        with open(args.categories, encoding="utf-8") as fh:
            categories = [[c.strip() for c in line.split(",") if c.strip()] for line in fh]
    n_lines = n_topics = 0
    with open(args.parses, encoding="utf-8") as fh, open(
        args.out_file, "w", encoding="utf-8"
    ) as out:
        for i, line in enumerate(fh):
            line = line.strip()
            found: list[str] = []
            if line:
                found = topicx.extract_candidate_topics(topicx.parse_bracketed(line))
            if not found and i < len(categories):
                found = topicx.fallback_category_topics(categories[i])
            out.write("\t".join(found) + "\n")
            n_lines += 1
            n_topics += len(found)
    print(f"topics: {n_lines} parses -> {n_topics} candidate topics -> {args.out_file}")
    return 0


def cmd_neutrals(args) -> int:
    dataset = read_dataset(args.dataset)
    seed = stage_seed(args.seed, "neutrals")
    out = generate_neutrals(dataset, p=args.p, rng_seed=seed)
    write_dataset(out, args.out_file)
    print(f"neutrals: {len(dataset)} -> {len(out)} examples (p={args.p}) -> {args.out_file}")
    return 0


def cmd_split(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(","))
    if len(ratios) != 3:
        raise UsageError("--ratios requires three comma-separated values")
    dataset = read_dataset(args.dataset)
    split = split_dataset(dataset, ratios=ratios, rng_seed=stage_seed(args.seed, "split"))
    out_dir = _ensure_out(args.out)
    write_split(split, out_dir)
    print(
        f"split: train={len(split.train)} dev={len(split.dev)} test={len(split.test)} "
        f"(zero-shot dev={len(split.zero_shot_dev)}, test={len(split.zero_shot_test)}) -> {out_dir}"
    )
    return 0


def cmd_embed_stub(args) -> int:
    examples = []
    for path in args.dataset:
        examples.extend(read_dataset(path))
    store = embed.build_stub_store(examples, dim=args.dim, salt=stage_seed(args.seed, "embed"))
    embed.write_store(store, args.out_file)
    print(
        f"embed-stub: {len(store.joint)} joint, {len(store.sep_docs)} docs, "
        f"{len(store.sep_topics)} topics (dim={args.dim}) -> {args.out_file}"
    )
    return 0


def cmd_cluster(args) -> int:
    train = read_dataset(args.train)
    store = embed.read_store(args.store)
    seen: set[str] = set()
    train_docs = []
    for ex in train:
        if ex.doc_id not in seen:
            if ex.doc_id not in store.sep_docs:
                raise MissingEmbedding(f"{args.store}: no separate entry for document {ex.doc_id}")
            seen.add(ex.doc_id)
            train_docs.append(list(store.sep_docs[ex.doc_id].tokens))
    tfidf = embed.tfidf_fit(train_docs)
    points, ids = gtr.build_points(train, store, tfidf)
    out_dir = _ensure_out(args.out)

    if args.k is not None:
        k = args.k
    else:
        if not args.dev:
            raise UsageError("--dev is required when --k is not fixed")
        dev = read_dataset(args.dev)
        dev_points, _ = gtr.build_points(dev, store, tfidf)
        lo, hi = (int(v) for v in args.k_range.split(","))
        k, table = gtr.select_k(
            points,
            ids,
            dev_points,
            trials=args.trials,
            k_range=(lo, hi),
            rng_seed=stage_seed(args.seed, "select_k"),
        )
        _write_csv(
            os.path.join(out_dir, "kselect.csv"),
            ("k", "dev_ssd"),
            [(row_k, repr(ssd)) for row_k, ssd in table],
        )
    cluster_model = gtr.ward_cluster(points, ids, k=k)
    gtr.save_cluster_model(cluster_model, os.path.join(out_dir, "clusters.bin"))
    save_tfidf(tfidf, os.path.join(out_dir, "tfidf.json"))
    stats = gtr.cluster_stats(cluster_model, train)
    _write_csv(
        os.path.join(out_dir, "cluster_stats.csv"),
        ("cluster", "size", "unique_topics", "n_con", "n_pro", "n_neutral"),
        [
            (c, s.size, s.unique_topics, s.label_counts[0], s.label_counts[1], s.label_counts[2])
            for c, s in stats.items()
        ],
    )
    print(f"cluster: {len(points)} points -> k={k} -> {out_dir}")
    return 0


def _emit_predictions(out_dir, name, examples, predict_fn):
    rows = []
    gold = []
    preds = []
    for ex in examples:
        label, proba = predict_fn(ex)
        rows.append((ex.example_id, int(label), proba))
        gold.append(int(ex.label))
        preds.append(int(label))
    write_predictions(os.path.join(out_dir, name), rows)
    return gold, preds


def cmd_train(args) -> int:
    split = read_split(args.split_dir)
    store = embed.read_store(args.store)
    config = model.TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        patience=args.patience,
        batch_size=args.batch_size,
        hidden=args.hidden,
        seed=stage_seed(args.seed, f"train-{args.model}"),
    )
    out_dir = _ensure_out(args.out)
    needs_clusters = args.model in ("tga", "cffnn")
    if needs_clusters:
        if not args.cluster_model or not args.tfidf:
            raise UsageError(f"--cluster-model and --tfidf are required for {args.model}")
        cluster_model = gtr.load_cluster_model(args.cluster_model)
        tfidf = load_tfidf(args.tfidf)

    if args.model == "tga":
        params, history = model.train(split, store, cluster_model, tfidf, config)
        model.save_params(params, os.path.join(out_dir, "params.tgap"))

        def predict_fn(ex):
            return model.predict(ex, store, cluster_model, tfidf, params)

    elif args.model == "cffnn":
        train_x, train_y = baselines.cffnn_dataset(split.train, store, cluster_model, tfidf)
        dev_examples = [split.dev[i] for i in split.zero_shot_dev]
        if dev_examples:
            dev_x, dev_y = baselines.cffnn_dataset(dev_examples, store, cluster_model, tfidf)
        else:
            dev_x = dev_y = None
        predictor = baselines.baseline_cffnn(train_x, train_y, dev_x, dev_y, config)
        history = predictor.history

        def predict_fn(ex):
            tensors = model.resolve_tensors(ex, store, cluster_model, tfidf)
            proba = predictor.predict_proba(tensors.r_dt)
            return int(np.argmax(proba)), proba

    else:  # pooled-joint / pooled-sep
        mode = "joint" if args.model == "pooled-joint" else "separate"
        predictor = baselines.baseline_pooled_head(mode, split, store, config)
        history = predictor.history

        def predict_fn(ex):
            proba = predictor.predict_proba(ex)
            return int(np.argmax(proba)), proba

    _write_csv(
        os.path.join(out_dir, "history.csv"),
        ("epoch", "train_loss", "dev_macro_f1"),
        [(e, repr(l), repr(f)) for e, l, f in history],
    )
    summary = []
    for partition, examples in (("dev", split.dev), ("test", split.test)):
        if not examples:
            continue
        gold, preds = _emit_predictions(
            out_dir, f"predictions_{partition}.csv", examples, predict_fn
        )
        summary.append(f"{partition} macro-F1 {evaluate.macro_f1_score(gold, preds):.4f}")
    best = max((h[2] for h in history if h[2] == h[2]), default=float("nan"))
    print(f"train[{args.model}]: best zero-shot dev F1 {best:.4f}; {'; '.join(summary)} -> {out_dir}")
    return 0


def cmd_baseline(args) -> int:
    split = read_split(args.split_dir)
    out_dir = _ensure_out(args.out)
    if args.model == "cmaj":
        if not (args.store and args.cluster_model and args.tfidf):
            raise UsageError("--store, --cluster-model and --tfidf are required for cmaj")
        store = embed.read_store(args.store)
        cluster_model = gtr.load_cluster_model(args.cluster_model)
        tfidf = load_tfidf(args.tfidf)
        predictor = baselines.baseline_cmaj(cluster_model, split.train)

        def predict_fn(ex):
            tensors = model.resolve_tensors(ex, store, cluster_model, tfidf)
            return int(predictor.predict_cluster(tensors.cluster)), None

    else:  # bowv
        predictor = baselines.baseline_bowv(
            split.train, split.dev, vocab_cap=args.vocab_cap, l2=args.l2
        )

        def predict_fn(ex):
            proba = predictor.predict_proba(ex)
            return int(np.argmax(proba)), proba

    summary = []
    for partition, examples in (("dev", split.dev), ("test", split.test)):
        if not examples:
            continue
        gold, preds = _emit_predictions(
            out_dir, f"predictions_{partition}.csv", examples, predict_fn
        )
        summary.append(f"{partition} macro-F1 {evaluate.macro_f1_score(gold, preds):.4f}")
    print(f"baseline[{args.model}]: {'; '.join(summary)} -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    split = read_split(args.split_dir)
    preds = read_predictions(args.predictions)
    out_dir = _ensure_out(args.out)
    reports = evaluate.subset_eval(split, preds, partition=args.partition)
    rows = []
    for name in ("all", "zero_shot", "few_shot"):
        rows.extend(_report_rows(name, reports[name]))
    _write_csv(
        os.path.join(out_dir, "report.csv"),
        ("subset", "macro_f1", "f1_con", "f1_pro", "f1_neutral", "n"),
        rows,
    )
    examples = split.test if args.partition == "test" else split.dev
    tags = evaluate.tag_phenomena(examples)
    phenom = evaluate.phenomenon_eval(examples, tags, preds)
    _write_csv(
        os.path.join(out_dir, "phenomena.csv"),
        ("phenomenon", "n_with", "f1_with", "n_without", "f1_without"),
        [
            (
                name,
                rep.n_with,
                "" if rep.with_tag is None else repr(rep.with_tag.macro_f1),
                rep.n_without,
                "" if rep.without_tag is None else repr(rep.without_tag.macro_f1),
            )
            for name, rep in phenom.items()
        ],
    )
    if args.per_cluster:
        if not (args.store and args.cluster_model and args.tfidf):
            raise UsageError("--store, --cluster-model and --tfidf are required for --per-cluster")
        store = embed.read_store(args.store)
        cluster_model = gtr.load_cluster_model(args.cluster_model)
        tfidf = load_tfidf(args.tfidf)
        by_cluster: dict[int, tuple[list[int], list[int]]] = {}
        for ex in examples:
            tensors = model.resolve_tensors(ex, store, cluster_model, tfidf)
            gold_list, pred_list = by_cluster.setdefault(tensors.cluster, ([], []))
            gold_list.append(int(ex.label))
            pred_list.append(preds[ex.example_id])
        _write_csv(
            os.path.join(out_dir, "per_cluster.csv"),
            ("cluster", "n", "macro_f1"),
            [
                (c, len(gold), repr(evaluate.macro_f1_score(gold, pred)))
                for c, (gold, pred) in sorted(by_cluster.items())
            ],
        )
    overall = reports["all"].macro_f1
    print(f"eval[{args.partition}]: macro-F1 {overall:.4f} over {reports['all'].n} examples -> {out_dir}")
    return 0


def cmd_analyze(args) -> int:
    if args.what == "lexsim":
        return _analyze_lexsim(args)
    if args.what == "sentiment":
        return _analyze_sentiment(args)
    if args.what == "swap":
        return _analyze_swap(args)
    return _analyze_cluster_compare(args)


def _analyze_lexsim(args) -> int:
    split = read_split(args.split_dir)
    wv = embed.load_word_vectors(args.word_vectors)
    train_topics = sorted({ex.topic_key for ex in split.train})
    test_examples = split.test if args.partition == "test" else split.dev
    subset = (
        split.zero_shot_test if args.partition == "test" else split.zero_shot_dev
    )
    zero_topics = sorted({test_examples[i].topic_key for i in subset})
    results = evaluate.lexsim_topics(
        [t.split(" ") for t in zero_topics],
        [t.split(" ") for t in train_topics],
        wv,
        theta=args.theta,
    )
    _write_csv(
        args.out_file,
        ("topic", "flagged", "covered", "best_similarity"),
        [
            (t, int(r.flagged), int(r.covered), "" if r.best_similarity != r.best_similarity else repr(r.best_similarity))
            for t, r in zip(zero_topics, results)
        ],
    )
    flagged = sum(r.flagged for r in results)
    pct = 100.0 * flagged / len(results) if results else 0.0
    print(
        f"analyze[lexsim]: {flagged}/{len(results)} zero-shot topics ({pct:.0f}%) "
        f"lexically similar at theta={args.theta} -> {args.out_file}"
    )
    return 0


def _analyze_sentiment(args) -> int:
    dataset = read_dataset(args.dataset)
    lexicon = evaluate.load_sentiment_lexicon(args.lexicon, args.synonyms)
    from .corpus import tokenize_document

    counts: dict[tuple[int, str], int] = {}
    rows = []
    for ex in dataset:
        majority = evaluate.sentiment_majority(tokenize_document(ex.document), lexicon)
        rows.append((ex.example_id, int(ex.label), majority.value))
        counts[(int(ex.label), majority.value)] = counts.get((int(ex.label), majority.value), 0) + 1
    _write_csv(args.out_file, ("example_id", "label", "majority"), rows)
    pro_plus = counts.get((int(StanceLabel.PRO), "M+"), 0)
    pro_total = sum(v for (lab, _), v in counts.items() if lab == int(StanceLabel.PRO))
    con_minus = counts.get((int(StanceLabel.CON), "M-"), 0)
    con_total = sum(v for (lab, _), v in counts.items() if lab == int(StanceLabel.CON))
    pct_pro = 100.0 * pro_plus / pro_total if pro_total else 0.0
    pct_con = 100.0 * con_minus / con_total if con_total else 0.0
    print(
        f"analyze[sentiment]: pro with M+ {pct_pro:.0f}%, con with M- {pct_con:.0f}% -> {args.out_file}"
    )
    return 0


def _analyze_swap(args) -> int:
    dataset = read_dataset(args.dataset)
    lexicon = evaluate.load_sentiment_lexicon(args.lexicon, args.synonyms)
    from .corpus import tokenize_document

    out_dir = _ensure_out(args.out)
    seed = stage_seed(args.seed, "swap")
    log_rows = []
    counts = {"+to-": [0, 0], "-to+": [0, 0]}  # [swapped, cannot]
    swapped_docs = {"+to-": [], "-to+": []}
    for i, ex in enumerate(dataset):
        if ex.label not in (StanceLabel.PRO, StanceLabel.CON):
            continue
        tokens = tokenize_document(ex.document)
        majority = evaluate.sentiment_majority(tokens, lexicon)
        if majority is evaluate.Majority.M_PLUS:
            direction, target = "+to-", evaluate.Majority.M_MINUS
        elif majority is evaluate.Majority.M_MINUS:
            direction, target = "-to+", evaluate.Majority.M_PLUS
        else:
            continue
        try:
            perturbed, log = evaluate.sentiment_swap(tokens, lexicon, target, rng_seed=seed + i)
        except StanceKitError:
            counts[direction][1] += 1
            continue
        counts[direction][0] += 1
        swapped_docs[direction].append((ex, perturbed))
        for pos, old, new in log:
            log_rows.append((ex.example_id, direction, pos, old, new))
    _write_csv(
        os.path.join(out_dir, "swap_log.csv"),
        ("example_id", "direction", "position", "old", "new"),
        log_rows,
    )
    for direction, pairs in swapped_docs.items():
        name = "swapped_pos_to_neg.jsonl" if direction == "+to-" else "swapped_neg_to_pos.jsonl"
        write_dataset(
            [
                type(ex)(
                    example_id=ex.example_id,
                    doc_id=ex.doc_id,
                    document=" ".join(tokens),
                    topic_raw=ex.topic_raw,
                    topic_tokens=ex.topic_tokens,
                    label=ex.label,
                    kind=ex.kind,
                    sarcasm=ex.sarcasm,
                )
                for ex, tokens in pairs
            ],
            os.path.join(out_dir, name),
        )
    print(
        "analyze[swap]: +to- swapped {} (cannot {}), -to+ swapped {} (cannot {}) -> {}".format(
            counts["+to-"][0], counts["+to-"][1], counts["-to+"][0], counts["-to+"][1], out_dir
        )
    )
    return 0


def _analyze_cluster_compare(args) -> int:
    stats = {int(r["cluster"]): float(r[args.statistic]) for r in _read_csv(args.stats)}
    f1_a = {int(r["cluster"]): float(r["macro_f1"]) for r in _read_csv(args.scores_a)}
    f1_b = {int(r["cluster"]): float(r["macro_f1"]) for r in _read_csv(args.scores_b)}
    shared = sorted(set(stats) & set(f1_a) & set(f1_b))
    stats = {c: stats[c] for c in shared}
    if args.bin_edges:
        edges = [float(v) for v in args.bin_edges.split(",")]
    else:
        values = sorted(stats.values())
        edges = sorted({values[int(i * (len(values) - 1) / 9)] for i in range(10)})
    rows = evaluate.cluster_comparison(stats, f1_a, f1_b, edges)
    _write_csv(
        args.out_file,
        ("threshold", "pct_model_a", "pct_model_b", "n_clusters"),
        [(repr(t), repr(a), repr(b), n) for t, a, b, n in rows],
    )
    print(f"analyze[cluster-compare]: {len(rows)} thresholds over {len(stats)} clusters -> {args.out_file}")
    return 0


def _parse_space(spec: str) -> dict:
    space: dict[str, object] = {}
    for part in spec.split(","):
        if "=" not in part:
            raise UsageError(f"bad space dimension {part!r}; use name=lo:hi or name=a|b|c")
        name, body = part.split("=", 1)
        name = name.strip()
        if "|" in body:
            choices = []
            for v in body.split("|"):
                try:
                    choices.append(int(v))
                except ValueError:
                    try:
                        choices.append(float(v))
                    except ValueError:
                        choices.append(v)
            space[name] = choices
        elif ":" in body:
            lo, hi = body.split(":", 1)
            space[name] = (float(lo), float(hi))
        else:
            raise UsageError(f"bad space dimension {part!r}")
    return space


def cmd_hpsearch(args) -> int:
    split = read_split(args.split_dir)
    store = embed.read_store(args.store)
    cluster_model = gtr.load_cluster_model(args.cluster_model)
    tfidf = load_tfidf(args.tfidf)
    space = _parse_space(args.space)
    out_dir = _ensure_out(args.out)
    base_seed = stage_seed(args.seed, "hpsearch")

    def objective(config: dict) -> float:
        train_config = model.TrainConfig(
            learning_rate=float(config.get("lr", args.lr)),
            epochs=args.epochs,
            patience=args.patience,
            batch_size=int(config.get("batch_size", args.batch_size)),
            hidden=int(config.get("hidden", args.hidden)),
            seed=base_seed,
        )
        _, history = model.train(split, store, cluster_model, tfidf, train_config)
        return max((h[2] for h in history if h[2] == h[2]), default=0.0)

    best, table = hpsearch.hp_search(space, trials=args.trials, seed=base_seed, objective=objective)
    names = sorted(space)
    _write_csv(
        os.path.join(out_dir, "trials.csv"),
        ("trial", *names, "zero_shot_dev_f1"),
        [
            (i, *(repr(cfg[n]) if isinstance(cfg[n], float) else cfg[n] for n in names), repr(score))
            for i, (cfg, score) in enumerate(table)
        ],
    )
    curve = hpsearch.expected_validation_performance([score for _, score in table])
    _write_csv(
        os.path.join(out_dir, "evp.csv"),
        ("n_trials", "expected_best_f1"),
        [(i + 1, repr(v)) for i, v in enumerate(curve)],
    )
    with open(os.path.join(out_dir, "best.json"), "w", encoding="utf-8") as fh:
        json.dump({k: best[k] for k in sorted(best)}, fh, sort_keys=True)
    best_score = max(score for _, score in table)
    print(f"hpsearch: {len(table)} trials, best zero-shot dev F1 {best_score:.4f} -> {out_dir}")
    return 0


def cmd_report(args) -> int:
    out_dir = args.out
    lines = []
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name.endswith("report.csv"):
            for row in _read_csv(path):
                if row.get("macro_f1"):
                    lines.append((name, row["subset"], row["macro_f1"]))
        elif name == "history.csv":
            rows = _read_csv(path)
            if rows:
                best = max(float(r["dev_macro_f1"]) for r in rows if r["dev_macro_f1"])
                lines.append((name, "best_dev_f1", repr(best)))
    _write_csv(os.path.join(out_dir, "summary.csv"), ("source", "metric", "value"), lines)
    print(f"report: {len(lines)} metrics -> {os.path.join(out_dir, 'summary.csv')}")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="stancekit", description=__doc__)
    parser.add_argument("--config", help="key=value config file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("ingest", cmd_ingest, help="aggregate annotations into a dataset")
    p.add_argument("--annotations", required=True)
    p.add_argument("--documents", required=True)
    p.add_argument("--out-file", required=True)
    p.add_argument("--min-agreement", type=float, default=0.5)
    p.add_argument("--invert-scale", action="store_true")

    p = add("topics", cmd_topics, help="extract candidate topics from parse trees")
    p.add_argument("--parses", required=True)
    p.add_argument("--out-file", required=True)
    p.add_argument("--categories")

    p = add("neutrals", cmd_neutrals, help="synthesize neutral examples")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-file", required=True)
    p.add_argument("--p", type=float, default=0.5)

    p = add("split", cmd_split, help="partition a dataset by document")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="0.70,0.15,0.15")

    p = add("embed-stub", cmd_embed_stub, help="build a deterministic stub embedding store")
    p.add_argument("--dataset", action="append", required=True)
    p.add_argument("--out-file", required=True)
    p.add_argument("--dim", type=int, default=16)

    p = add("cluster", cmd_cluster, help="fit tf-idf + clustering over training pairs")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--k-range", default="50,300")

    p = add("train", cmd_train, help="train the attention head or a neural baseline")
    p.add_argument("--model", required=True, choices=("tga", "cffnn", "pooled-joint", "pooled-sep"))
    p.add_argument("--split-dir", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--cluster-model")
    p.add_argument("--tfidf")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--hidden", type=int, default=32)

    p = add("baseline", cmd_baseline, help="run a non-neural baseline")
    p.add_argument("--model", required=True, choices=("cmaj", "bowv"))
    p.add_argument("--split-dir", required=True)
    p.add_argument("--store")
    p.add_argument("--cluster-model")
    p.add_argument("--tfidf")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-cap", type=int, default=10000)
    p.add_argument("--l2", type=float, default=1e-3)

    p = add("eval", cmd_eval, help="score predictions on a partition")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--partition", choices=("dev", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--per-cluster", action="store_true")
    p.add_argument("--store")
    p.add_argument("--cluster-model")
    p.add_argument("--tfidf")

    p = add("analyze", cmd_analyze, help="lexsim, sentiment, swap, or cluster-compare")
    p.add_argument("what", choices=("lexsim", "sentiment", "swap", "cluster-compare"))
    p.add_argument("--split-dir")
    p.add_argument("--partition", choices=("dev", "test"), default="test")
    p.add_argument("--word-vectors")
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--dataset")
    p.add_argument("--lexicon")
    p.add_argument("--synonyms")
    p.add_argument("--out")
    p.add_argument("--out-file")
    p.add_argument("--stats")
    p.add_argument("--scores-a")
    p.add_argument("--scores-b")
    p.add_argument("--statistic", choices=("size", "unique_topics"), default="size")
    p.add_argument("--bin-edges")

    p = add("hpsearch", cmd_hpsearch, help="uniform hyperparameter sampling")
    p.add_argument("--split-dir", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--cluster-model", required=True)
    p.add_argument("--tfidf", required=True)
    p.add_argument("--space", required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--hidden", type=int, default=32)

    p = add("report", cmd_report, help="summarize artifacts in an output directory")
    p.add_argument("--out", required=True)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        full_argv = list(argv) if argv is not None else sys.argv[1:]
        args = parser.parse_args(_inject_config(parser, full_argv))
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (StanceKitError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
