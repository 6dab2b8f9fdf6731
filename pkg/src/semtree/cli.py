"""Command-line surface: train, eval, parse, gen, grammar.

Exit codes: 0 success, 1 runtime failure (one-line ``error: ...`` on
stderr), 2 usage error.  SCG_THREADS caps worker parallelism for parse
and eval; output order is always input order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import chart, data, metrics, training
from .grammar import get_grammar, validate, serialize_grammar
from .lexicon import (annotate, builtin_functional, load_lexicon_file,
                      load_stopwords, USER_SENTIMENT)
from .scorer import (build_vocab, grammar_of, init_params, load_model,
                     save_model, score_sentence)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as e:  # uniform one-line failure surface
        print(f"error: {e}", file=sys.stderr)
        return 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="semtree",
        description="Sentiment classification over latent semantic trees")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, help="training TSV (label<TAB>text)")
    p.add_argument("--dev", help="development TSV for per-epoch accuracy")
    p.add_argument("--trees", help="bracketed gold trees aligned with --data")
    p.add_argument("--grammar", default="scg",
                   help="scg, glue, or a grammar file path")
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--report", help="per-epoch JSONL report path "
                                    "(default: <out>.report.jsonl)")
    p.add_argument("--w-cls", type=float, default=1.0)
    p.add_argument("--w-pos", type=float, default=0.5)
    p.add_argument("--w-str", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--lr-floor", type=float, default=0.0)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=chart.MAX_SENTENCE_LEN)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="write <out>.epochN every N epochs (0 = off)")
    _lexicon_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a labeled TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--trees", help="bracketed gold trees for tree F1")
    p.add_argument("--max-len", type=int, default=chart.MAX_SENTENCE_LEN)
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("parse", help="classify sentences and emit trees")
    p.add_argument("--model", required=True)
    p.add_argument("--input", help="sentence file, one per line (default stdin)")
    p.add_argument("--format", choices=("bracketed", "json", "ascii"),
                   default="bracketed")
    p.add_argument("--max-len", type=int, default=chart.MAX_SENTENCE_LEN)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("gen", help="sample a synthetic corpus")
    p.add_argument("--grammar", default="scg")
    p.add_argument("--lexicon", required=True,
                   help="planted TSV lexicon covering every preterminal")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--out", required=True,
                   help="corpus TSV path; gold trees go to <out>.trees.json")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("grammar", help="inspect a grammar")
    p.add_argument("--grammar", default="scg")
    p.add_argument("--rules", action="store_true", help="print the rule table")
    p.set_defaults(func=cmd_grammar)
    return parser


def _lexicon_flags(p):
    p.add_argument("--functional-lexicon",
                   help="TSV overriding the builtin functional lexicon")
    p.add_argument("--sentiment-lexicon", help="TSV of word<TAB>P/N/O entries")
    p.add_argument("--stopword-lexicon",
                   help="plain word list; entries annotate as O")


def _merged_lexicon(args):
    lex = (load_lexicon_file(args.functional_lexicon, USER_SENTIMENT)
           if args.functional_lexicon else builtin_functional())
    if args.sentiment_lexicon:
        lex = lex.merged_with(load_lexicon_file(args.sentiment_lexicon))
    if args.stopword_lexicon:
        lex = lex.merged_with(load_stopwords(args.stopword_lexicon))
    return lex


def _load_skeletons(path, examples):
    trees = data.read_bracketed(path)
    if len(trees) != len(examples):
        raise ValueError(
            f"{path} has {len(trees)} trees for {len(examples)} examples")
    skeletons = []
    for idx, (tree, ex) in enumerate(zip(trees, examples)):
        sk = data.to_left_branching_cnf(tree)
        if sk.n_tokens != len(ex.tokens):
            raise ValueError(
                f"tree/dataset mismatch at index {idx}: tree has "
                f"{sk.n_tokens} leaves, sentence has {len(ex.tokens)} tokens")
        skeletons.append(sk)
    return skeletons


def cmd_train(args) -> int:
    examples = data.load_dataset(args.data)
    g = get_grammar(args.grammar)
    lex = _merged_lexicon(args)
    for ex in examples:
        ex.tags = annotate(lex, ex.tokens)
    if args.trees:
        for ex, sk in zip(examples, _load_skeletons(args.trees, examples)):
            ex.skeleton = sk
    dev = None
    if args.dev:
        dev = data.load_dataset(args.dev)
    config = training.TrainConfig(
        w_cls=args.w_cls, w_pos=args.w_pos, w_str=args.w_str,
        lr=args.lr, lr_floor=args.lr_floor, momentum=args.momentum,
        epochs=args.epochs, batch_size=args.batch, seed=args.seed,
        max_len=args.max_len, grammar=args.grammar)
    vocab = build_vocab([ex.tokens for ex in examples])
    params = init_params(g, vocab, dim=args.embed_dim, seed=args.seed)
    params, report = training.train(
        g, params, examples, config, dev=dev,
        checkpoint_every=args.checkpoint_every, checkpoint_path=args.out)
    save_model(params, args.out)
    report.write(args.report or f"{args.out}.report.jsonl")
    return 0


def cmd_eval(args) -> int:
    params = load_model(args.model)
    g = grammar_of(params)
    examples = data.load_dataset(args.data)
    skeletons = _load_skeletons(args.trees, examples) if args.trees else None
    report = metrics.evaluate(g, params, examples, gold_skeletons=skeletons,
                              max_len=args.max_len)
    print(report.to_json() if args.json else report.to_text())
    return 0


def _parse_one(payload):
    params, g, tokens, fmt, max_len = payload
    if not tokens:
        return None
    try:
        tables = score_sentence(params, tokens, g)
        result = chart.classify(g, tables, max_len=max_len)
    except (chart.SentenceTooLong, chart.Underivable) as e:
        return f"error: {e}"
    root = result.predicted()
    tree = chart.cky_decode(g, tables, root)
    p_pos = result.probabilities.get("P", 0.0)
    p_neg = result.probabilities.get("N", 0.0)
    if fmt == "json":
        return json.dumps({"root": root, "p_P": p_pos, "p_N": p_neg,
                           "tree": tree.to_dict(g)}, sort_keys=True)
    if fmt == "ascii":
        head = f"{root}\tp(P)={p_pos:.6f}\tp(N)={p_neg:.6f}"
        return head + "\n" + tree.to_ascii(g)
    return f"{root}\t{p_pos:.6f}\t{p_neg:.6f}\t{tree.to_bracketed(g)}"


def cmd_parse(args) -> int:
    params = load_model(args.model)
    g = grammar_of(params)
    stream = open(args.input, encoding="utf-8") if args.input else sys.stdin
    try:
        payloads = [(params, g, data.tokenize(line), args.format, args.max_len)
                    for line in stream]
    finally:
        if args.input:
            stream.close()
    workers = int(os.environ.get("SCG_THREADS", "1") or "1")
    if workers > 1 and len(payloads) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_parse_one, payloads, chunksize=8))
    else:
        results = [_parse_one(p) for p in payloads]
    for line in results:
        if line is not None:
            print(line)
    return 0


def cmd_gen(args) -> int:
    g = get_grammar(args.grammar)
    planted = load_lexicon_file(args.lexicon)
    pairs = data.generate_synthetic(g, planted, args.n,
                                    max_depth=args.max_depth, seed=args.seed)
    data.save_dataset([ex for ex, _ in pairs], args.out)
    with open(f"{args.out}.trees.json", "w", encoding="utf-8") as f:
        json.dump([tree.to_dict(g) for _, tree in pairs], f,
                  sort_keys=True, separators=(",", ":"))
        f.write("\n")
    return 0


def cmd_grammar(args) -> int:
    g = get_grammar(args.grammar)
    print(f"grammar {g.name}: {g.n_labels} labels, {g.n_binary} binary + "
          f"{g.n_unary} preterminal-unary rules")
    roots = ", ".join(g.label_name(y) for y in g.root_ids)
    prets = ", ".join(g.label_name(p) for p in g.preterminal_ids)
    print(f"roots: {roots}")
    print(f"preterminals: {prets}")
    diags = validate(g)
    if diags:
        for d in diags:
            print(f"warning: {d}")
    else:
        print("diagnostics: clean")
    if args.rules:
        print(serialize_grammar(g), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
