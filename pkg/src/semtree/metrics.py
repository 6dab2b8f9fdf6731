"""Evaluation: root-label accuracy and unlabeled tree F1.

Tree F1 compares width >= 2 span sets (the full span included; it is
always shared, which mildly inflates the score, but the convention is
fixed so numbers are comparable across runs).  Corpus scores are
micro-averaged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import chart
from .chart import Underivable, SentenceTooLong
from .data import Skeleton
from .scorer import ScorerParams, score_sentence


def accuracy(predictions, golds) -> float:
    if len(predictions) != len(golds):
        raise ValueError(
            f"{len(predictions)} predictions vs {len(golds)} gold labels")
    if not predictions:
        raise ValueError("empty prediction list")
    return sum(p == g for p, g in zip(predictions, golds)) / len(predictions)


def unlabeled_tree_f1(predicted: Skeleton, gold: Skeleton):
    """(precision, recall, f1) over width >= 2 spans incl. the full span."""
    if predicted.n_tokens != gold.n_tokens:
        raise ValueError(
            f"skeletons cover {predicted.n_tokens} vs {gold.n_tokens} tokens")
    return _prf(len(predicted.spans & gold.spans),
                len(predicted.spans), len(gold.spans))


def corpus_tree_f1(pairs):
    """Micro-averaged (precision, recall, f1) over (predicted, gold) pairs."""
    match = n_pred = n_gold = 0
    for pred, gold in pairs:
        if pred.n_tokens != gold.n_tokens:
            raise ValueError(
                f"skeletons cover {pred.n_tokens} vs {gold.n_tokens} tokens")
        match += len(pred.spans & gold.spans)
        n_pred += len(pred.spans)
        n_gold += len(gold.spans)
    return _prf(match, n_pred, n_gold)


def _prf(match, n_pred, n_gold):
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    p = match / n_pred if n_pred else 0.0
    r = match / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass
class EvalReport:
    accuracy: float
    n_examples: int
    n_skipped: int
    tree_precision: float = None
    tree_recall: float = None
    tree_f1: float = None

    def to_json(self) -> str:
        doc = {"accuracy": self.accuracy, "n_examples": self.n_examples,
               "n_skipped": self.n_skipped}
        if self.tree_f1 is not None:
            doc.update(tree_precision=self.tree_precision,
                       tree_recall=self.tree_recall, tree_f1=self.tree_f1)
        return json.dumps(doc, sort_keys=True)

    def to_text(self) -> str:
        rows = [("examples", f"{self.n_examples}"),
                ("skipped", f"{self.n_skipped}"),
                ("accuracy", f"{self.accuracy:.4f}")]
        if self.tree_f1 is not None:
            rows += [("tree precision", f"{self.tree_precision:.4f}"),
                     ("tree recall", f"{self.tree_recall:.4f}"),
                     ("tree F1", f"{self.tree_f1:.4f}")]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def evaluate(g, params: ScorerParams, examples, gold_skeletons=None,
             max_len=chart.MAX_SENTENCE_LEN) -> EvalReport:
    """Classify every example; decode trees when gold skeletons are given.

    Underivable or over-cap sentences are skipped and counted; skeleton
    metrics cover only examples whose gold skeleton is present.
    """
    if gold_skeletons is not None and len(gold_skeletons) != len(examples):
        raise ValueError(
            f"{len(gold_skeletons)} skeletons for {len(examples)} examples")
    preds, golds, pairs = [], [], []
    skipped = 0
    for idx, ex in enumerate(examples):
        try:
            tables = score_sentence(params, ex.tokens, g)
            result = chart.classify(g, tables, max_len=max_len)
        except (Underivable, SentenceTooLong):
            skipped += 1
            continue
        pred = result.predicted()
        preds.append(pred)
        golds.append(ex.root)
        gold_sk = gold_skeletons[idx] if gold_skeletons else ex.skeleton
        if gold_skeletons is not None and gold_sk is not None and len(ex.tokens) >= 2:
            tree = chart.cky_decode(g, tables, pred)
            pairs.append((Skeleton(tables.T, tree.spans()), gold_sk))
    report = EvalReport(
        accuracy=accuracy(preds, golds) if preds else 0.0,
        n_examples=len(preds), n_skipped=skipped)
    if pairs:
        report.tree_precision, report.tree_recall, report.tree_f1 = \
            corpus_tree_f1(pairs)
    return report
