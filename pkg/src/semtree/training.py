"""Training objectives and the optimizer loop.

Three objectives share one parameter set:

  * classification: negative log marginal probability of the gold root,
    with exact gradients from conditioned-minus-unconditioned expected
    anchored-rule counts;
  * preterminal: weakly-supervised cross-entropy on lexicon-annotated
    positions, a softmax over the preterminals of the terminal head only;
  * structure: negative log probability of a gold bracketing under the
    span-score CRF over all full binary bracketings.

The combined loss is their weighted sum; batches normalize the
classification/structure parts per contributing example and the
preterminal part per annotated token.  Optimization is minibatch SGD with
momentum and a cosine-annealed learning rate, bit-reproducible for a
fixed seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import chart, metrics
from .chart import InsideChart, Underivable, SentenceTooLong
from .data import Example, Skeleton
from .grammar import Grammar
from .lexicon import Annotation
from .scorer import (GradTables, ParamGrads, ScorerParams, ScoreTables,
                     accumulate_gradients, score_sentence)

log = logging.getLogger(__name__)

NEG_INF = float("-inf")


@dataclass
class TrainConfig:
    w_cls: float = 1.0
    w_pos: float = 0.5
    w_str: float = 0.1
    lr: float = 0.2
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 32
    lr_floor: float = 0.0
    seed: int = 0
    max_len: int = 60
    grammar: str = "scg"

    def __post_init__(self):
        if min(self.w_cls, self.w_pos, self.w_str) < 0:
            raise ValueError("loss weights must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.lr_floor < 0 or self.lr_floor > self.lr:
            raise ValueError("lr floor must be in [0, lr]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    loss_cls: float
    loss_pos: float
    loss_str: float
    dev_accuracy: float = None
    dev_tree_f1: float = None
    lr: float = None


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    n_skipped: int = 0

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(asdict(r), sort_keys=True)
                         for r in self.epochs) + ("\n" if self.epochs else "")

    def write(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl())


def cosine_lr(step: int, total_steps: int, lr0: float, floor: float = 0.0) -> float:
    """floor + (lr0 - floor) * (1 + cos(pi * step / total)) / 2."""
    if total_steps <= 0:
        return lr0
    return floor + 0.5 * (lr0 - floor) * (1 + math.cos(math.pi * step / total_steps))


# ---------------------------------------------------------------------------
# Individual losses
# ---------------------------------------------------------------------------


def classification_loss(g: Grammar, tables: ScoreTables, gold_root,
                        inchart: InsideChart = None):
    """-log p(gold root | sentence) and its score-table gradient.

    The gradient is (expected counts over all roots) minus (expected
    counts conditioned on the gold root).  Returns None when the sentence
    or the gold root is underivable; callers skip such sentences.
    """
    if inchart is None:
        inchart = chart.inside(g, tables, max_len=tables.T)
    gold = g._resolve(gold_root)
    if gold not in g.root_ids:
        raise ValueError(f"{g.label_name(gold)} is not a root label")
    log_z = inchart.log_z
    log_gold = float(inchart.alpha[0, tables.T, gold])
    if log_z == NEG_INF or log_gold == NEG_INF:
        return None
    out_all = chart.outside(g, tables, inchart)
    out_gold = chart.outside(g, tables, inchart, root=gold)
    grad = chart.rule_marginals(g, tables, inchart, out_all)
    grad.add_scaled(chart.rule_marginals(g, tables, inchart, out_gold), -1.0)
    return log_z - log_gold, grad


def preterminal_loss(g: Grammar, tables: ScoreTables, tags: Annotation):
    """Summed -log q(tag | word) over annotated positions.

    q is a softmax of the terminal scores over the grammar's preterminals;
    only terminal-head entries receive gradient.  Returns
    (loss_sum, n_annotated, grad); batch code divides by the batch's total
    annotated-token count.
    """
    grad = GradTables.zeros(g, tables.T)
    if not tags:
        return 0.0, 0, grad
    pret = list(g.preterminal_ids)
    total = 0.0
    count = 0
    for i, label_name in sorted(tags.labels.items()):
        if not 0 <= i < tables.T:
            raise ValueError(f"annotated position {i} out of bounds")
        scores = tables.terminal[i, pret]
        m = scores.max()
        q = np.exp(scores - m)
        q /= q.sum()
        target = pret.index(g.label(label_name).id)
        total += -(scores[target] - m - math.log(np.exp(scores - m).sum()))
        onehot = np.zeros(len(pret))
        onehot[target] = 1.0
        grad.terminal[i, pret] += q - onehot
        count += 1
    return total, count, grad


def skeleton_loss(tables: ScoreTables, skeleton: Skeleton):
    """-log r(gold bracketing | sentence) under the span-score CRF.

    Gradient touches only span entries: marginal minus indicator.  The
    full-span bracket contributes zero (marginal and indicator are both
    one), as does any width-1 span.
    """
    if skeleton.n_tokens != tables.T:
        raise ValueError(
            f"skeleton has {skeleton.n_tokens} tokens, sentence has {tables.T}")
    sk = chart.skeleton_inside(tables, max_len=tables.T)
    loss = -sk.log_r(skeleton.spans)
    grad = GradTables.zeros(tables.grammar, tables.T)
    grad.span += sk.span_marginals()
    for (i, j) in skeleton.spans:
        grad.span[i, j] -= 1.0
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer loop
# ---------------------------------------------------------------------------


def train(g: Grammar, params: ScorerParams, examples, config: TrainConfig,
          dev=None, checkpoint_every: int = 0, checkpoint_path=None):
    """Minibatch SGD with momentum and cosine annealing.

    ``examples`` are data.Example records; weak tags and skeletons are
    used when present and the matching loss weight is positive.  Returns
    (params, TrainReport); params are updated in place.
    """
    if not examples:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    velocity = ParamGrads.zeros_like(params)
    n = len(examples)
    batches_per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * batches_per_epoch
    report = TrainReport()
    step = 0
    ever_contributed = False

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = {"cls": 0.0, "pos": 0.0, "str": 0.0}
        counts = {"cls": 0, "pos": 0, "str": 0}
        lr = config.lr
        for b in range(batches_per_epoch):
            batch = [examples[i] for i in order[b * config.batch_size:
                                                (b + 1) * config.batch_size]]
            pieces = []
            for ex in batch:
                piece = _example_losses(g, params, ex, config)
                if piece is None:
                    report.n_skipped += 1
                    continue
                pieces.append(piece)
            n_cls = sum(1 for p in pieces if p["cls"] is not None)
            n_str = sum(1 for p in pieces if p["str"] is not None)
            n_pos = sum(p["pos"][1] for p in pieces if p["pos"] is not None)

            grads = ParamGrads.zeros_like(params)
            for p in pieces:
                upstream = GradTables.zeros(g, len(p["tokens"]))
                if p["cls"] is not None:
                    loss, gtab = p["cls"]
                    upstream.add_scaled(gtab, config.w_cls / n_cls)
                    sums["cls"] += loss
                    counts["cls"] += 1
                    ever_contributed = True
                if p["pos"] is not None and n_pos > 0:
                    loss, cnt, gtab = p["pos"]
                    upstream.add_scaled(gtab, config.w_pos / n_pos)
                    sums["pos"] += loss
                    counts["pos"] += cnt
                if p["str"] is not None:
                    loss, gtab = p["str"]
                    upstream.add_scaled(gtab, config.w_str / n_str)
                    sums["str"] += loss
                    counts["str"] += 1
                accumulate_gradients(params, p["tokens"], upstream, grads)

            lr = cosine_lr(step, total_steps, config.lr, config.lr_floor)
            step += 1
            for name, varr in velocity.arrays().items():
                varr *= config.momentum
                varr -= lr * grads.arrays()[name]
                params.arrays()[name] += varr

        if not ever_contributed:
            raise ValueError("no trainable sentence in the dataset "
                             "(all underivable or over the length cap)")

        record = EpochRecord(
            epoch=epoch,
            loss_cls=sums["cls"] / max(counts["cls"], 1),
            loss_pos=sums["pos"] / max(counts["pos"], 1),
            loss_str=sums["str"] / max(counts["str"], 1),
            lr=lr,
        )
        if dev:
            record.dev_accuracy, record.dev_tree_f1 = _dev_metrics(
                g, params, dev, config.max_len)
        report.epochs.append(record)
        log.info("epoch %d: cls %.4f pos %.4f str %.4f lr %.5f dev %s",
                 epoch, record.loss_cls, record.loss_pos, record.loss_str,
                 record.lr, record.dev_accuracy)
        if checkpoint_every and checkpoint_path and epoch % checkpoint_every == 0:
            from .scorer import save_model
            save_model(params, f"{checkpoint_path}.epoch{epoch}")
    return params, report


def _example_losses(g, params, ex: Example, config: TrainConfig):
    if len(ex.tokens) > config.max_len:
        log.warning("skipping %d-token sentence (cap %d)",
                    len(ex.tokens), config.max_len)
        return None
    tables = score_sentence(params, ex.tokens, g)
    piece = {"tokens": ex.tokens, "cls": None, "pos": None, "str": None}
    if config.w_cls > 0:
        res = classification_loss(g, tables, ex.root)
        if res is None:
            log.warning("skipping underivable sentence: %s",
                        " ".join(ex.tokens))
            return None
        piece["cls"] = res
    if config.w_pos > 0 and ex.tags:
        piece["pos"] = preterminal_loss(g, tables, ex.tags)
    if config.w_str > 0 and ex.skeleton is not None and len(ex.tokens) >= 2:
        piece["str"] = skeleton_loss(tables, ex.skeleton)
    return piece


def _dev_metrics(g, params, dev, max_len):
    preds, golds = [], []
    f1_pairs = []
    for ex in dev:
        if len(ex.tokens) > max_len:
            continue
        tables = score_sentence(params, ex.tokens, g)
        try:
            result = chart.classify(g, tables)
        except Underivable:
            continue
        pred = result.predicted()
        preds.append(pred)
        golds.append(ex.root)
        if ex.skeleton is not None and len(ex.tokens) >= 2:
            tree = chart.cky_decode(g, tables, pred)
            f1_pairs.append((Skeleton(tables.T, tree.spans()), ex.skeleton))
    acc = metrics.accuracy(preds, golds) if preds else None
    f1 = metrics.corpus_tree_f1(f1_pairs)[2] if f1_pairs else None
    return acc, f1


# ---------------------------------------------------------------------------
# Document aggregation
# ---------------------------------------------------------------------------


def aggregate_document(params: ScorerParams, sentence_logits, sentence_reps):
    """Combine per-sentence logits with attention over sentence vectors.

    weights = softmax(rep . attention_vector); document logits are the
    weighted sum.  Returns (logits, weights).
    """
    logits = np.asarray(sentence_logits, dtype=np.float64)
    reps = np.asarray(sentence_reps, dtype=np.float64)
    if logits.ndim != 2 or reps.ndim != 2 or logits.shape[0] != reps.shape[0]:
        raise ValueError("need one logit row and one representation per sentence")
    if logits.shape[0] == 0:
        raise ValueError("empty document")
    scores = reps @ params.w_attn
    scores -= scores.max()
    weights = np.exp(scores)
    weights /= weights.sum()
    return weights @ logits, weights


def document_logits(g: Grammar, params: ScorerParams, sentences,
                    max_len=chart.MAX_SENTENCE_LEN):
    """Per-sentence root logits and full-span phrase vectors for a document."""
    from .scorer import phrase_view
    logits, reps = [], []
    for tokens in sentences:
        tables = score_sentence(params, tokens, g)
        inchart = chart.inside(g, tables, max_len=max_len)
        T = len(tokens)
        row = [float(inchart.alpha[0, T, y] - tables.span[0, T])
               for y in g.root_ids]
        logits.append(row)
        reps.append(phrase_view(params, tokens).contextual_for(0, T))
    return np.asarray(logits), np.asarray(reps)
