"""Log-semiring chart algorithms over semantic trees.

inside() marginalizes over every derivation; classify() turns the root
inside values into a distribution over the root labels and exposes the
recognition/composition split of each logit; outside() and
rule_marginals() deliver expected anchored-rule counts (the gradient of
log Z); cky_decode() swaps sum for max and backtracks the single best
tree; skeleton charts score unlabeled bracketings for the structure
objective.  enumerate_trees() is the exhaustive oracle for small inputs.

All computation is a pure function of (grammar, score tables); sentences
longer than the length cap are rejected, callers must pre-split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grammar import Grammar, BINARY, UNARY
from .scorer import ScoreTables, GradTables

NEG_INF = float("-inf")

# Cubic cost: refuse pathological inputs instead of stalling.
MAX_SENTENCE_LEN = 60


class Underivable(ValueError):
    """The grammar licenses no complete tree for the requested root(s)."""


class SentenceTooLong(ValueError):
    pass


def _compiled(g: Grammar):
    """int32/float-ready rule arrays, cached on the grammar instance."""
    arrays = getattr(g, "_compiled_arrays", None)
    if arrays is None:
        arrays = (
            np.asarray([r.left for r in g.binary_rules], dtype=np.int32),
            np.asarray([r.right for r in g.binary_rules], dtype=np.int32),
            np.asarray([r.parent for r in g.binary_rules], dtype=np.int32),
            np.asarray([r.left for r in g.unary_rules], dtype=np.int32),
            np.asarray([r.parent for r in g.unary_rules], dtype=np.int32),
        )
        g._compiled_arrays = arrays
    return arrays


def _check_len(T, max_len):
    if T > max_len:
        raise SentenceTooLong(
            f"sentence has {T} tokens, cap is {max_len}; split it first")


@dataclass
class InsideChart:
    grammar: Grammar
    alpha: np.ndarray  # (T+1, T+1, L) log inside terms

    @property
    def T(self):
        return self.alpha.shape[0] - 1

    def root_values(self):
        return {self.grammar.label_name(y): float(self.alpha[0, self.T, y])
                for y in self.grammar.root_ids}

    @property
    def log_z(self) -> float:
        vals = [self.alpha[0, self.T, y] for y in self.grammar.root_ids]
        m = max(vals)
        if m == NEG_INF:
            return NEG_INF
        return m + math.log(sum(math.exp(v - m) for v in vals))


@dataclass
class OutsideChart:
    grammar: Grammar
    beta: np.ndarray
    root: int | None  # label id when conditioned on a single gold root
    log_z: float


def inside(g: Grammar, tables: ScoreTables, max_len=MAX_SENTENCE_LEN) -> InsideChart:
    """Bottom-up log inside terms for every anchored node.

    Width-1 cells sum (terminal -> preterminal -> label) chains; wider
    cells sum over binary rules and split points.  O(|rules| * T^3).
    """
    _check_len(tables.T, max_len)
    bl, br, bp, ul, up = _compiled(g)
    alpha = _kernels.inside(tables.T, g.n_labels, bl, br, bp, tables.binary,
                            ul, up, tables.unary, tables.terminal,
                            tables.label, tables.span)
    return InsideChart(g, alpha)


def outside(g: Grammar, tables: ScoreTables, inchart: InsideChart,
            root=None) -> OutsideChart:
    """Top-down log outside terms.

    With root=None all root labels are seeded; passing a label name or id
    conditions every downstream marginal on that root.
    """
    bl, br, bp, _, _ = _compiled(g)
    T = tables.T
    if root is None:
        root_ids = np.asarray(g.root_ids, dtype=np.int64)
        log_z = inchart.log_z
        root_id = None
    else:
        root_id = g._resolve(root)
        root_ids = np.asarray([root_id], dtype=np.int64)
        log_z = float(inchart.alpha[0, T, root_id])
    if log_z == NEG_INF:
        raise Underivable("sentence underivable under grammar for the "
                          "requested root(s)")
    beta = _kernels.outside(T, g.n_labels, bl, br, bp, tables.binary,
                            tables.terminal, tables.label, tables.span,
                            inchart.alpha, root_ids)
    return OutsideChart(g, beta, root_id, log_z)


@dataclass
class ClassifyResult:
    """Distribution over root labels plus the logit decomposition.

    logit(A) = s_label(A, full span) + s_scm(A); the composition part is
    recomputed from sub-span inside values and must agree with the chart.
    """

    probabilities: dict  # root name -> p
    s_label: dict
    s_scm: dict
    log_inside: dict

    def predicted(self):
        return max(self.probabilities, key=self.probabilities.get)


def classify(g: Grammar, tables: ScoreTables, inchart: InsideChart = None,
             max_len=MAX_SENTENCE_LEN) -> ClassifyResult:
    if inchart is None:
        inchart = inside(g, tables, max_len=max_len)
    T = tables.T
    roots = list(g.root_ids)
    vals = np.array([inchart.alpha[0, T, y] for y in roots])
    if np.all(vals == NEG_INF):
        raise Underivable("sentence underivable under grammar")
    m = vals.max()
    p = np.exp(vals - m)
    p /= p.sum()

    result = ClassifyResult({}, {}, {}, {})
    for y, prob, val in zip(roots, p, vals):
        name = g.label_name(y)
        s_lab = float(tables.label[0, T, y])
        s_scm = float(val - tables.span[0, T] - s_lab)
        recomputed = _scm_direct(g, tables, inchart.alpha, y)
        if val != NEG_INF and abs(recomputed - s_scm) > 1e-8 * max(1.0, abs(s_scm)):
            raise RuntimeError(
                f"inconsistent composition score for root {name}: "
                f"{s_scm} vs {recomputed}")
        result.probabilities[name] = float(prob)
        result.s_label[name] = s_lab
        result.s_scm[name] = s_scm
        result.log_inside[name] = float(val)
    return result


def _scm_direct(g: Grammar, tables: ScoreTables, alpha, a):
    """Composition logit from sub-span inside values (unary chain at T=1)."""
    T = tables.T
    vals = []
    if T == 1:
        for r in g.unary_rules:
            if r.parent == a:
                v = tables.terminal[0, r.left] + tables.unary[r.id - g.n_binary]
                if v != NEG_INF:
                    vals.append(v)
    else:
        for r in g.binary_rules:
            if r.parent != a:
                continue
            for k in range(1, T):
                v = tables.binary[r.id] + alpha[0, k, r.left] + alpha[k, T, r.right]
                if v != NEG_INF:
                    vals.append(v)
    if not vals:
        return NEG_INF
    m = max(vals)
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def rule_marginals(g: Grammar, tables: ScoreTables, inchart: InsideChart,
                   outchart: OutsideChart) -> GradTables:
    """Expected anchored-rule counts as a GradTables.

    Every entry equals d log Z / d (corresponding score-table entry) under
    the outside chart's conditioning; rule-scalar entries aggregate over
    all anchors of the shared scalar.
    """
    bl, br, bp, ul, up = _compiled(g)
    g_bin, g_un, g_term, g_label, g_span = _kernels.marginals(
        tables.T, g.n_labels, bl, br, bp, tables.binary, ul, up,
        tables.unary, tables.terminal, tables.label, tables.span,
        inchart.alpha, outchart.beta, outchart.log_z)
    return GradTables(tables.T, g_term, g_un, g_bin, g_label, g_span)


def anchored_binary_marginals(g: Grammar, tables: ScoreTables,
                              inchart: InsideChart, outchart: OutsideChart):
    """Yield (rule, i, k, j, mu) for every anchored binary rule.

    Reference implementation for tests; training uses the aggregated
    rule_marginals().
    """
    T = tables.T
    alpha, beta = inchart.alpha, outchart.beta
    for r in g.binary_rules:
        for w in range(2, T + 1):
            for i in range(T - w + 1):
                j = i + w
                if beta[i, j, r.parent] == NEG_INF:
                    continue
                base = (tables.binary[r.id] + tables.label[i, j, r.parent]
                        + tables.span[i, j] + beta[i, j, r.parent]
                        - outchart.log_z)
                for k in range(i + 1, j):
                    v = base + alpha[i, k, r.left] + alpha[k, j, r.right]
                    yield r, i, k, j, (0.0 if v == NEG_INF else math.exp(v))


# ---------------------------------------------------------------------------
# Semantic trees and Viterbi decoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SemanticTree:
    """A derivation as its anchored-rule set.

    For T tokens: T-1 binary rules (rule id, i, k, j), T unary rules
    (rule id, i), and T preterminals (the label each word attaches to).
    """

    tokens: tuple
    root: int
    binaries: tuple      # ((rule_id, i, k, j), ...)
    unaries: tuple       # ((rule_id, i), ...)
    preterminals: tuple  # label id per position

    @property
    def T(self):
        return len(self.tokens)

    def spans(self):
        """Width >= 2 spans, including the full span (empty for T=1)."""
        return frozenset((i, j) for _, i, _, j in self.binaries)

    def score(self, tables: ScoreTables) -> float:
        g = tables.grammar
        total = 0.0
        for rid, i, k, j in self.binaries:
            total += tables.binary_total(i, k, j, g.rules[rid])
        for rid, i in self.unaries:
            total += tables.unary_total(i, g.rules[rid])
        for i, b in enumerate(self.preterminals):
            total += tables.terminal[i, b]
        return total

    # -- renderings -----------------------------------------------------

    def to_bracketed(self, g: Grammar) -> str:
        unary_at = {i: rid for rid, i in self.unaries}

        def render(i, j, expect):
            if j - i == 1:
                r = g.rules[unary_at[i]]
                word = self.tokens[i]
                if r.left == r.parent:
                    return f"({g.label_name(r.parent)} {word})"
                return (f"({g.label_name(r.parent)} "
                        f"({g.label_name(r.left)} {word}))")
            rid, _, k, _ = next(t for t in self.binaries
                                if t[1] == i and t[3] == j)
            r = g.rules[rid]
            return (f"({g.label_name(r.parent)} "
                    f"{render(i, k, r.left)} {render(k, j, r.right)})")

        return render(0, self.T, self.root)

    def to_ascii(self, g: Grammar) -> str:
        unary_at = {i: rid for rid, i in self.unaries}
        lines = []

        def walk(i, j, depth):
            pad = "  " * depth
            if j - i == 1:
                r = g.rules[unary_at[i]]
                word = self.tokens[i]
                if r.left == r.parent:
                    lines.append(f"{pad}{g.label_name(r.parent)} {word}")
                else:
                    lines.append(f"{pad}{g.label_name(r.parent)} "
                                 f"({g.label_name(r.left)} {word})")
                return
            rid, _, k, _ = next(t for t in self.binaries
                                if t[1] == i and t[3] == j)
            r = g.rules[rid]
            lines.append(f"{pad}{g.label_name(r.parent)}")
            walk(i, k, depth + 1)
            walk(k, j, depth + 1)

        walk(0, self.T, 0)
        return "\n".join(lines)

    def to_dict(self, g: Grammar) -> dict:
        name = g.label_name
        return {
            "tokens": list(self.tokens),
            "root": name(self.root),
            "binary": [
                {"left": name(g.rules[rid].left),
                 "right": name(g.rules[rid].right),
                 "parent": name(g.rules[rid].parent),
                 "i": i, "k": k, "j": j}
                for rid, i, k, j in self.binaries],
            "unary": [
                {"child": name(g.rules[rid].left),
                 "parent": name(g.rules[rid].parent), "i": i}
                for rid, i in self.unaries],
            "terminal": [
                {"word": self.tokens[i], "label": name(b), "i": i}
                for i, b in enumerate(self.preterminals)],
        }

    @classmethod
    def from_dict(cls, g: Grammar, doc: dict) -> "SemanticTree":
        binaries = tuple(
            (g.binary_rule(b["left"], b["right"], b["parent"]).id,
             b["i"], b["k"], b["j"])
            for b in doc["binary"])
        unaries = tuple(
            (g.unary_rule(u["child"], u["parent"]).id, u["i"])
            for u in doc["unary"])
        prets = tuple(g.label(t["label"]).id
                      for t in sorted(doc["terminal"], key=lambda t: t["i"]))
        return cls(tuple(doc["tokens"]), g.label(doc["root"]).id,
                   binaries, unaries, prets)


def check_tree(g: Grammar, tree: SemanticTree) -> list[str]:
    """Structural diagnostics; empty list means the tree is well formed."""
    T = tree.T
    problems = []
    if len(tree.binaries) != max(T - 1, 0):
        problems.append(f"expected {T - 1} binary rules, got {len(tree.binaries)}")
    if len(tree.unaries) != T:
        problems.append(f"expected {T} unary rules, got {len(tree.unaries)}")
    if len(tree.preterminals) != T:
        problems.append(f"expected {T} preterminals, got {len(tree.preterminals)}")
    if problems:
        return problems

    unary_at = {}
    for rid, i in tree.unaries:
        r = g.rules[rid]
        if r.kind != UNARY:
            problems.append(f"rule {rid} at position {i} is not unary")
            continue
        if i in unary_at:
            problems.append(f"two unary rules at position {i}")
        unary_at[i] = r
        if tree.preterminals[i] != r.left:
            problems.append(
                f"preterminal at {i} does not match unary child")
        if not g.labels[r.left].preterminal:
            problems.append(f"label {g.label_name(r.left)} at {i} is not "
                            f"preterminal-eligible")
    if set(unary_at) != set(range(T)):
        problems.append("unary layer does not cover every position")
        return problems

    node = {}  # (i, j) -> label of the post-unary/internal node
    for i, r in unary_at.items():
        node[(i, i + 1)] = r.parent
    by_span = {}
    for rid, i, k, j in tree.binaries:
        r = g.rules[rid]
        if r.kind != BINARY:
            problems.append(f"rule {rid} on span ({i},{j}) is not binary")
            continue
        if not (0 <= i < k < j <= T):
            problems.append(f"bad anchor ({i},{k},{j})")
            continue
        if (i, j) in by_span:
            problems.append(f"two rules build span ({i},{j})")
        by_span[(i, j)] = (r, k)
        node[(i, j)] = r.parent
    if problems:
        return problems

    def descend(i, j, expect):
        lab = node.get((i, j))
        if lab is None:
            problems.append(f"span ({i},{j}) missing from the tree")
            return
        if lab != expect:
            problems.append(
                f"span ({i},{j}) is {g.label_name(lab)}, parent rule "
                f"expects {g.label_name(expect)}")
        if j - i == 1:
            return
        r, k = by_span[(i, j)]
        descend(i, k, r.left)
        descend(k, j, r.right)

    if T >= 1:
        if tree.root not in g.root_ids:
            problems.append(
                f"root {g.label_name(tree.root)} is not root-eligible")
        descend(0, T, tree.root)
    return problems


def cky_decode(g: Grammar, tables: ScoreTables, root,
               max_len=MAX_SENTENCE_LEN) -> SemanticTree:
    """The argmax tree rooted at ``root`` (max in place of logsumexp)."""
    _check_len(tables.T, max_len)
    bl, br, bp, ul, up = _compiled(g)
    T = tables.T
    best, bp_rule, bp_split = _kernels.viterbi(
        T, g.n_labels, bl, br, bp, tables.binary, ul, up, tables.unary,
        tables.terminal, tables.label, tables.span)
    root_id = g._resolve(root)
    if best[0, T, root_id] == NEG_INF:
        raise Underivable(
            f"no derivation rooted {g.label_name(root_id)}")

    binaries, unaries, prets = [], [], {}

    def backtrack(i, j, a):
        rid = int(bp_rule[i, j, a])
        if j - i == 1:
            r = g.unary_rules[rid]
            unaries.append((r.id, i))
            prets[i] = r.left
            return
        r = g.binary_rules[rid]
        k = int(bp_split[i, j, a])
        binaries.append((r.id, i, k, j))
        backtrack(i, k, r.left)
        backtrack(k, j, r.right)

    backtrack(0, T, root_id)
    return SemanticTree(tuple(tables_tokens(tables)), root_id,
                        tuple(binaries), tuple(sorted(unaries, key=lambda u: u[1])),
                        tuple(prets[i] for i in range(T)))


def tables_tokens(tables: ScoreTables):
    toks = getattr(tables, "tokens", None)
    if toks is None:
        return [f"w{i}" for i in range(tables.T)]
    return toks


def viterbi_score(g: Grammar, tables: ScoreTables, root) -> float:
    bl, br, bp, ul, up = _compiled(g)
    best, _, _ = _kernels.viterbi(
        tables.T, g.n_labels, bl, br, bp, tables.binary, ul, up,
        tables.unary, tables.terminal, tables.label, tables.span)
    return float(best[0, tables.T, g._resolve(root)])


# ---------------------------------------------------------------------------
# Skeleton charts (structure objective)
# ---------------------------------------------------------------------------


@dataclass
class SkeletonChart:
    """Inside sums over all full binary bracketings of T leaves."""

    table: np.ndarray  # (T+1, T+1)
    span: np.ndarray

    @property
    def T(self):
        return self.table.shape[0] - 1

    @property
    def log_z(self) -> float:
        return float(self.table[0, self.T])

    def log_r(self, spans) -> float:
        """log probability of one bracketing (its width >= 2 span set)."""
        total = sum(float(self.span[i, j]) for i, j in spans)
        return total - self.log_z

    def span_marginals(self) -> np.ndarray:
        return _kernels.skeleton_marginals(self.T, self.span, self.table)


def skeleton_inside(tables: ScoreTables, max_len=MAX_SENTENCE_LEN) -> SkeletonChart:
    _check_len(tables.T, max_len)
    table = _kernels.skeleton_inside(tables.T, tables.span)
    return SkeletonChart(table, tables.span)


def enumerate_skeletons(T):
    """All full binary bracketings of T leaves as width >= 2 span sets."""
    def splits(i, j):
        if j - i == 1:
            yield frozenset()
            return
        for k in range(i + 1, j):
            for left in splits(i, k):
                for right in splits(k, j):
                    yield left | right | {(i, j)}

    yield from splits(0, T)


# ---------------------------------------------------------------------------
# Exhaustive enumeration oracle
# ---------------------------------------------------------------------------

ENUMERATION_CAP = 7


def enumerate_trees(g: Grammar, tables: ScoreTables, max_T=ENUMERATION_CAP):
    """Yield every legal (SemanticTree, score), exponential in T.

    Hard-capped: this is an oracle for tests and explanations, not a
    parser.
    """
    T = tables.T
    if T > max_T:
        raise ValueError(f"enumeration capped at {max_T} tokens, got {T}")
    tokens = tuple(tables_tokens(tables))

    def derive(i, j, a):
        if j - i == 1:
            for r in g.unary_rules:
                if r.parent != a:
                    continue
                t = tables.terminal[i, r.left]
                if t == NEG_INF:
                    continue
                sc = t + tables.unary_total(i, r)
                yield (), ((r.id, i),), ((i, r.left),), sc
            return
        for k in range(i + 1, j):
            for r in g.binary_rules:
                if r.parent != a:
                    continue
                head = tables.binary_total(i, k, j, r)
                for bl_, ul_, pl_, sl in derive(i, k, r.left):
                    for br_, ur_, pr_, sr in derive(k, j, r.right):
                        yield (bl_ + br_ + ((r.id, i, k, j),),
                               ul_ + ur_, pl_ + pr_, head + sl + sr)

    for y in g.root_ids:
        for bins, uns, prets, sc in derive(0, T, y):
            pret_by_pos = dict(prets)
            tree = SemanticTree(
                tokens, y, bins,
                tuple(sorted(uns, key=lambda u: u[1])),
                tuple(pret_by_pos[i] for i in range(T)))
            yield tree, sc
