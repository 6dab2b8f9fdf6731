"""Dataset ingestion, bracketed trees, skeleton extraction, synthetic data.

Text is assumed pre-tokenized; tokenization is lowercasing plus whitespace
splitting so tree leaves stay aligned with lexicon entries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .chart import SemanticTree
from .grammar import Grammar, UNARY
from .lexicon import Annotation, Lexicon


class DatasetFormatError(ValueError):
    pass


class TreeFormatError(ValueError):
    pass


_LABEL_ALIASES = {
    "positive": "P", "negative": "N",
    "P": "P", "N": "N",
    "1": "P", "0": "N",
}


@dataclass
class Skeleton:
    """The unlabeled shape of a full binary bracketing.

    Holds every width >= 2 span, including the full span; width-1 spans
    are implicit.  A valid skeleton of T tokens has exactly T-1 spans.
    """

    n_tokens: int
    spans: frozenset

    def __post_init__(self):
        self.spans = frozenset(tuple(s) for s in self.spans)

    def check(self) -> list[str]:
        problems = []
        for (i, j) in self.spans:
            if not (0 <= i < j <= self.n_tokens) or j - i < 2:
                problems.append(f"bad span ({i},{j})")
        if self.n_tokens >= 2:
            if (0, self.n_tokens) not in self.spans:
                problems.append("full span missing")
            if len(self.spans) != self.n_tokens - 1:
                problems.append(
                    f"expected {self.n_tokens - 1} spans, got {len(self.spans)}")
        for a in self.spans:
            for b in self.spans:
                if a[0] < b[0] < a[1] < b[1]:
                    problems.append(f"crossing spans {a} and {b}")
        return problems


@dataclass
class Example:
    """One classified sentence, with optional structure supervision."""

    tokens: list
    root: str  # "P" or "N"
    skeleton: Skeleton = None
    tags: Annotation = None


def tokenize(text: str) -> list:
    return text.lower().split()


def load_dataset(path) -> list:
    """TSV dataset: ``label<TAB>text``, labels positive/negative/P/N/1/0."""
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: expected 'label<TAB>text'")
            label, text = parts
            root = _LABEL_ALIASES.get(label.strip())
            if root is None:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: unknown label {label.strip()!r}")
            tokens = tokenize(text)
            if not tokens:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: empty sentence")
            examples.append(Example(tokens, root))
    return examples


def save_dataset(examples, path):
    names = {"P": "positive", "N": "negative"}
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(f"{names[ex.root]}\t{' '.join(ex.tokens)}\n")


# ---------------------------------------------------------------------------
# Bracketed parse trees
# ---------------------------------------------------------------------------


@dataclass
class ParseNode:
    """A node of an n-ary bracketed tree; leaves carry the word instead."""

    label: str = None
    children: tuple = ()
    word: str = None

    @property
    def is_leaf(self):
        return self.word is not None

    def leaves(self):
        if self.is_leaf:
            return [self.word]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def n_leaves(self):
        return len(self.leaves())

    def to_string(self):
        if self.is_leaf:
            return self.word
        inner = " ".join(c.to_string() for c in self.children)
        return f"({self.label} {inner})"


_SEXPR_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_bracketed(line: str) -> ParseNode:
    tokens = [(m.group(0), m.start()) for m in _SEXPR_TOKEN.finditer(line)]
    pos = 0

    def parse_node():
        nonlocal pos
        tok, at = tokens[pos]
        if tok != "(":
            raise TreeFormatError(f"expected '(' at position {at}")
        pos += 1
        if pos >= len(tokens) or tokens[pos][0] in ("(", ")"):
            raise TreeFormatError(
                f"missing node label at position {tokens[pos - 1][1]}")
        label = tokens[pos][0]
        pos += 1
        children = []
        while pos < len(tokens) and tokens[pos][0] != ")":
            if tokens[pos][0] == "(":
                children.append(parse_node())
            else:
                children.append(ParseNode(word=tokens[pos][0]))
                pos += 1
        if pos >= len(tokens):
            raise TreeFormatError(
                f"unbalanced parentheses: '(' at position {at} never closed")
        pos += 1  # consume ')'
        if not children:
            raise TreeFormatError(
                f"node {label!r} at position {at} has no children")
        return ParseNode(label=label, children=tuple(children))

    if not tokens:
        raise TreeFormatError("empty tree")
    root = parse_node()
    if pos != len(tokens):
        raise TreeFormatError(
            f"trailing content at position {tokens[pos][1]}")
    if root.n_leaves() == 0:
        raise TreeFormatError("tree has no leaves")
    return root


def read_bracketed(path) -> list:
    """One bracketed tree per line; blank lines are skipped."""
    trees = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                trees.append(parse_bracketed(line))
            except TreeFormatError as e:
                raise TreeFormatError(f"{path}: line {lineno}: {e}") from None
    return trees


def to_left_branching_cnf(tree: ParseNode) -> Skeleton:
    """Binarize left-branching, collapse unary chains, drop labels.

    Children c1..cn become (((c1 c2) c3) ... cn); only the resulting
    width >= 2 spans are kept.
    """
    spans = set()

    def walk(node, start):
        if node.is_leaf:
            return start + 1
        if len(node.children) == 1:
            return walk(node.children[0], start)
        boundaries = [start]
        for child in node.children:
            boundaries.append(walk(child, boundaries[-1]))
        for m in range(2, len(boundaries)):
            i, j = boundaries[0], boundaries[m]
            if j - i >= 2:
                spans.add((i, j))
        return boundaries[-1]

    n = walk(tree, 0)
    return Skeleton(n, frozenset(spans))


def skeleton_of_semantic_tree(tree: SemanticTree) -> Skeleton:
    return Skeleton(tree.T, tree.spans())


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


def split_document(text: str, cap: int = 60) -> list:
    """Cut a document at ./!/? followed by whitespace; fragments longer
    than ``cap`` tokens are further chopped at the cap boundary."""
    text = text.strip()
    if not text:
        raise ValueError("empty document")
    fragments = [f for f in _SENTENCE_BOUNDARY.split(text) if f.strip()]
    out = []
    for frag in fragments:
        toks = frag.split()
        if len(toks) <= cap:
            out.append(frag)
        else:
            for start in range(0, len(toks), cap):
                out.append(" ".join(toks[start:start + cap]))
    return out


# ---------------------------------------------------------------------------
# Synthetic corpus generator
# ---------------------------------------------------------------------------


class GenerationError(RuntimeError):
    pass


def _termination_rules(g: Grammar, label_id):
    """Unary rules usable to close a node during generation.

    Identity rules (A -> A) are preferred: the non-identity layer exists
    to cancel misread function words at parse time, and sampling it would
    emit words that carry no signal about the tree above them.
    """
    identity = [r for r in g.unary_rules
                if r.parent == label_id and r.left == r.parent]
    if identity:
        return identity
    return [r for r in g.unary_rules if r.parent == label_id]


def _generation_rules(g: Grammar):
    """Per-label expansion options: canonical binary rules + closing unaries."""
    binaries = {}
    for r in g.binary_rules:
        if r.canonical:
            binaries.setdefault(r.parent, []).append(r)
    unaries = {lab.id: _termination_rules(g, lab.id) for lab in g.labels}
    return binaries, unaries


def _min_layers(g: Grammar, binaries, unaries):
    """Fewest layers needed to finish a node of each label.

    Closing via the unary layer costs 3 (node, preterminal, word); a
    binary expansion costs 1 plus the deeper child.
    """
    INF = float("inf")
    need = {lab.id: (3 if unaries[lab.id] else INF) for lab in g.labels}
    changed = True
    while changed:
        changed = False
        for a, rules in binaries.items():
            for r in rules:
                cand = 1 + max(need[r.left], need[r.right])
                if cand < need[a]:
                    need[a] = cand
                    changed = True
    return need


def generate_synthetic(g: Grammar, planted: Lexicon, n: int,
                       max_depth: int = 6, seed: int = 0):
    """Sample n labeled sentences with their gold semantic trees.

    Top-down: the root label is uniform over the grammar's roots; each
    node picks uniformly among its declared-orientation binary rules and
    its closing unary rules, restricted to choices that can still finish
    within the depth budget.  Depth counts the layers on a root-to-word
    path (root, ..., preterminal, word), so max_depth=6 allows up to
    three binary levels (8 tokens).  Words are drawn uniformly from the
    planted lexicon entries of the chosen preterminal.

    Returns a list of (Example, SemanticTree) pairs; deterministic for a
    fixed seed.
    """
    for p in g.preterminal_ids:
        name = g.label_name(p)
        if not planted.words_for(name):
            raise GenerationError(
                f"planted lexicon has no word for preterminal {name!r}")
    words = {p: planted.words_for(g.label_name(p)) for p in g.preterminal_ids}
    binaries, unaries = _generation_rules(g)
    need = _min_layers(g, binaries, unaries)
    rng = np.random.default_rng(seed)
    roots = list(g.root_ids)

    def expand(label_id, budget):
        options = []
        if budget >= 3:
            options.extend(unaries[label_id])
        for r in binaries.get(label_id, ()):
            if 1 + max(need[r.left], need[r.right]) <= budget:
                options.append(r)
        if not options:
            return None
        r = options[int(rng.integers(len(options)))]
        if r.kind == UNARY:
            w = words[r.left][int(rng.integers(len(words[r.left])))]
            return ("leaf", r, w)
        left = expand(r.left, budget - 1)
        right = expand(r.right, budget - 1)
        if left is None or right is None:
            return None
        return ("node", r, left, right)

    out = []
    for _ in range(n):
        tree = None
        for _attempt in range(50):
            root = roots[int(rng.integers(len(roots)))]
            structure = expand(root, max_depth)
            if structure is not None:
                tree = _assemble(structure, root)
                break
        if tree is None:
            raise GenerationError(
                f"unexpandable label under depth cap {max_depth}")
        ex = Example(list(tree.tokens), g.label_name(root),
                     skeleton=Skeleton(tree.T, tree.spans()))
        out.append((ex, tree))
    return out


def _assemble(structure, root_id) -> SemanticTree:
    tokens, binaries, unaries, prets = [], [], [], []

    def walk(node, start):
        if node[0] == "leaf":
            _, rule, word = node
            tokens.append(word)
            unaries.append((rule.id, start))
            prets.append((start, rule.left))
            return start + 1
        _, rule, left, right = node
        k = walk(left, start)
        end = walk(right, k)
        binaries.append((rule.id, start, k, end))
        return end

    walk(structure, 0)
    prets.sort()
    return SemanticTree(tuple(tokens), root_id, tuple(binaries),
                        tuple(sorted(unaries, key=lambda u: u[1])),
                        tuple(b for _, b in prets))
