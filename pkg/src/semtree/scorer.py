"""Anchored-rule scoring.

Every anchored rule in a tree gets a score that decomposes into shared
rule scalars plus per-span label/span heads:

    binary  (B_ik C_kj -> A_ij): rule_scalar + label(A, span ij) + span(ij)
    unary   (B_i -> A_i):        rule_scalar + label(A, i..i+1) + span(i..i+1)
    terminal(x_i -> B_i):        terminal head on the word embedding

Two views of the sentence feed the heads: the raw word embedding (terminal
head; recognizing a word's own preterminal needs no context) and a
mean-pooled + affine + tanh phrase vector (label and span heads, which
judge whole constituents).  ScoreTables is the bridge to the chart code:
it is the complete set of sufficient statistics for one sentence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grammar import Grammar, parse_grammar, serialize_grammar
from .lexicon import Lexicon

NEG_INF = float("-inf")

UNK = "<unk>"
MODEL_FORMAT_VERSION = 1
DEFAULT_DIM = 64
INIT_SCALE = 0.1


class ModelFormatError(ValueError):
    pass


def span_list(T):
    """Canonical enumeration of all spans 0 <= i < j <= T."""
    si, sj = [], []
    for i in range(T):
        for j in range(i + 1, T + 1):
            si.append(i)
            sj.append(j)
    return np.asarray(si, dtype=np.int64), np.asarray(sj, dtype=np.int64)


@dataclass
class ScoreTables:
    """Per-sentence anchored-rule scores, natural-log units.

    Rule scalars are stored per rule id (binary ids first, then unary; the
    grammar's canonical order), label/span tables per anchored span.
    Entries for rules absent from the grammar simply do not exist; dense
    views insert -inf there.
    """

    grammar: Grammar
    T: int
    terminal: np.ndarray  # (T, L); -inf outside the preterminal columns
    unary: np.ndarray     # (n_unary,)
    binary: np.ndarray    # (n_binary,)
    label: np.ndarray     # (T+1, T+1, L)
    span: np.ndarray      # (T+1, T+1)
    tokens: tuple = None

    def binary_dense(self):
        g = self.grammar
        out = np.full((g.n_labels,) * 3, NEG_INF)
        for r in g.binary_rules:
            out[r.left, r.right, r.parent] = self.binary[r.id]
        return out

    def unary_dense(self):
        g = self.grammar
        out = np.full((g.n_labels, g.n_labels), NEG_INF)
        for r in g.unary_rules:
            out[r.left, r.parent] = self.unary[r.id - g.n_binary]
        return out

    def binary_total(self, i, k, j, rule):
        """Full score of an anchored binary rule (scalar + label + span)."""
        return self.binary[rule.id] + self.label[i, j, rule.parent] + self.span[i, j]

    def unary_total(self, i, rule):
        return (self.unary[rule.id - self.grammar.n_binary]
                + self.label[i, i + 1, rule.parent] + self.span[i, i + 1])

    def copy(self):
        return ScoreTables(self.grammar, self.T, self.terminal.copy(),
                           self.unary.copy(), self.binary.copy(),
                           self.label.copy(), self.span.copy(), self.tokens)


@dataclass
class GradTables:
    """Loss gradient with respect to every ScoreTables entry."""

    T: int
    terminal: np.ndarray
    unary: np.ndarray
    binary: np.ndarray
    label: np.ndarray
    span: np.ndarray

    @classmethod
    def zeros(cls, g: Grammar, T: int):
        L = g.n_labels
        return cls(T, np.zeros((T, L)), np.zeros(g.n_unary),
                   np.zeros(g.n_binary), np.zeros((T + 1, T + 1, L)),
                   np.zeros((T + 1, T + 1)))

    def add_scaled(self, other: "GradTables", weight: float):
        self.terminal += weight * other.terminal
        self.unary += weight * other.unary
        self.binary += weight * other.binary
        self.label += weight * other.label
        self.span += weight * other.span
        return self


@dataclass
class PhraseView:
    """Cached sentence views: raw embeddings and pooled phrase vectors.

    contextual[s] = tanh(W . mean(emb[i..j-1]) + b) for the s-th span in
    canonical order; it depends only on the multiset of tokens inside.
    """

    lexical: np.ndarray   # (T, d)
    mean: np.ndarray      # (n_spans, d)
    contextual: np.ndarray  # (n_spans, d)
    span_i: np.ndarray
    span_j: np.ndarray

    def contextual_for(self, i, j):
        idx = np.flatnonzero((self.span_i == i) & (self.span_j == j))
        return self.contextual[idx[0]]


@dataclass
class ScorerParams:
    """All trainable parameters plus the vocabulary and grammar binding."""

    grammar_name: str
    grammar_text: str
    vocab: dict                 # word -> row in emb; UNK is row 0
    emb: np.ndarray             # (V, d)
    w_term: np.ndarray          # (n_pret, d)
    b_term: np.ndarray          # (n_pret,)
    w_ctx: np.ndarray           # (d, d)
    b_ctx: np.ndarray           # (d,)
    w_label: np.ndarray         # (L, d)
    b_label: np.ndarray         # (L,)
    w_span: np.ndarray          # (d,)
    b_span: np.ndarray          # ()
    w_attn: np.ndarray          # (d,) sentence-attention vector
    bin_scalar: np.ndarray      # (n_binary,)
    un_scalar: np.ndarray       # (n_unary,)

    @property
    def dim(self):
        return self.emb.shape[1]

    def arrays(self):
        return {
            "emb": self.emb, "w_term": self.w_term, "b_term": self.b_term,
            "w_ctx": self.w_ctx, "b_ctx": self.b_ctx,
            "w_label": self.w_label, "b_label": self.b_label,
            "w_span": self.w_span, "b_span": self.b_span,
            "w_attn": self.w_attn,
            "bin_scalar": self.bin_scalar, "un_scalar": self.un_scalar,
        }

    def token_ids(self, tokens):
        v = self.vocab
        return np.asarray([v.get(t.lower(), 0) for t in tokens], dtype=np.int64)


@dataclass
class ParamGrads:
    """Gradient accumulator shaped like ScorerParams; merges additively."""

    emb: np.ndarray
    w_term: np.ndarray
    b_term: np.ndarray
    w_ctx: np.ndarray
    b_ctx: np.ndarray
    w_label: np.ndarray
    b_label: np.ndarray
    w_span: np.ndarray
    b_span: np.ndarray
    w_attn: np.ndarray
    bin_scalar: np.ndarray
    un_scalar: np.ndarray

    @classmethod
    def zeros_like(cls, p: ScorerParams):
        return cls(**{k: np.zeros_like(a) for k, a in p.arrays().items()})

    def arrays(self):
        return {
            "emb": self.emb, "w_term": self.w_term, "b_term": self.b_term,
            "w_ctx": self.w_ctx, "b_ctx": self.b_ctx,
            "w_label": self.w_label, "b_label": self.b_label,
            "w_span": self.w_span, "b_span": self.b_span,
            "w_attn": self.w_attn,
            "bin_scalar": self.bin_scalar, "un_scalar": self.un_scalar,
        }


def build_vocab(token_seqs):
    """Deterministic vocabulary: UNK first, then sorted unique tokens."""
    words = sorted({t.lower() for seq in token_seqs for t in seq})
    vocab = {UNK: 0}
    for w in words:
        vocab[w] = len(vocab)
    return vocab


def init_params(g: Grammar, vocab, dim=DEFAULT_DIM, seed=0,
                pretrained=None) -> ScorerParams:
    """Random initialization: embeddings/weights uniform in [-0.1, 0.1],
    biases and rule scalars zero.

    pretrained optionally maps words to vectors of length ``dim``; rows for
    covered words are overwritten.
    """
    rng = np.random.default_rng(seed)
    n_pret = len(g.preterminal_ids)
    u = lambda *shape: rng.uniform(-INIT_SCALE, INIT_SCALE, shape)
    emb = u(len(vocab), dim)
    if pretrained:
        for w, vec in pretrained.items():
            idx = vocab.get(w.lower())
            if idx is not None:
                emb[idx] = np.asarray(vec, dtype=np.float64)
    return ScorerParams(
        grammar_name=g.name,
        grammar_text=serialize_grammar(g),
        vocab=dict(vocab),
        emb=emb,
        w_term=u(n_pret, dim), b_term=np.zeros(n_pret),
        w_ctx=u(dim, dim), b_ctx=np.zeros(dim),
        w_label=u(g.n_labels, dim), b_label=np.zeros(g.n_labels),
        w_span=u(dim), b_span=np.zeros(()),
        w_attn=u(dim),
        bin_scalar=np.zeros(g.n_binary), un_scalar=np.zeros(g.n_unary),
    )


def phrase_view(params: ScorerParams, tokens) -> PhraseView:
    T = len(tokens)
    idx = params.token_ids(tokens)
    lexical = params.emb[idx]
    si, sj = span_list(T)
    prefix = np.vstack([np.zeros(params.dim), np.cumsum(lexical, axis=0)])
    mean = (prefix[sj] - prefix[si]) / (sj - si)[:, None]
    contextual = np.tanh(mean @ params.w_ctx.T + params.b_ctx)
    return PhraseView(lexical, mean, contextual, si, sj)


def score_sentence(params: ScorerParams, tokens, g: Grammar = None) -> ScoreTables:
    """Fill all score tables for one sentence.

    Unknown words map to the shared UNK embedding row.  The grammar is
    reparsed from the params' stored text unless passed explicitly.
    """
    if len(tokens) == 0:
        raise ValueError("empty sentence")
    if g is None:
        g = grammar_of(params)
    T = len(tokens)
    L = g.n_labels
    view = phrase_view(params, tokens)

    terminal = np.full((T, L), NEG_INF)
    terminal[:, list(g.preterminal_ids)] = (
        view.lexical @ params.w_term.T + params.b_term)

    label = np.zeros((T + 1, T + 1, L))
    span = np.zeros((T + 1, T + 1))
    label[view.span_i, view.span_j, :] = (
        view.contextual @ params.w_label.T + params.b_label)
    span[view.span_i, view.span_j] = (
        view.contextual @ params.w_span + params.b_span)

    return ScoreTables(g, T, terminal, params.un_scalar.copy(),
                       params.bin_scalar.copy(), label, span,
                       tokens=tuple(tokens))


_GRAMMAR_CACHE = {}


def grammar_of(params: ScorerParams) -> Grammar:
    key = (params.grammar_name, params.grammar_text)
    g = _GRAMMAR_CACHE.get(key)
    if g is None:
        g = parse_grammar(params.grammar_text, name=params.grammar_name)
        _GRAMMAR_CACHE[key] = g
    return g


def accumulate_gradients(params: ScorerParams, tokens, upstream: GradTables,
                         out: ParamGrads = None) -> ParamGrads:
    """Chain upstream table gradients back onto the parameters.

    Accumulation is additive, so per-sentence calls with weighted upstream
    tables compose into a batch gradient.
    """
    g = grammar_of(params)
    T = len(tokens)
    if upstream.T != T or upstream.terminal.shape != (T, g.n_labels):
        raise ValueError("upstream gradient shape does not match sentence")
    if out is None:
        out = ParamGrads.zeros_like(params)
    view = phrase_view(params, tokens)
    idx = params.token_ids(tokens)
    pret = list(g.preterminal_ids)

    out.bin_scalar += upstream.binary
    out.un_scalar += upstream.unary

    u_term = upstream.terminal[:, pret]           # (T, n_pret)
    out.w_term += u_term.T @ view.lexical
    out.b_term += u_term.sum(axis=0)
    d_lex = u_term @ params.w_term                # (T, d)

    si, sj = view.span_i, view.span_j
    d_label = upstream.label[si, sj, :]           # (n_spans, L)
    d_span = upstream.span[si, sj]                # (n_spans,)
    out.w_label += d_label.T @ view.contextual
    out.b_label += d_label.sum(axis=0)
    out.w_span += d_span @ view.contextual
    out.b_span += d_span.sum()

    d_ctx = d_label @ params.w_label + d_span[:, None] * params.w_span[None, :]
    d_pre = (1.0 - view.contextual ** 2) * d_ctx
    out.w_ctx += d_pre.T @ view.mean
    out.b_ctx += d_pre.sum(axis=0)
    d_mean = (d_pre @ params.w_ctx) / (sj - si)[:, None]

    # scatter the per-span mean gradient to positions with a difference array
    diff = np.zeros((T + 1, params.dim))
    np.add.at(diff, si, d_mean)
    np.add.at(diff, sj, -d_mean)
    pos_grad = np.cumsum(diff, axis=0)[:T]

    np.add.at(out.emb, idx, d_lex + pos_grad)
    return out


# ---------------------------------------------------------------------------
# Static lexicon scorer
# ---------------------------------------------------------------------------


def lexicon_scorer(g: Grammar, lex: Lexicon, margin: float) -> ScorerParams:
    """A fixed margin scorer for demos and oracle tests.

    Terminal scores: +margin for a word's lexicon label (O for unknown
    words), -margin for every other preterminal.  Rule scalars prefer the
    declared rule orientations and the identity unary layer: mirrored
    orientations and cancellation unaries cost -margin, so the intended
    reading of a sentence wins by a clear gap instead of tying with its
    flipped or cancelled variants.  Label and span heads are zero.

    Returned as ordinary ScorerParams (one-hot embeddings over the lexicon
    vocabulary), so it can be saved, loaded, and decoded like any model.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    words = sorted(lex.entries)
    vocab = {UNK: 0}
    for w in words:
        vocab[w] = len(vocab)
    V = len(vocab)
    dim = V
    emb = np.eye(V, dim)

    pret = list(g.preterminal_ids)
    o_row = pret.index(g.label("O").id)
    w_term = np.full((len(pret), dim), -margin)
    w_term[o_row, 0] = margin  # unknown words read as neutral
    for w, lab in lex.entries.items():
        w_term[pret.index(g.label(lab).id), vocab[w]] = margin

    bin_scalar = np.array([0.0 if r.canonical else -margin
                           for r in g.binary_rules])
    un_scalar = np.array([0.0 if r.left == r.parent else -margin
                          for r in g.unary_rules])

    return ScorerParams(
        grammar_name=g.name,
        grammar_text=serialize_grammar(g),
        vocab=vocab,
        emb=emb,
        w_term=w_term, b_term=np.zeros(len(pret)),
        w_ctx=np.zeros((dim, dim)), b_ctx=np.zeros(dim),
        w_label=np.zeros((g.n_labels, dim)), b_label=np.zeros(g.n_labels),
        w_span=np.zeros(dim), b_span=np.zeros(()),
        w_attn=np.zeros(dim),
        bin_scalar=bin_scalar, un_scalar=un_scalar,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_model(params: ScorerParams, path):
    """Versioned JSON container; key order and float repr are fixed, so a
    given parameter state always serializes to identical bytes."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "grammar": {"name": params.grammar_name,
                    "text": params.grammar_text},
        "vocab": sorted(params.vocab, key=params.vocab.get),
        "arrays": {
            name: {"shape": list(arr.shape),
                   "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
            for name, arr in params.arrays().items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_model(path, g: Grammar = None) -> ScorerParams:
    """Load a model container; rule-count mismatches with the grammar are
    errors (a model is only meaningful against its own rule inventory)."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {doc.get('format_version')!r}")
    gtext = doc["grammar"]["text"]
    gname = doc["grammar"]["name"]
    if g is None:
        g = parse_grammar(gtext, name=gname)
    arrays = {}
    for name, spec in doc["arrays"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        arrays[name] = arr
    if arrays["bin_scalar"].shape[0] != g.n_binary \
            or arrays["un_scalar"].shape[0] != g.n_unary:
        raise ModelFormatError(
            f"model has {arrays['bin_scalar'].shape[0]} binary / "
            f"{arrays['un_scalar'].shape[0]} unary rule scalars but grammar "
            f"{g.name!r} defines {g.n_binary} / {g.n_unary}")
    vocab = {w: i for i, w in enumerate(doc["vocab"])}
    return ScorerParams(grammar_name=gname, grammar_text=gtext,
                        vocab=vocab, **arrays)


def load_word_vectors(path):
    """Read word2vec-style text vectors: optional count/dim header line,
    then ``word v1 v2 ...`` rows.  Returns {word: np.ndarray}."""
    vectors = {}
    with open(path, encoding="utf-8") as f:
        first = f.readline()
        parts = first.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            _add_vector_line(vectors, first, 1, path)
        for lineno, line in enumerate(f, start=2):
            if line.strip():
                _add_vector_line(vectors, line, lineno, path)
    return vectors


def _add_vector_line(vectors, line, lineno, path):
    parts = line.rstrip("\n").split(" ")
    if len(parts) < 2:
        raise ModelFormatError(f"{path}: line {lineno}: malformed vector row")
    try:
        vectors[parts[0].lower()] = np.asarray([float(x) for x in parts[1:]])
    except ValueError:
        raise ModelFormatError(
            f"{path}: line {lineno}: malformed vector row") from None
