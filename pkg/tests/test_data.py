import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semtree import (Lexicon, builtin_scg, check_tree, classify,
                     lexicon_scorer, load_dataset, parse_bracketed,
                     read_bracketed, save_dataset, score_sentence,
                     split_document, to_left_branching_cnf, viterbi_score,
                     generate_synthetic)
from semtree.data import (DatasetFormatError, GenerationError, Skeleton,
                          TreeFormatError)
from semtree import lexicon as L


@pytest.fixture(scope="module")
def scg():
    return builtin_scg()


@pytest.fixture(scope="module")
def planted():
    lex = Lexicon()
    for w in ("good", "great", "fun", "nice"):
        lex.add(w, "P", L.USER_SENTIMENT)
    for w in ("bad", "awful", "boring", "poor"):
        lex.add(w, "N", L.USER_SENTIMENT)
    for w in ("movie", "film", "one"):
        lex.add(w, "O", L.USER_SENTIMENT)
    for w, lab in (("not", "D"), ("never", "D"), ("but", "+"), ("yet", "+"),
                   ("although", "-"), ("though", "-"), ("if", "I"),
                   ("would", "I")):
        lex.add(w, lab, L.BUILTIN_FUNCTIONAL)
    return lex


class TestDataset:
    def test_load(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("positive\tgreat fun\n0\tnot good\nN\tAwful Movie\n")
        exs = load_dataset(p)
        assert exs[0].tokens == ["great", "fun"] and exs[0].root == "P"
        assert exs[1].root == "N"
        assert exs[2].tokens == ["awful", "movie"]

    def test_unknown_label(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("positive\tok\nmeh\talso ok\n")
        with pytest.raises(DatasetFormatError, match="line 2"):
            load_dataset(p)

    def test_empty_text(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("positive\t\n")
        with pytest.raises(DatasetFormatError, match="line 1"):
            load_dataset(p)

    def test_save_load_roundtrip(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("positive\tgreat fun\nnegative\tnot good\n")
        exs = load_dataset(p)
        q = tmp_path / "copy.tsv"
        save_dataset(exs, q)
        again = load_dataset(q)
        assert [(e.tokens, e.root) for e in again] == \
               [(e.tokens, e.root) for e in exs]


class TestBracketed:
    def test_parse(self):
        t = parse_bracketed("(S (NP (D the) (N cat)) (V ran))")
        assert t.n_leaves() == 3
        assert t.leaves() == ["the", "cat", "ran"]

    def test_roundtrip(self):
        s = "(S (NP (D the) (N cat)) (V ran))"
        assert parse_bracketed(s).to_string() == s

    def test_unbalanced(self):
        with pytest.raises(TreeFormatError, match="position"):
            parse_bracketed("(S (NP (D the)")

    def test_trailing(self):
        with pytest.raises(TreeFormatError, match="trailing"):
            parse_bracketed("(S a) b")

    def test_no_leaves(self):
        with pytest.raises(TreeFormatError):
            parse_bracketed("(S)")

    def test_read_file(self, tmp_path):
        p = tmp_path / "trees.txt"
        p.write_text("(S a b)\n\n(S (X c) d)\n")
        trees = read_bracketed(p)
        assert [t.n_leaves() for t in trees] == [2, 2]


class TestLeftBranchingCnf:
    def test_flat_four_children(self):
        sk = to_left_branching_cnf(parse_bracketed("(S a b c d)"))
        assert sk.spans == {(0, 2), (0, 3), (0, 4)}
        assert sk.check() == []

    def test_binary_tree_unchanged(self):
        sk = to_left_branching_cnf(parse_bracketed("(S (X a b) (Y c d))"))
        assert sk.spans == {(0, 2), (2, 4), (0, 4)}

    def test_unary_chain_single_leaf(self):
        sk = to_left_branching_cnf(parse_bracketed("(A (B (C leaf)))"))
        assert sk.spans == frozenset()
        assert sk.n_tokens == 1

    @given(st.integers(min_value=2, max_value=9), st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_span_count_and_laminarity(self, n_leaves, seed):
        """Conversion of any tree yields exactly T-1 nested spans."""
        rng = np.random.default_rng(seed)

        def build(lo, hi):
            if hi - lo == 1:
                return f"(W t{lo})"
            n_kids = int(rng.integers(2, min(4, hi - lo) + 1))
            cuts = sorted(rng.choice(
                np.arange(lo + 1, hi), size=n_kids - 1, replace=False).tolist())
            bounds = [lo] + cuts + [hi]
            inner = " ".join(build(a, b) for a, b in zip(bounds, bounds[1:]))
            return f"(X {inner})"

        sk = to_left_branching_cnf(parse_bracketed(build(0, n_leaves)))
        assert len(sk.spans) == n_leaves - 1
        assert sk.check() == []


class TestSplitDocument:
    def test_delimiters(self):
        assert split_document("good . bad !") == ["good .", "bad !"]

    def test_no_delimiter(self):
        assert split_document("just one fragment") == ["just one fragment"]

    def test_cap_splitting(self):
        text = " ".join(["w"] * 130)
        frags = split_document(text, cap=60)
        assert len(frags) == 3
        assert [len(f.split()) for f in frags] == [60, 60, 10]

    def test_empty(self):
        with pytest.raises(ValueError):
            split_document("   ")


class TestGenerate:
    def test_trees_valid_and_roots_legal(self, scg, planted):
        pairs = generate_synthetic(scg, planted, 100, max_depth=6, seed=3)
        assert len(pairs) == 100
        for ex, tree in pairs:
            assert ex.root in ("P", "N")
            assert check_tree(scg, tree) == []
            assert list(tree.tokens) == ex.tokens
            assert scg.label_name(tree.root) == ex.root

    def test_deterministic(self, scg, planted):
        a = generate_synthetic(scg, planted, 50, max_depth=6, seed=9)
        b = generate_synthetic(scg, planted, 50, max_depth=6, seed=9)
        assert [(e.tokens, e.root) for e, _ in a] == \
               [(e.tokens, e.root) for e, _ in b]
        assert [t for _, t in a] == [t for _, t in b]

    def test_depth_cap_limits_length(self, scg, planted):
        pairs = generate_synthetic(scg, planted, 200, max_depth=6, seed=1)
        assert max(len(ex.tokens) for ex, _ in pairs) <= 8
        pairs = generate_synthetic(scg, planted, 50, max_depth=4, seed=1)
        assert max(len(ex.tokens) for ex, _ in pairs) <= 2

    def test_missing_preterminal(self, scg):
        lex = Lexicon()
        lex.add("good", "P", L.USER_SENTIMENT)
        with pytest.raises(GenerationError, match="'N'"):
            generate_synthetic(scg, lex, 5)

    def test_decodes_match_when_margins_dominate(self, scg, planted):
        """Wherever the margin scorer is not exactly tied between roots,
        its decode must agree with the sampled gold label."""
        pairs = generate_synthetic(scg, planted, 300, max_depth=6, seed=7)
        params = lexicon_scorer(scg, planted, 5.0)
        ties = 0
        for ex, _ in pairs:
            tables = score_sentence(params, ex.tokens, scg)
            v = {y: viterbi_score(scg, tables, y) for y in ("P", "N")}
            if abs(v["P"] - v["N"]) < 1e-9:
                ties += 1
                continue
            assert max(v, key=v.get) == ex.root, ex.tokens
        assert ties < 0.05 * len(pairs)

    def test_two_token_negations_decode_exactly(self, scg, planted):
        """not-word/sentiment-word pairs always decode to the gold root."""
        pairs = generate_synthetic(scg, planted, 400, max_depth=6, seed=11)
        params = lexicon_scorer(scg, planted, 5.0)
        checked = 0
        for ex, _ in pairs:
            if len(ex.tokens) != 2:
                continue
            tables = score_sentence(params, ex.tokens, scg)
            assert classify(scg, tables).predicted() == ex.root
            checked += 1
        assert checked > 10

    def test_gold_skeleton_attached(self, scg, planted):
        pairs = generate_synthetic(scg, planted, 20, max_depth=6, seed=5)
        for ex, tree in pairs:
            assert ex.skeleton is not None
            assert ex.skeleton.spans == tree.spans()
            assert ex.skeleton.check() == []
