import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semtree import (SemanticTree, Underivable, SentenceTooLong,
                     anchored_binary_marginals, builtin_functional,
                     builtin_glue, builtin_scg, check_tree, cky_decode,
                     classify, enumerate_skeletons, enumerate_trees, inside,
                     lexicon_scorer, outside, parse_grammar, rule_marginals,
                     score_sentence, skeleton_inside, viterbi_score)
from semtree import lexicon as L

import oracles

NEG_INF = float("-inf")


@pytest.fixture(scope="module")
def scg():
    return builtin_scg()


@pytest.fixture(scope="module")
def glue():
    return builtin_glue()


class TestInside:
    def test_single_token_zero_scores(self, scg):
        """Five unary rules produce O, each contributing e^0."""
        tables = oracles.zero_tables(scg, 1)
        ic = inside(scg, tables)
        o = scg.label("O").id
        assert ic.alpha[0, 1, o] == pytest.approx(math.log(5), abs=1e-12)
        p = scg.label("P").id
        assert ic.alpha[0, 1, p] == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("gname", ["scg", "glue"])
    @pytest.mark.parametrize("T", [1, 2, 3, 4, 5, 6])
    def test_matches_enumeration(self, gname, T, scg, glue):
        g = scg if gname == "scg" else glue
        rng = np.random.default_rng(T * 31 + len(gname))
        for _ in range(5):
            tables = oracles.random_tables(g, T, rng)
            ic = inside(g, tables)
            sums = oracles.sum_over_trees(g, tables)
            for y in g.root_ids:
                expect = sums[g.label_name(y)]
                got = math.exp(ic.alpha[0, T, y])
                assert got == pytest.approx(expect, rel=1e-9)

    def test_underivable_grammar(self):
        g = parse_grammar(
            "label P sentimental root\n"
            "label N sentimental root\n"
            "label O sentimental preterminal\n"
            "rule O O -> O\nunary O -> O\n")
        tables = oracles.zero_tables(g, 2)
        ic = inside(g, tables)
        for y in g.root_ids:
            assert ic.alpha[0, 2, y] == NEG_INF
        with pytest.raises(Underivable):
            classify(g, tables, ic)

    def test_length_cap(self, scg):
        tables = oracles.zero_tables(scg, 5)
        with pytest.raises(SentenceTooLong):
            inside(scg, tables, max_len=4)


class TestClassify:
    def test_normalization(self, scg):
        rng = np.random.default_rng(5)
        tables = oracles.random_tables(scg, 4, rng)
        probs = classify(scg, tables).probabilities
        assert abs(sum(probs.values()) - 1.0) <= 1e-12

    def test_zero_scores_symmetric(self, scg):
        tables = oracles.zero_tables(scg, 3)
        probs = classify(scg, tables).probabilities
        assert probs["P"] == pytest.approx(0.5, abs=1e-12)

    def test_logit_decomposition(self, scg):
        """log inside at the root splits into span + label + composition,
        with the composition part recomputable from sub-span insides."""
        rng = np.random.default_rng(9)
        for T in (1, 2, 4):
            tables = oracles.random_tables(scg, T, rng)
            ic = inside(scg, tables)
            result = classify(scg, tables, ic)
            for name in result.probabilities:
                y = scg.label(name).id
                lhs = ic.alpha[0, T, y] - tables.span[0, T] - tables.label[0, T, y]
                assert lhs == pytest.approx(result.s_scm[name], abs=1e-10)
                assert result.s_label[name] == tables.label[0, T, y]


class TestOutside:
    def test_root_initialization(self, scg):
        rng = np.random.default_rng(2)
        tables = oracles.random_tables(scg, 3, rng)
        ic = inside(scg, tables)
        oc = outside(scg, tables, ic)
        assert oc.beta[0, 3, scg.label("P").id] == 0.0
        assert oc.beta[0, 3, scg.label("N").id] == 0.0
        assert oc.beta[0, 3, scg.label("O").id] == NEG_INF

    def test_inside_outside_identity_width_one(self, scg):
        """Summing alpha*beta over labels at any width-1 cell recovers Z."""
        rng = np.random.default_rng(3)
        tables = oracles.random_tables(scg, 5, rng)
        ic = inside(scg, tables)
        oc = outside(scg, tables, ic)
        for i in range(5):
            cell = ic.alpha[i, i + 1, :] + oc.beta[i, i + 1, :]
            finite = cell[cell > NEG_INF]
            total = math.log(np.exp(finite - ic.log_z).sum()) + ic.log_z
            assert total == pytest.approx(ic.log_z, abs=1e-9)

    def test_anchored_marginals_are_probabilities(self, scg):
        rng = np.random.default_rng(4)
        tables = oracles.random_tables(scg, 4, rng)
        ic = inside(scg, tables)
        oc = outside(scg, tables, ic)
        for _, _, _, _, mu in anchored_binary_marginals(scg, tables, ic, oc):
            assert -1e-12 <= mu <= 1 + 1e-12

    def test_marginals_match_enumeration(self, scg):
        """Expected counts from the charts equal brute-force expectations."""
        rng = np.random.default_rng(6)
        for T in (2, 3, 5):
            tables = oracles.random_tables(scg, T, rng)
            ic = inside(scg, tables)
            oc = outside(scg, tables, ic)
            got = rule_marginals(scg, tables, ic, oc)
            want = oracles.expected_counts(scg, tables)
            np.testing.assert_allclose(got.binary, want.binary, atol=1e-9)
            np.testing.assert_allclose(got.unary, want.unary, atol=1e-9)
            np.testing.assert_allclose(got.terminal, want.terminal, atol=1e-9)
            np.testing.assert_allclose(got.label, want.label, atol=1e-9)
            np.testing.assert_allclose(got.span, want.span, atol=1e-9)

    def test_gold_conditioned_marginals(self, scg):
        rng = np.random.default_rng(8)
        tables = oracles.random_tables(scg, 4, rng)
        ic = inside(scg, tables)
        oc = outside(scg, tables, ic, root="P")
        got = rule_marginals(scg, tables, ic, oc)
        want = oracles.expected_counts(scg, tables, root="P")
        np.testing.assert_allclose(got.binary, want.binary, atol=1e-9)
        np.testing.assert_allclose(got.span, want.span, atol=1e-9)


class TestRuleMarginals:
    def test_binary_marginals_sum_to_tree_size(self, scg, glue):
        """Every tree has exactly T-1 binary rules."""
        rng = np.random.default_rng(11)
        for g in (scg, glue):
            for T in (1, 2, 4, 6):
                tables = oracles.random_tables(g, T, rng)
                ic = inside(g, tables)
                oc = outside(g, tables, ic)
                mu = rule_marginals(g, tables, ic, oc)
                assert mu.binary.sum() == pytest.approx(T - 1, abs=1e-9)
                assert mu.unary.sum() == pytest.approx(T, abs=1e-9)
                assert mu.terminal.sum() == pytest.approx(T, abs=1e-9)

    def test_marginals_are_logz_gradients(self, scg):
        """Central differences of log Z w.r.t. rule scalars."""
        rng = np.random.default_rng(12)
        tables = oracles.random_tables(scg, 4, rng)
        ic = inside(scg, tables)
        oc = outside(scg, tables, ic)
        mu = rule_marginals(scg, tables, ic, oc)
        h = 1e-6
        for rid in rng.choice(scg.n_binary, size=8, replace=False):
            up = tables.copy()
            up.binary[rid] += h
            down = tables.copy()
            down.binary[rid] -= h
            cd = (inside(scg, up).log_z - inside(scg, down).log_z) / (2 * h)
            assert mu.binary[rid] == pytest.approx(cd, abs=1e-5)

    def test_per_position_node_marginals(self, scg):
        rng = np.random.default_rng(13)
        tables = oracles.random_tables(scg, 4, rng)
        ic = inside(scg, tables)
        oc = outside(scg, tables, ic)
        mu = rule_marginals(scg, tables, ic, oc)
        for i in range(4):
            assert mu.label[i, i + 1, :].sum() == pytest.approx(1.0, abs=1e-9)
            assert mu.span[i, i + 1] == pytest.approx(1.0, abs=1e-9)
        assert mu.span[0, 4] == pytest.approx(1.0, abs=1e-9)


class TestCky:
    @pytest.mark.parametrize("gname", ["scg", "glue"])
    def test_optimality(self, gname, scg, glue):
        g = scg if gname == "scg" else glue
        rng = np.random.default_rng(21)
        for T in (1, 2, 3, 4, 5):
            tables = oracles.random_tables(g, T, rng)
            for y in g.root_ids:
                tree = cky_decode(g, tables, y)
                assert check_tree(g, tree) == []
                best = oracles.best_tree_score(g, tables, y)
                assert tree.score(tables) == pytest.approx(best, abs=1e-9)
                assert viterbi_score(g, tables, y) == pytest.approx(best, abs=1e-9)

    def test_structural_invariants(self, scg):
        rng = np.random.default_rng(22)
        tables = oracles.random_tables(scg, 6, rng)
        tree = cky_decode(scg, tables, "P")
        assert len(tree.binaries) == 5
        assert len(tree.unaries) == 6
        assert len(tree.preterminals) == 6
        assert check_tree(scg, tree) == []

    def test_not_good(self, scg):
        lex = builtin_functional()
        lex.add("good", "P", L.USER_SENTIMENT)
        params = lexicon_scorer(scg, lex, 5.0)
        tables = score_sentence(params, ["not", "good"], scg)
        tree = cky_decode(scg, tables, "N")
        doc = tree.to_dict(scg)
        assert doc["terminal"] == [
            {"word": "not", "label": "D", "i": 0},
            {"word": "good", "label": "P", "i": 1}]
        assert doc["unary"] == [{"child": "D", "parent": "D", "i": 0},
                                {"child": "P", "parent": "P", "i": 1}]
        assert doc["binary"] == [{"left": "D", "right": "P", "parent": "N",
                                  "i": 0, "k": 1, "j": 2}]

    def test_deterministic_tie_break_smallest_split(self, glue):
        """All-zero scores tie every tree; the smallest-split rule picks
        k=1 at every level, i.e. the right-branching shape."""
        tables = oracles.zero_tables(glue, 4)
        tree = cky_decode(glue, tables, "P")
        assert tree.spans() == {(1, 4), (2, 4), (0, 4)}
        again = cky_decode(glue, tables, "P")
        assert again == tree

    def test_underivable_root(self, scg):
        g = parse_grammar(
            "label P sentimental preterminal root\n"
            "label N sentimental root\n"
            "rule P P -> P\nunary P -> P\n")
        tables = oracles.zero_tables(g, 2)
        with pytest.raises(Underivable):
            cky_decode(g, tables, "N")

    def test_roundtrip_dict(self, scg):
        rng = np.random.default_rng(23)
        tables = oracles.random_tables(scg, 4, rng)
        tree = cky_decode(scg, tables, "N")
        again = SemanticTree.from_dict(scg, tree.to_dict(scg))
        assert again == tree


class TestSkeleton:
    def test_two_tokens_single_bracketing(self, scg):
        rng = np.random.default_rng(31)
        tables = oracles.random_tables(scg, 2, rng)
        sk = skeleton_inside(tables)
        assert sk.log_r({(0, 2)}) == pytest.approx(0.0, abs=1e-12)

    def test_probabilities_sum_to_one(self, scg):
        rng = np.random.default_rng(32)
        for T in (2, 3, 4, 5, 6):
            tables = oracles.random_tables(scg, T, rng)
            sk = skeleton_inside(tables)
            skeletons = list(enumerate_skeletons(T))
            total = math.fsum(math.exp(sk.log_r(s)) for s in skeletons)
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_uniform_scores_uniform_skeletons(self, scg):
        tables = oracles.zero_tables(scg, 4)
        sk = skeleton_inside(tables)
        for s in enumerate_skeletons(4):
            assert math.exp(sk.log_r(s)) == pytest.approx(0.2, abs=1e-12)

    def test_catalan_counts(self):
        catalan = [1, 1, 2, 5, 14, 42]
        for T in range(1, 7):
            assert len(list(enumerate_skeletons(T))) == catalan[T - 1]

    def test_span_marginals_match_enumeration(self, scg):
        rng = np.random.default_rng(33)
        tables = oracles.random_tables(scg, 5, rng)
        sk = skeleton_inside(tables)
        mu = sk.span_marginals()
        skeletons = list(enumerate_skeletons(5))
        probs = [math.exp(sk.log_r(s)) for s in skeletons]
        for i in range(5):
            for j in range(i + 2, 6):
                want = math.fsum(p for s, p in zip(skeletons, probs)
                                 if (i, j) in s)
                assert mu[i, j] == pytest.approx(want, abs=1e-9)


class TestEnumerateTrees:
    def test_cap(self, scg):
        tables = oracles.zero_tables(scg, 8)
        with pytest.raises(ValueError, match="capped"):
            list(enumerate_trees(scg, tables))

    def test_single_token_chain_counts(self, scg):
        """Derivations per root equal the (terminal, unary) chains to it."""
        tables = oracles.zero_tables(scg, 1)
        trees = list(enumerate_trees(scg, tables))
        by_root = {}
        for t, _ in trees:
            by_root.setdefault(scg.label_name(t.root), []).append(t)
        assert len(by_root["P"]) == 1  # only P -> P
        assert len(by_root["N"]) == 1

    def test_glue_T3_count(self, glue):
        """2 skeletons x 9 child-pair choices per binary node = 162/root."""
        tables = oracles.zero_tables(glue, 3)
        trees = list(enumerate_trees(glue, tables))
        assert len(trees) == 2 * 162
        for t, _ in trees:
            assert check_tree(glue, t) == []

    def test_sums_match_inside(self, scg):
        rng = np.random.default_rng(41)
        tables = oracles.random_tables(scg, 4, rng)
        ic = inside(scg, tables)
        sums = {}
        for t, s in enumerate_trees(scg, tables):
            sums[t.root] = sums.get(t.root, 0.0) + math.exp(s)
        for y, total in sums.items():
            assert total == pytest.approx(math.exp(ic.alpha[0, 4, y]), rel=1e-9)

    def test_viterbi_upper_bounds_probability(self, scg):
        """exp(best tree - log Z) can never exceed the root posterior."""
        rng = np.random.default_rng(42)
        tables = oracles.random_tables(scg, 5, rng)
        ic = inside(scg, tables)
        probs = classify(scg, tables, ic).probabilities
        for name, p in probs.items():
            v = viterbi_score(scg, tables, name)
            assert math.exp(v - ic.log_z) <= p + 1e-12
