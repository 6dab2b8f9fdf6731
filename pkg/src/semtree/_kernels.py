"""Compiled chart kernels.

Everything here operates on flat numpy arrays in natural-log space and is
compiled with numba.  A streaming max-shifted accumulator implements
logsumexp in a single pass; -inf is the additive identity and
short-circuits accumulation.

Array conventions (T tokens, L labels, nb binary rules, nu unary rules):

    b_left, b_right, b_parent : int32[nb]   binary rule children/parent
    b_score                   : float64[nb] shared rule scalars
    u_child, u_parent         : int32[nu]
    u_score                   : float64[nu]
    terminal                  : float64[T, L]      (-inf off preterminals)
    label                     : float64[T+1, T+1, L]
    span                      : float64[T+1, T+1]
    alpha, beta               : float64[T+1, T+1, L]

The width-1 cell combines the terminal score of the pre-unary label with
the unary rule scalar plus the label/span scores of the post-unary node;
wider cells follow the binary recursion.
"""

import numpy as np
from numba import njit

NEG_INF = float("-inf")


@njit(cache=True)
def inside(T, L, b_left, b_right, b_parent, b_score,
           u_child, u_parent, u_score, terminal, label, span):
    alpha = np.full((T + 1, T + 1, L), NEG_INF)
    m = np.empty(L)
    s = np.empty(L)
    for i in range(T):
        for a in range(L):
            m[a] = NEG_INF
            s[a] = 0.0
        for r in range(u_child.shape[0]):
            v = terminal[i, u_child[r]] + u_score[r]
            if v == NEG_INF:
                continue
            a = u_parent[r]
            if v <= m[a]:
                s[a] += np.exp(v - m[a])
            else:
                s[a] = s[a] * np.exp(m[a] - v) + 1.0 if m[a] != NEG_INF else 1.0
                m[a] = v
        for a in range(L):
            if m[a] != NEG_INF:
                alpha[i, i + 1, a] = (m[a] + np.log(s[a])
                                      + label[i, i + 1, a] + span[i, i + 1])
    for w in range(2, T + 1):
        for i in range(T - w + 1):
            j = i + w
            for a in range(L):
                m[a] = NEG_INF
                s[a] = 0.0
            for r in range(b_left.shape[0]):
                b = b_left[r]
                c = b_right[r]
                a = b_parent[r]
                sc = b_score[r]
                for k in range(i + 1, j):
                    lv = alpha[i, k, b]
                    if lv == NEG_INF:
                        continue
                    rv = alpha[k, j, c]
                    if rv == NEG_INF:
                        continue
                    v = sc + lv + rv
                    if v <= m[a]:
                        s[a] += np.exp(v - m[a])
                    else:
                        s[a] = (s[a] * np.exp(m[a] - v) + 1.0
                                if m[a] != NEG_INF else 1.0)
                        m[a] = v
            for a in range(L):
                if m[a] != NEG_INF:
                    alpha[i, j, a] = (m[a] + np.log(s[a])
                                      + label[i, j, a] + span[i, j])
    return alpha


@njit(cache=True)
def outside(T, L, b_left, b_right, b_parent, b_score,
            terminal, label, span, alpha, root_ids):
    """Top-down companion of inside().

    root_ids selects which full-span labels are seeded with log 1; passing
    a single gold root yields the charts conditioned on that root.
    """
    acc_m = np.full((T + 1, T + 1, L), NEG_INF)
    acc_s = np.zeros((T + 1, T + 1, L))
    beta = np.full((T + 1, T + 1, L), NEG_INF)
    for idx in range(root_ids.shape[0]):
        acc_m[0, T, root_ids[idx]] = 0.0
        acc_s[0, T, root_ids[idx]] = 1.0
    for w in range(T, 1, -1):
        for i in range(T - w + 1):
            j = i + w
            for a in range(L):
                if acc_m[i, j, a] != NEG_INF:
                    beta[i, j, a] = acc_m[i, j, a] + np.log(acc_s[i, j, a])
            for r in range(b_left.shape[0]):
                a = b_parent[r]
                pa = beta[i, j, a]
                if pa == NEG_INF:
                    continue
                base = b_score[r] + label[i, j, a] + span[i, j] + pa
                b = b_left[r]
                c = b_right[r]
                for k in range(i + 1, j):
                    lv = alpha[i, k, b]
                    rv = alpha[k, j, c]
                    if lv == NEG_INF or rv == NEG_INF:
                        continue
                    v = base + rv
                    if v <= acc_m[i, k, b]:
                        acc_s[i, k, b] += np.exp(v - acc_m[i, k, b])
                    else:
                        acc_s[i, k, b] = (acc_s[i, k, b]
                                          * np.exp(acc_m[i, k, b] - v) + 1.0
                                          if acc_m[i, k, b] != NEG_INF else 1.0)
                        acc_m[i, k, b] = v
                    v = base + lv
                    if v <= acc_m[k, j, c]:
                        acc_s[k, j, c] += np.exp(v - acc_m[k, j, c])
                    else:
                        acc_s[k, j, c] = (acc_s[k, j, c]
                                          * np.exp(acc_m[k, j, c] - v) + 1.0
                                          if acc_m[k, j, c] != NEG_INF else 1.0)
                        acc_m[k, j, c] = v
    for i in range(T):
        for a in range(L):
            if acc_m[i, i + 1, a] != NEG_INF:
                beta[i, i + 1, a] = (acc_m[i, i + 1, a]
                                     + np.log(acc_s[i, i + 1, a]))
    return beta


@njit(cache=True)
def marginals(T, L, b_left, b_right, b_parent, b_score,
              u_child, u_parent, u_score, terminal, label, span,
              alpha, beta, log_z):
    """Expected anchored-rule counts, i.e. d log Z / d (each table entry).

    Binary and unary rule marginals are summed over anchors (the scalars
    are shared); label marginals are per-node, span marginals per-span,
    terminal marginals per (position, preterminal).
    """
    g_bin = np.zeros(b_left.shape[0])
    g_un = np.zeros(u_child.shape[0])
    g_term = np.zeros((T, L))
    g_label = np.zeros((T + 1, T + 1, L))
    g_span = np.zeros((T + 1, T + 1))
    for w in range(2, T + 1):
        for i in range(T - w + 1):
            j = i + w
            for a in range(L):
                av = alpha[i, j, a]
                bv = beta[i, j, a]
                if av == NEG_INF or bv == NEG_INF:
                    continue
                mu = np.exp(av + bv - log_z)
                g_label[i, j, a] = mu
                g_span[i, j] += mu
            for r in range(b_left.shape[0]):
                a = b_parent[r]
                bv = beta[i, j, a]
                if bv == NEG_INF:
                    continue
                base = b_score[r] + label[i, j, a] + span[i, j] + bv - log_z
                b = b_left[r]
                c = b_right[r]
                for k in range(i + 1, j):
                    lv = alpha[i, k, b]
                    rv = alpha[k, j, c]
                    if lv == NEG_INF or rv == NEG_INF:
                        continue
                    g_bin[r] += np.exp(base + lv + rv)
    for i in range(T):
        for a in range(L):
            av = alpha[i, i + 1, a]
            bv = beta[i, i + 1, a]
            if av == NEG_INF or bv == NEG_INF:
                continue
            mu = np.exp(av + bv - log_z)
            g_label[i, i + 1, a] = mu
            g_span[i, i + 1] += mu
        for r in range(u_child.shape[0]):
            a = u_parent[r]
            bv = beta[i, i + 1, a]
            if bv == NEG_INF:
                continue
            v = (terminal[i, u_child[r]] + u_score[r] + label[i, i + 1, a]
                 + span[i, i + 1] + bv - log_z)
            if v == NEG_INF:
                continue
            mu = np.exp(v)
            g_un[r] += mu
            g_term[i, u_child[r]] += mu
    return g_bin, g_un, g_term, g_label, g_span


@njit(cache=True)
def viterbi(T, L, b_left, b_right, b_parent, b_score,
            u_child, u_parent, u_score, terminal, label, span):
    """Max-score chart with backpointers.

    Ties break toward the smallest split, then the smallest rule id
    (strict improvement required, splits iterated outermost).
    """
    best = np.full((T + 1, T + 1, L), NEG_INF)
    bp_rule = np.full((T + 1, T + 1, L), -1, dtype=np.int32)
    bp_split = np.full((T + 1, T + 1, L), -1, dtype=np.int32)
    for i in range(T):
        for r in range(u_child.shape[0]):
            v = terminal[i, u_child[r]] + u_score[r]
            if v == NEG_INF:
                continue
            a = u_parent[r]
            if v > best[i, i + 1, a]:
                best[i, i + 1, a] = v
                bp_rule[i, i + 1, a] = r
        for a in range(L):
            if best[i, i + 1, a] != NEG_INF:
                best[i, i + 1, a] += label[i, i + 1, a] + span[i, i + 1]
    for w in range(2, T + 1):
        for i in range(T - w + 1):
            j = i + w
            for k in range(i + 1, j):
                for r in range(b_left.shape[0]):
                    lv = best[i, k, b_left[r]]
                    if lv == NEG_INF:
                        continue
                    rv = best[k, j, b_right[r]]
                    if rv == NEG_INF:
                        continue
                    v = b_score[r] + lv + rv
                    a = b_parent[r]
                    if v > best[i, j, a]:
                        best[i, j, a] = v
                        bp_rule[i, j, a] = r
                        bp_split[i, j, a] = k
            for a in range(L):
                if best[i, j, a] != NEG_INF:
                    best[i, j, a] += label[i, j, a] + span[i, j]
    return best, bp_rule, bp_split


@njit(cache=True)
def skeleton_inside(T, span):
    """Inside sums over unlabeled full binary bracketings.

    Only spans of width >= 2 carry a potential; the cell value includes
    the cell's own span score.  inside[0, T] is log Z'.
    """
    table = np.full((T + 1, T + 1), NEG_INF)
    for i in range(T):
        table[i, i + 1] = 0.0
    for w in range(2, T + 1):
        for i in range(T - w + 1):
            j = i + w
            m = NEG_INF
            s = 0.0
            for k in range(i + 1, j):
                v = table[i, k] + table[k, j]
                if v <= m:
                    s += np.exp(v - m)
                else:
                    s = s * np.exp(m - v) + 1.0 if m != NEG_INF else 1.0
                    m = v
            table[i, j] = m + np.log(s) + span[i, j]
    return table


@njit(cache=True)
def skeleton_marginals(T, span, inside_tab):
    """P(span in bracketing) for every width >= 2 span."""
    out_m = np.full((T + 1, T + 1), NEG_INF)
    out_s = np.zeros((T + 1, T + 1))
    outside_tab = np.full((T + 1, T + 1), NEG_INF)
    out_m[0, T] = 0.0
    out_s[0, T] = 1.0
    for w in range(T, 1, -1):
        for i in range(T - w + 1):
            j = i + w
            if out_m[i, j] == NEG_INF:
                continue
            outside_tab[i, j] = out_m[i, j] + np.log(out_s[i, j])
            base = outside_tab[i, j] + span[i, j]
            for k in range(i + 1, j):
                v = base + inside_tab[k, j]
                if v <= out_m[i, k]:
                    out_s[i, k] += np.exp(v - out_m[i, k])
                else:
                    out_s[i, k] = (out_s[i, k] * np.exp(out_m[i, k] - v) + 1.0
                                   if out_m[i, k] != NEG_INF else 1.0)
                    out_m[i, k] = v
                v = base + inside_tab[i, k]
                if v <= out_m[k, j]:
                    out_s[k, j] += np.exp(v - out_m[k, j])
                else:
                    out_s[k, j] = (out_s[k, j] * np.exp(out_m[k, j] - v) + 1.0
                                   if out_m[k, j] != NEG_INF else 1.0)
                    out_m[k, j] = v
    log_z = inside_tab[0, T]
    mu = np.zeros((T + 1, T + 1))
    for w in range(2, T + 1):
        for i in range(T - w + 1):
            j = i + w
            if outside_tab[i, j] != NEG_INF:
                mu[i, j] = np.exp(inside_tab[i, j] + outside_tab[i, j] - log_z)
    return mu
