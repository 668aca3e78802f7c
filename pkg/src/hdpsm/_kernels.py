"""Compiled inner loops over the array-backed franchise state.

Every kernel takes the state as one tuple ``st`` (see ``CrfState.arrays``):

    tokens, doc_start, doc_of_word, table_of_word, table_size, table_topic,
    table_hw, doc_tables, topic_tables, topic_words, topic_term, topic_label,
    ctr

Tables live in per-document slots: table ``t`` of document ``j`` is global
slot ``doc_start[j] + t`` (a document never has more tables than words).
Topics live in slots of the ``topic_*`` arrays; a free slot has label -1.
``ctr`` holds [m_total, K, next_label, topics_created, topics_removed].

Randomness comes in as pre-drawn uniforms so results depend only on the
caller's numpy Generator. Kernels that may create topics stop early when
every topic slot is taken and return their resume position; the caller
grows the arrays and calls again.
"""

import math

import numpy as np
from numba import njit

M_TOTAL, N_TOPICS, NEXT_LABEL, CREATED, REMOVED = range(5)


@njit(cache=True)
def alloc_topic(st):
    label = st[11]
    ctr = st[12]
    for s in range(label.shape[0]):
        if label[s] < 0:
            label[s] = ctr[NEXT_LABEL]
            ctr[NEXT_LABEL] += 1
            ctr[N_TOPICS] += 1
            ctr[CREATED] += 1
            return s
    return -1


@njit(cache=True)
def free_topic(st, s):
    st[11][s] = -1
    st[12][N_TOPICS] -= 1
    st[12][REMOVED] += 1


@njit(cache=True)
def seat(st, w, t, s):
    """Seat word ``w`` at local table ``t``; ``s`` is the topic slot used only
    when the table is not yet active."""
    (tokens, doc_start, doc_of_word, table_of_word, table_size, table_topic,
     table_hw, doc_tables, topic_tables, topic_words, topic_term, _, ctr) = st
    j = doc_of_word[w]
    g = doc_start[j] + t
    if table_topic[g] < 0:
        table_topic[g] = s
        doc_tables[j] += 1
        topic_tables[s] += 1
        ctr[M_TOTAL] += 1
        if t + 1 > table_hw[j]:
            table_hw[j] = t + 1
    else:
        s = table_topic[g]
    table_of_word[w] = t
    table_size[g] += 1
    topic_words[s] += 1
    topic_term[s, tokens[w]] += 1


@njit(cache=True)
def unseat(st, w):
    (tokens, doc_start, doc_of_word, table_of_word, table_size, table_topic,
     table_hw, doc_tables, topic_tables, topic_words, topic_term, _, ctr) = st
    j = doc_of_word[w]
    t = table_of_word[w]
    g = doc_start[j] + t
    s = table_topic[g]
    table_of_word[w] = -1
    table_size[g] -= 1
    topic_words[s] -= 1
    topic_term[s, tokens[w]] -= 1
    if table_size[g] == 0:
        table_topic[g] = -1
        doc_tables[j] -= 1
        topic_tables[s] -= 1
        ctr[M_TOTAL] -= 1
        hw = table_hw[j]
        while hw > 0 and table_topic[doc_start[j] + hw - 1] < 0:
            hw -= 1
        table_hw[j] = hw
        if topic_tables[s] == 0:
            free_topic(st, s)


@njit(cache=True)
def move_table(st, g, s_new):
    """Move every word of table slot ``g`` to topic slot ``s_new`` at once."""
    (tokens, doc_start, doc_of_word, table_of_word, table_size, table_topic,
     _, _, topic_tables, topic_words, topic_term, _, _) = st
    s_old = table_topic[g]
    if s_old == s_new:
        return
    j = doc_of_word[g]
    t = g - doc_start[j]
    for w in range(doc_start[j], doc_start[j + 1]):
        if table_of_word[w] == t:
            topic_term[s_old, tokens[w]] -= 1
            topic_term[s_new, tokens[w]] += 1
    n = table_size[g]
    topic_words[s_old] -= n
    topic_words[s_new] += n
    topic_tables[s_old] -= 1
    topic_tables[s_new] += 1
    table_topic[g] = s_new
    if topic_tables[s_old] == 0:
        free_topic(st, s_old)


@njit(cache=True)
def pick(weights, n, u):
    total = 0.0
    for i in range(n):
        total += weights[i]
    r = u * total
    acc = 0.0
    for i in range(n):
        acc += weights[i]
        if r < acc:
            return i
    for i in range(n - 1, -1, -1):
        if weights[i] > 0.0:
            return i
    return n - 1


@njit(cache=True)
def word_predictive(st, v, gamma, eta, f):
    """Fill ``f[s]`` with the predictive probability of term ``v`` under each
    active topic; return the new-table likelihood with the top level
    integrated out."""
    topic_tables, topic_words, topic_term, label, ctr = st[8], st[9], st[10], st[11], st[12]
    V = topic_term.shape[1]
    veta = V * eta
    mass = gamma / V
    for s in range(label.shape[0]):
        if label[s] >= 0:
            f[s] = (topic_term[s, v] + eta) / (topic_words[s] + veta)
            mass += topic_tables[s] * f[s]
        else:
            f[s] = 0.0
    return mass / (ctr[M_TOTAL] + gamma)


@njit(cache=True)
def table_weights(st, w, alpha0, p_new, f, wt):
    """Unnormalized table choice for an unseated word; entry ``hw`` is the
    new-table branch. Returns ``hw``."""
    doc_start, doc_of_word, table_size, table_topic, table_hw = st[1], st[2], st[4], st[5], st[6]
    j = doc_of_word[w]
    base = doc_start[j]
    hw = table_hw[j]
    for t in range(hw):
        s = table_topic[base + t]
        if s >= 0:
            wt[t] = table_size[base + t] * f[s]
        else:
            wt[t] = 0.0
    wt[hw] = alpha0 * p_new
    return hw


@njit(cache=True)
def new_table_topic_weights(st, v, gamma, f, wk):
    """Unnormalized topic choice for a fresh table holding a word of term
    ``v``; the last entry is the new-topic branch."""
    topic_tables, topic_term, label = st[8], st[10], st[11]
    K = label.shape[0]
    V = topic_term.shape[1]
    for s in range(K):
        wk[s] = topic_tables[s] * f[s] if label[s] >= 0 else 0.0
    wk[K] = gamma / V
    return K


@njit(cache=True)
def free_table_index(st, j):
    doc_start, table_topic = st[1], st[5]
    base = doc_start[j]
    for t in range(doc_start[j + 1] - base):
        if table_topic[base + t] < 0:
            return t
    return -1


@njit(cache=True)
def sample_seat(st, w, u1, u2, alpha0, gamma, eta, f, wt, wk):
    """Draw a table (and a topic, for a new table) for the unseated word ``w``
    and seat it. Returns 1 if a new table was opened."""
    v = st[0][w]
    j = st[2][w]
    p_new = word_predictive(st, v, gamma, eta, f)
    hw = table_weights(st, w, alpha0, p_new, f, wt)
    t = pick(wt, hw + 1, u1)
    if t < hw:
        seat(st, w, t, -1)
        return 0
    K = new_table_topic_weights(st, v, gamma, f, wk)
    s = pick(wk, K + 1, u2)
    if s == K:
        s = alloc_topic(st)
    seat(st, w, free_table_index(st, j), s)
    return 1


@njit(cache=True)
def sweep_words(st, start, u, alpha0, gamma, eta):
    """Resample the table of every word from ``start`` on, in corpus order."""
    N = st[0].shape[0]
    Kcap = st[11].shape[0]
    f = np.empty(Kcap)
    wt = np.empty(N + 1)
    wk = np.empty(Kcap + 1)
    for w in range(start, N):
        if st[12][N_TOPICS] >= Kcap:
            return w
        unseat(st, w)
        sample_seat(st, w, u[2 * w], u[2 * w + 1], alpha0, gamma, eta, f, wt, wk)
    return N


@njit(cache=True)
def init_sequential(st, order, start, u, alpha0, gamma, eta):
    """Add words one at a time in ``order``, each drawn from the predictive
    given the words added before it."""
    N = order.shape[0]
    Kcap = st[11].shape[0]
    f = np.empty(Kcap)
    wt = np.empty(st[0].shape[0] + 1)
    wk = np.empty(Kcap + 1)
    for idx in range(start, N):
        if st[12][N_TOPICS] >= Kcap:
            return idx
        sample_seat(st, order[idx], u[2 * idx], u[2 * idx + 1],
                    alpha0, gamma, eta, f, wt, wk)
    return N


@njit(cache=True)
def table_tokens(st, g, out):
    tokens, doc_start, doc_of_word, table_of_word = st[0], st[1], st[2], st[3]
    j = doc_of_word[g]
    t = g - doc_start[j]
    n = 0
    for w in range(doc_start[j], doc_start[j + 1]):
        if table_of_word[w] == t:
            out[n] = tokens[w]
            n += 1
    return n


@njit(cache=True)
def log_table_cond(row, total, toks, n, eta):
    """Log predictive of ``toks[:n]`` given a topic with term counts ``row``.

    Accumulates the chain rule word by word, temporarily adding each word to
    ``row``; ``row`` is restored before returning."""
    veta = row.shape[0] * eta
    acc = 0.0
    for i in range(n):
        v = toks[i]
        acc += math.log((row[v] + eta) / (total + i + veta))
        row[v] += 1
    for i in range(n):
        row[toks[i]] -= 1
    return acc


@njit(cache=True)
def sample_table_topic(st, g, u, gamma, eta, toks, lw, scratch):
    """Resample the topic of active table slot ``g``, moving its words in
    bulk. Returns 1 if a new topic was opened."""
    topic_tables, topic_words, topic_term, label = st[8], st[9], st[10], st[11]
    table_topic = st[5]
    K = label.shape[0]
    n = table_tokens(st, g, toks)
    s_old = table_topic[g]
    for i in range(n):
        topic_term[s_old, toks[i]] -= 1
    topic_words[s_old] -= n
    topic_tables[s_old] -= 1
    if topic_tables[s_old] == 0:
        free_topic(st, s_old)

    mx = -np.inf
    for s in range(K):
        if label[s] >= 0:
            lw[s] = math.log(topic_tables[s]) + log_table_cond(
                topic_term[s], topic_words[s], toks, n, eta)
            if lw[s] > mx:
                mx = lw[s]
        else:
            lw[s] = -np.inf
    lw[K] = math.log(gamma) + log_table_cond(scratch, 0, toks, n, eta)
    if lw[K] > mx:
        mx = lw[K]
    for s in range(K + 1):
        lw[s] = math.exp(lw[s] - mx)
    s_new = pick(lw, K + 1, u)
    created = 0
    if s_new == K:
        s_new = alloc_topic(st)
        created = 1
    for i in range(n):
        topic_term[s_new, toks[i]] += 1
    topic_words[s_new] += n
    topic_tables[s_new] += 1
    table_topic[g] = s_new
    return created


@njit(cache=True)
def sweep_tables(st, start, u, gamma, eta):
    """Resample the topic of every active table slot from ``start`` on."""
    table_topic = st[5]
    Kcap = st[11].shape[0]
    V = st[10].shape[1]
    toks = np.empty(st[0].shape[0], dtype=np.int64)
    lw = np.empty(Kcap + 1)
    scratch = np.zeros(V, dtype=st[10].dtype)
    G = table_topic.shape[0]
    for g in range(start, G):
        if table_topic[g] < 0:
            continue
        if st[12][N_TOPICS] >= Kcap:
            return g
        sample_table_topic(st, g, u[g], gamma, eta, toks, lw, scratch)
    return G


@njit(cache=True)
def seq_alloc(toks, off, order, a1, a2, forced, u, n_terms, eta):
    """Sequential allocation restricted Gibbs over two launch topics.

    Table ``i`` owns ``toks[off[i]:off[i+1]]``. Anchors ``a1``/``a2`` seed
    sides 0/1; the tables in ``order`` are then visited in turn. A
    nonnegative ``forced[r]`` replays that side instead of sampling it.
    Returns (sides, log_q, side-0 counts, side-1 counts, m1, m2).
    """
    c1 = np.zeros(n_terms, dtype=np.int64)
    c2 = np.zeros(n_terms, dtype=np.int64)
    n1 = 0
    n2 = 0
    for p in range(off[a1], off[a1 + 1]):
        c1[toks[p]] += 1
        n1 += 1
    for p in range(off[a2], off[a2 + 1]):
        c2[toks[p]] += 1
        n2 += 1
    m1 = 1
    m2 = 1
    log_q = 0.0
    sides = np.empty(order.shape[0], dtype=np.int64)
    for r in range(order.shape[0]):
        i = order[r]
        seg = toks[off[i]:off[i + 1]]
        n = seg.shape[0]
        l1 = math.log(m1) + log_table_cond(c1, n1, seg, n, eta)
        l2 = math.log(m2) + log_table_cond(c2, n2, seg, n, eta)
        mx = max(l1, l2)
        lse = mx + math.log(math.exp(l1 - mx) + math.exp(l2 - mx))
        if forced[r] >= 0:
            side = forced[r]
        else:
            side = 0 if u[r] < math.exp(l1 - lse) else 1
        sides[r] = side
        if side == 0:
            log_q += l1 - lse
            for p in range(n):
                c1[seg[p]] += 1
            n1 += n
            m1 += 1
        else:
            log_q += l2 - lse
            for p in range(n):
                c2[seg[p]] += 1
            n2 += n
            m2 += 1
    return sides, log_q, c1, c2, m1, m2


@njit(cache=True)
def heldout_doc(tokens, phi, p0, weights_k, alpha0, gamma_share, n_sweeps, u, theta_out):
    """Document-local Gibbs with frozen global topics.

    ``phi[k, v]`` are predictive term probabilities of the fitted topics,
    ``p0[v]`` the top-level base predictive, ``weights_k[k]`` the table
    counts of fitted topics, and ``gamma_share`` the new-topic mass (the
    new topic emits terms uniformly). Returns the per-word leave-one-out
    predictive probabilities averaged over the second half of the sweeps;
    ``theta_out`` receives the averaged per-topic word shares (last entry:
    words on new topics).
    """
    n = tokens.shape[0]
    K, V = phi.shape
    tab = np.full(n, -1, dtype=np.int64)
    tsize = np.zeros(n, dtype=np.int64)
    ttopic = np.full(n, -1, dtype=np.int64)
    wt = np.empty(n + 1)
    wk = np.empty(K + 1)
    lw = np.empty(K + 1)
    toks = np.empty(n, dtype=np.int64)
    acc = np.zeros(n)
    theta_out[:] = 0.0
    n_kept = 0
    ui = 0
    for sweep in range(n_sweeps + 1):
        for i in range(n):
            v = tokens[i]
            if tab[i] >= 0:
                tsize[tab[i]] -= 1
                if tsize[tab[i]] == 0:
                    ttopic[tab[i]] = -1
                tab[i] = -1
            for t in range(n):
                if ttopic[t] < 0:
                    wt[t] = 0.0
                elif ttopic[t] == K:
                    wt[t] = tsize[t] / V
                else:
                    wt[t] = tsize[t] * phi[ttopic[t], v]
            wt[n] = alpha0 * p0[v]
            t = pick(wt, n + 1, u[ui])
            ui += 1
            if t == n:
                for k in range(K):
                    wk[k] = weights_k[k] * phi[k, v]
                wk[K] = gamma_share / V
                k = pick(wk, K + 1, u[ui])
                ui += 1
                for t2 in range(n):
                    if ttopic[t2] < 0:
                        t = t2
                        break
                ttopic[t] = k
            tab[i] = t
            tsize[t] += 1
        for t in range(n):
            if ttopic[t] < 0:
                continue
            m = 0
            for i in range(n):
                if tab[i] == t:
                    toks[m] = tokens[i]
                    m += 1
            mx = -np.inf
            for k in range(K + 1):
                if k < K:
                    if weights_k[k] <= 0.0:
                        lw[k] = -np.inf
                        continue
                    lw[k] = math.log(weights_k[k])
                    for p in range(m):
                        lw[k] += math.log(phi[k, toks[p]])
                else:
                    lw[k] = math.log(gamma_share) - m * math.log(V)
                if lw[k] > mx:
                    mx = lw[k]
            for k in range(K + 1):
                lw[k] = math.exp(lw[k] - mx)
            ttopic[t] = pick(lw, K + 1, u[ui])
            ui += 1
        if sweep == 0 or sweep <= n_sweeps // 2:
            continue
        n_kept += 1
        for i in range(n):
            v = tokens[i]
            own = tab[i]
            tot = 0.0
            for t in range(n):
                sz = tsize[t] - (1 if t == own else 0)
                if ttopic[t] < 0 or sz == 0:
                    continue
                if ttopic[t] == K:
                    tot += sz / V
                else:
                    tot += sz * phi[ttopic[t], v]
            tot += alpha0 * p0[v]
            acc[i] += tot / (n - 1 + alpha0)
            theta_out[ttopic[own]] += 1.0 / n
    if n_kept > 0:
        for i in range(n):
            acc[i] /= n_kept
        for k in range(K + 1):
            theta_out[k] /= n_kept
    return acc
