"""Comparisons between predspec objects and the brute-force oracles."""

import numpy as np

import oracles
from predspec import TokenStream, build_sam, compute_occurrences, distinct_substring_count
from predspec.spectrum import global_kl_spectrum, global_next_distribution, state_next_distribution


def check_against_oracle(tokens, a):
    """Every distinct substring must land in the state whose endpos class it belongs to."""
    seq = oracles.as_key(tokens)
    table = oracles.endpos_table(seq)
    trans = [a.state(i).transitions for i in range(a.n_states)]
    state_of = {seq[:0]: 0}
    n = len(seq)
    for i in range(n):
        s = 0
        for j in range(i, n):
            s = trans[s][seq[j]]
            state_of.setdefault(seq[i:j + 1], s)
    by_state = {}
    for w, s in state_of.items():
        if w:
            by_state.setdefault(s, []).append(w)
    # states <-> endpos classes, bijectively
    assert len(by_state) == a.n_states - 1
    assert len(set(table.values())) == a.n_states - 1
    for s, words in by_state.items():
        endpos = {table[w] for w in words}
        assert len(endpos) == 1
        (e,) = endpos
        assert a.occ[s] == len(e)
        assert a.length[s] == max(len(w) for w in words)
        assert a.length[a.link[s]] == min(len(w) for w in words) - 1
    # transitions are exactly the one-token extensions that stay substrings
    expected = {(state_of[w[:-1]], w[-1], state_of[w]) for w in table}
    got = {(s, t, d) for s in range(a.n_states) for t, d in trans[s].items()}
    assert got == expected
    assert distinct_substring_count(a) == len(table)
    return table


def spectrum_oracle_check(tokens, vocab):
    s = TokenStream(tokens, vocab)
    a = compute_occurrences(build_sam(s))
    brute = oracles.global_kl_brute(tokens)
    classes = oracles.endpos_classes(tokens)
    sp = global_kl_spectrum(a, global_next_distribution(s))
    contrib = dict(zip(sp.state_ids.tolist(), sp.weights.tolist()))
    assert len(classes) == len(sp)
    # one representative per class; class membership itself is check_against_oracle's job
    for e, words in classes.items():
        st_id = a.walk(words[0])
        mu, p, E = brute[e]
        d = state_next_distribution(a, st_id)
        if p is None:
            assert d is None
        else:
            got = d.as_dict()
            assert got.keys() == p.keys()
            for t in p:
                assert abs(got[t] - p[t]) <= 1e-9
        assert abs(contrib[st_id] - E) <= 1e-9
        # counts never exceed occ; equality iff no occurrence ends at the last position
        toks, tgts = a.transitions(st_id)
        assert a.occ[tgts].sum() <= a.occ[st_id]
        assert (a.occ[tgts].sum() == a.occ[st_id]) == (len(tokens) not in e)
    mu_total = sum(brute[e][0] for e in classes)
    assert abs(mu_total - 1) < 1e-12
    assert np.all(sp.weights >= 0)
    assert np.all(np.diff(sp.weights) <= 0)


def kernels_of(a):
    out = {}
    for s in range(1, a.n_states):
        d = state_next_distribution(a, s)
        if d is not None:
            out[s] = d.as_dict()
    return out
