"""Kernel quotient: merge automaton states whose next-token kernels are close in
Jensen-Shannon divergence, then score the merged states like ordinary ones.

Clustering is greedy and sequential. States are visited by descending mass (ties by
state id); each joins the lowest-numbered cluster whose running mass-weighted centroid
lies within ``epsilon`` nats, else it opens a new cluster.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numba
import numpy as np

from predspec.automaton import Automaton, sort_descending, state_masses
from predspec.spectrum import Distribution, Spectrum, edge_kernels, kl_divergence

LN2 = math.log(2.0)
DEFAULT_EPSILON = 0.05
# absorbs centroid rounding so exactly-equal kernels still merge at epsilon = 0
_JSD_TOL = 1e-12


@dataclass
class Cluster:
    members: list[int]
    mass: float
    kernel: Distribution


@dataclass
class QuotientStates:
    clusters: list[Cluster]
    epsilon: float
    source_size: int = 0

    def __len__(self):
        return len(self.clusters)

    def total_mass(self) -> float:
        return math.fsum(c.mass for c in self.clusters)

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n_clusters": len(self.clusters),
            "clusters": [
                {
                    "id": i,
                    "mass": c.mass,
                    "members": c.members,
                    "kernel": {str(t): p for t, p in c.kernel.as_dict().items()},
                }
                for i, c in enumerate(self.clusters)
            ],
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def jensen_shannon(p_tokens, p_probs, q_weights: dict, q_mass: float) -> float:
    """JSD(p || q) in nats where ``q[t] = q_weights[t] / q_mass``.

    Only p's support is visited; q's mass outside it contributes ``q * ln 2 / 2``.
    """
    inner = 0.0
    q_on_p = 0.0
    for t, pt in zip(p_tokens, p_probs):
        qt = q_weights.get(t, 0.0) / q_mass
        m = 0.5 * (pt + qt)
        inner += pt * math.log(pt / m)
        if qt > 0.0:
            inner += qt * math.log(qt / m)
            q_on_p += qt
    return 0.5 * inner + 0.5 * LN2 * max(0.0, 1.0 - q_on_p)


def jsd(p: Distribution, q: Distribution) -> float:
    """JSD between two explicit distributions (convenience / test helper)."""
    mask = p.probs > 0
    return jensen_shannon(p.tokens[mask].tolist(), p.probs[mask].tolist(), q.as_dict(), 1.0)


@numba.njit(cache=True)
def _greedy(visit, offsets, tokens, probs, mu, threshold, vocab):
    """First-fit clustering. Posting lists per token hold (cluster, sum of mu * p) entries,
    so a state only touches clusters sharing a token with it; the rest sit at JSD = ln 2."""
    n_visit = visit.shape[0]
    cap = 0
    for s in visit:
        cap += offsets[s + 1] - offsets[s]
    head = np.full(vocab, -1, np.int64)
    e_cluster = np.empty(cap, np.int64)
    e_token = np.empty(cap, np.int64)
    e_acc = np.empty(cap, np.float64)
    e_next = np.empty(cap, np.int64)
    n_entries = 0

    mass = np.zeros(n_visit, np.float64)
    assign = np.empty(n_visit, np.int64)
    inner = np.zeros(n_visit, np.float64)
    qsum = np.zeros(n_visit, np.float64)
    touched = np.zeros(n_visit, np.uint8)
    touched_list = np.empty(n_visit, np.int64)
    n_clusters = 0
    ln2 = np.log(2.0)

    for v in range(n_visit):
        s = visit[v]
        lo, hi = offsets[s], offsets[s + 1]
        base = 0.0
        n_touched = 0
        for j in range(lo, hi):
            p = probs[j]
            base += p * ln2
            e = head[tokens[j]]
            while e != -1:
                c = e_cluster[e]
                if touched[c] == 0:
                    touched[c] = 1
                    touched_list[n_touched] = c
                    n_touched += 1
                    inner[c] = 0.0
                    qsum[c] = 0.0
                q = e_acc[e] / mass[c]
                m = 0.5 * (p + q)
                inner[c] += p * np.log(p / m) + q * np.log(q / m) - p * ln2
                qsum[c] += q
                e = e_next[e]

        best = -1
        for i in range(n_touched):
            c = touched_list[i]
            d = 0.5 * (base + inner[c]) + 0.5 * ln2 * max(0.0, 1.0 - qsum[c])
            if d <= threshold and (best == -1 or c < best):
                best = c
        if 0.5 * base + 0.5 * ln2 <= threshold:
            # an untouched cluster also qualifies; take the lowest such id
            for c in range(n_clusters):
                if touched[c] == 0:
                    if best == -1 or c < best:
                        best = c
                    break
        for i in range(n_touched):
            touched[touched_list[i]] = 0

        fresh = best == -1
        if fresh:
            best = n_clusters
            n_clusters += 1
        assign[v] = best
        ms = mu[s]
        mass[best] += ms
        for j in range(lo, hi):
            t = tokens[j]
            found = -1
            if not fresh:
                e = head[t]
                while e != -1:
                    if e_cluster[e] == best:
                        found = e
                        break
                    e = e_next[e]
            if found == -1:
                found = n_entries
                n_entries += 1
                e_cluster[found] = best
                e_token[found] = t
                e_acc[found] = 0.0
                e_next[found] = head[t]
                head[t] = found
            e_acc[found] += ms * probs[j]

    return (
        assign,
        n_clusters,
        mass[:n_clusters].copy(),
        e_cluster[:n_entries].copy(),
        e_token[:n_entries].copy(),
        e_acc[:n_entries].copy(),
    )


def kernel_quotient(a: Automaton, epsilon: float = DEFAULT_EPSILON) -> QuotientStates:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    mu = state_masses(a)
    _, probs = edge_kernels(a)
    has_kernel = np.flatnonzero(a.out_degree() > 0)
    has_kernel = has_kernel[has_kernel != a.root]
    visit = has_kernel[sort_descending(mu[has_kernel])]
    vocab = int(a.tokens.max(initial=0)) + 1

    assign, n_clusters, mass, e_cluster, e_token, e_acc = _greedy(
        visit, a.offsets, a.tokens, probs, mu, epsilon + _JSD_TOL, vocab
    )

    members: list[list[int]] = [[] for _ in range(n_clusters)]
    for s, c in zip(visit.tolist(), assign.tolist()):
        members[c].append(s)
    order = np.lexsort((e_token, e_cluster))
    e_cluster, e_token, e_acc = e_cluster[order], e_token[order], e_acc[order]
    bounds = np.searchsorted(e_cluster, np.arange(n_clusters + 1))
    clusters = []
    for c in range(n_clusters):
        lo, hi = bounds[c], bounds[c + 1]
        kernel = Distribution(e_token[lo:hi], e_acc[lo:hi] / mass[c])
        clusters.append(Cluster(members=members[c], mass=float(mass[c]), kernel=kernel))
    return QuotientStates(clusters=clusters, epsilon=epsilon, source_size=a.source_length)


def quotient_spectrum(q: QuotientStates, baseline: Distribution) -> Spectrum:
    contrib = np.array(
        [c.mass * max(kl_divergence(c.kernel, baseline), 0.0) for c in q.clusters],
        dtype=np.float64,
    )
    order = sort_descending(contrib)
    return Spectrum(
        weights=contrib[order],
        provenance="quotient",
        source_size=q.source_size,
    )
