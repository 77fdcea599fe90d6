"""Multi-criteria decision methods and rank aggregation.

Every method consumes a decision matrix (alternatives x criteria), weights
summing to one and a per-criterion ``minimize`` flag, and emits preference
scores. VIKOR's compromise index is a dispreference (lower is better); its
flag is carried alongside so aggregators can flip it. Rankings are
exchanged as orderings: lists of alternative indices, best first, ties
broken by index.
"""

from __future__ import annotations

from itertools import permutations, product

import numpy as np

from .errors import BudgetError, ConfigurationError

MCDM_METHODS = ("topsis", "vikor", "comet", "promethee2", "cocoso")
AGGREGATIONS = ("borda", "schulze", "kemeny_young", "plurality", "pairwise_greedy")

_EPS = 1e-12


def _as_matrix(values, weights, minimize):
    X = np.asarray(values, dtype=float)
    if X.ndim != 2:
        raise ConfigurationError("decision matrix must be 2-D")
    m, M = X.shape
    w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, dtype=float)
    if w.size != M or np.any(w < 0):
        raise ConfigurationError("weights must be nonnegative, one per criterion")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ConfigurationError("weights must sum to one")
    if minimize is None:
        flags = np.ones(M, dtype=bool)
    elif np.isscalar(minimize):
        flags = np.full(M, bool(minimize))
    else:
        flags = np.asarray(minimize, dtype=bool)
    return X, w, flags


def _minmax_benefit(X, flags):
    """Min-max normalise so that 1 is best under each criterion's direction."""
    lo, hi = X.min(axis=0), X.max(axis=0)
    rng = hi - lo
    out = np.ones_like(X)
    for j in range(X.shape[1]):
        if rng[j] < _EPS:
            continue
        if flags[j]:
            out[:, j] = (hi[j] - X[:, j]) / rng[j]
        else:
            out[:, j] = (X[:, j] - lo[j]) / rng[j]
    return out


def topsis(values, weights=None, minimize=None):
    """Closeness to the ideal solution under vector normalisation."""
    X, w, flags = _as_matrix(values, weights, minimize)
    norms = np.linalg.norm(X, axis=0)
    r = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
    v = r * w
    best = np.where(flags, v.min(axis=0), v.max(axis=0))
    worst = np.where(flags, v.max(axis=0), v.min(axis=0))
    d_best = np.linalg.norm(v - best, axis=1)
    d_worst = np.linalg.norm(v - worst, axis=1)
    denom = d_best + d_worst
    return np.divide(d_worst, denom, out=np.full(X.shape[0], 0.5), where=denom > 0)


def vikor(values, weights=None, minimize=None, v=0.5):
    """Compromise index Q; lower is better (dispreference)."""
    X, w, flags = _as_matrix(values, weights, minimize)
    d = 1.0 - _minmax_benefit(X, flags)  # normalised distance to the per-criterion best
    S = d @ w
    R = (d * w).max(axis=1)

    def spread(a):
        rng = a.max() - a.min()
        return np.zeros_like(a) if rng < _EPS else (a - a.min()) / rng

    return v * spread(S) + (1.0 - v) * spread(R)


def _triangular_memberships(x, cvs):
    c1, c2, c3 = cvs
    mu = np.zeros((x.size, 3))
    left = x <= c2
    span1 = max(c2 - c1, _EPS)
    mu[left, 0] = np.clip((c2 - x[left]) / span1, 0.0, 1.0)
    mu[left, 1] = 1.0 - mu[left, 0]
    right = ~left
    span2 = max(c3 - c2, _EPS)
    mu[right, 2] = np.clip((x[right] - c2) / span2, 0.0, 1.0)
    mu[right, 1] = 1.0 - mu[right, 2]
    return mu


def comet(values, weights=None, minimize=None):
    """Characteristic-object preferences with multilinear interpolation.

    Characteristic values per criterion are the column min, midpoint and
    max; each characteristic object is scored by one minus its weighted
    normalised distance to the per-criterion ideal, and alternatives
    interpolate those scores through products of triangular memberships.
    """
    X, w, flags = _as_matrix(values, weights, minimize)
    m, M = X.shape
    lo, hi = X.min(axis=0), X.max(axis=0)
    active = [j for j in range(M) if hi[j] - lo[j] > _EPS]
    if not active:
        return np.full(m, 0.5)
    w_act = w[active]
    if w_act.sum() <= 0:
        w_act = np.full(len(active), 1.0 / len(active))
    else:
        w_act = w_act / w_act.sum()
    cvs = [(lo[j], 0.5 * (lo[j] + hi[j]), hi[j]) for j in active]
    memberships = [
        _triangular_memberships(X[:, j], cv) for j, cv in zip(active, cvs)
    ]
    pref = np.zeros(m)
    for combo in product(range(3), repeat=len(active)):
        dist = 0.0
        for pos, (j, cv) in enumerate(zip(active, cvs)):
            val = cv[combo[pos]]
            ideal = cv[0] if flags[j] else cv[2]
            dist += w_act[pos] * abs(val - ideal) / (cv[2] - cv[0])
        score = 1.0 - dist
        weight_product = np.ones(m)
        for pos in range(len(active)):
            weight_product *= memberships[pos][:, combo[pos]]
        pref += weight_product * score
    return pref


def promethee2(values, weights=None, minimize=None):
    """Net outranking flows with a linear preference function.

    The preference threshold equals the criterion's value range, the
    indifference threshold is zero.
    """
    X, w, flags = _as_matrix(values, weights, minimize)
    m, M = X.shape
    if m < 2:
        return np.zeros(m)
    rng = X.max(axis=0) - X.min(axis=0)
    pi = np.zeros((m, m))
    for j in range(M):
        if rng[j] < _EPS:
            continue
        col = X[:, j]
        adv = col[None, :] - col[:, None] if flags[j] else col[:, None] - col[None, :]
        pi += w[j] * np.clip(adv / rng[j], 0.0, 1.0)
    phi_plus = pi.sum(axis=1) / (m - 1)
    phi_minus = pi.sum(axis=0) / (m - 1)
    return phi_plus - phi_minus


def cocoso(values, weights=None, minimize=None, lam=0.5):
    """Combined compromise scores from weighted-sum and weighted-product parts."""
    X, w, flags = _as_matrix(values, weights, minimize)
    r = _minmax_benefit(X, flags)
    S = r @ w
    P = np.sum(r ** w[None, :], axis=1)  # numpy's 0^0 = 1 is the wanted convention
    total = (P + S).sum()
    k_a = (P + S) / total if total > 0 else np.full_like(S, 1.0 / S.size)
    k_b = S / max(S.min(), _EPS) + P / max(P.min(), _EPS)
    denom = lam * S.max() + (1.0 - lam) * P.max()
    k_c = (lam * S + (1.0 - lam) * P) / denom if denom > 0 else np.zeros_like(S)
    return np.cbrt(k_a * k_b * k_c) + (k_a + k_b + k_c) / 3.0


_DISPREFERENCE = {"vikor"}


def mcdm_preferences(values, method, weights=None, minimize=None):
    """Run one method; returns ``(scores, higher_is_better)``."""
    if method not in MCDM_METHODS:
        raise ConfigurationError(f"unknown MCDM method {method!r}")
    fn = {"topsis": topsis, "vikor": vikor, "comet": comet,
          "promethee2": promethee2, "cocoso": cocoso}[method]
    scores = fn(values, weights, minimize)
    return scores, method not in _DISPREFERENCE


def ordering_from_scores(scores, higher_better=True):
    """Alternative indices best-first; ties broken by index."""
    scores = np.asarray(scores, dtype=float)
    key = -scores if higher_better else scores
    return sorted(range(scores.size), key=lambda i: (key[i], i))


# ---------------------------------------------------------------------------
# rank aggregation


def _positions(ordering):
    pos = {}
    for rank, alt in enumerate(ordering):
        pos[alt] = rank
    return pos


def _pairwise_counts(orderings, m):
    d = np.zeros((m, m))
    for o in orderings:
        pos = _positions(o)
        for a in range(m):
            for b in range(m):
                if a != b and pos[a] < pos[b]:
                    d[a, b] += 1
    return d


def borda(orderings, m):
    points = np.zeros(m)
    for o in orderings:
        for rank, alt in enumerate(o):
            points[alt] += m - 1 - rank
    return sorted(range(m), key=lambda a: (-points[a], a))


def plurality(orderings, m):
    votes = np.zeros(m)
    for o in orderings:
        votes[o[0]] += 1
    return sorted(range(m), key=lambda a: (-votes[a], a))


def schulze(orderings, m):
    d = _pairwise_counts(orderings, m)
    p = np.where(d > d.T, d, 0.0)
    for c in range(m):
        for a in range(m):
            if a == c:
                continue
            for b in range(m):
                if b != a and b != c:
                    p[a, b] = max(p[a, b], min(p[a, c], p[c, b]))
    wins = [(p[a] > p[:, a]).sum() for a in range(m)]
    return sorted(range(m), key=lambda a: (-wins[a], a))


def kemeny_young(orderings, m, budget=8):
    """Exact Kemeny consensus by permutation search (small m only)."""
    if m > budget:
        raise BudgetError(f"Kemeny search supports at most {budget} alternatives")
    d = _pairwise_counts(orderings, m)
    best_perm, best_cost = None, np.inf
    for perm in permutations(range(m)):
        cost = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                cost += d[perm[j], perm[i]]  # disagreements with perm's order
        if cost < best_cost - 1e-12:
            best_perm, best_cost = perm, cost
    return list(best_perm)


def pairwise_greedy(orderings, m):
    d = _pairwise_counts(orderings, m)
    remaining = list(range(m))
    out = []
    while remaining:
        strength = {a: sum(d[a, b] for b in remaining if b != a) for a in remaining}
        pick = min(remaining, key=lambda a: (-strength[a], a))
        out.append(pick)
        remaining.remove(pick)
    return out


def aggregate_ranks(orderings, sizes=None):
    """Fuse method rankings through five consensus rules plus a Borda vote.

    Returns a dict with each consensus ordering, per-alternative rank-1
    wins and composite Borda points over the five consensus outputs, and
    the final ordering under the lexicographic rule (most rank-1 wins,
    highest composite Borda, largest ``sizes`` entry, lowest index).
    """
    orderings = [list(o) for o in orderings]
    if not orderings:
        raise ConfigurationError("no rankings to aggregate")
    m = len(orderings[0])
    if any(sorted(o) != list(range(m)) for o in orderings):
        raise ConfigurationError("each ranking must be a permutation of range(m)")
    consensus = {
        "borda": borda(orderings, m),
        "schulze": schulze(orderings, m),
        "kemeny_young": kemeny_young(orderings, m),
        "plurality": plurality(orderings, m),
        "pairwise_greedy": pairwise_greedy(orderings, m),
    }
    rank1 = np.zeros(m)
    composite = np.zeros(m)
    for o in consensus.values():
        rank1[o[0]] += 1
        for rank, alt in enumerate(o):
            composite[alt] += m - 1 - rank
    final = lexicographic_ordering(rank1, composite, sizes)
    return {
        "consensus": consensus,
        "rank1_wins": rank1,
        "composite_borda": composite,
        "ordering": final,
    }


def lexicographic_ordering(rank1_wins, composite_borda, sizes=None):
    """Order alternatives by rank-1 wins, then composite Borda, then size."""
    rank1_wins = np.asarray(rank1_wins, dtype=float)
    composite_borda = np.asarray(composite_borda, dtype=float)
    m = rank1_wins.size
    size_key = np.zeros(m) if sizes is None else np.asarray(sizes, dtype=float)
    return sorted(
        range(m), key=lambda a: (-rank1_wins[a], -composite_borda[a], -size_key[a], a)
    )


def mean_preference_winner(scores_by_method, sizes=None):
    """Winner under mean normalised preferences (the aggregation shortcut).

    Each method's scores are min-max normalised to [0, 1], dispreference
    methods are flipped, and the alternative with the highest mean wins
    (ties by larger size, then lower index).
    """
    mats = []
    for method, (scores, higher_better) in scores_by_method.items():
        s = np.asarray(scores, dtype=float)
        rng = s.max() - s.min()
        norm = np.full_like(s, 0.5) if rng < _EPS else (s - s.min()) / rng
        if not higher_better:
            norm = 1.0 - norm
        mats.append(norm)
    mean = np.mean(mats, axis=0)
    m = mean.size
    size_key = np.zeros(m) if sizes is None else np.asarray(sizes, dtype=float)
    return min(range(m), key=lambda a: (-mean[a], -size_key[a], a))
