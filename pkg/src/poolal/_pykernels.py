"""Pure-numpy versions of the hot loops.

These are the reference semantics for ``_ckernels.pyx``; both must return
identical picks on identical inputs.
"""

import math

import numpy as np


def linear_greedy(X, inv, sqdiv, active, eps):
    """Greedy Mahalanobis selection until every active point has diversity <= eps.

    ``inv``, ``sqdiv`` and ``active`` are updated in place. ``sqdiv[j]`` holds
    the current squared diversity of row ``j`` of ``X`` (only meaningful for
    active rows). Returns ``(picks, gains)`` where ``gains[k]`` is the squared
    diversity of the k-th pick at selection time.
    """
    picks = []
    gains = []
    masked = np.where(active.astype(bool), sqdiv, -np.inf)
    while len(masked):
        j = int(np.argmax(masked))
        best = masked[j]
        if best == -np.inf or math.sqrt(max(best, 0.0)) <= eps:
            break
        x = X[j]
        u = inv @ x
        q = float(x @ u)
        denom = 1.0 + q
        inv -= np.outer(u, u) / denom
        proj = X @ u
        sqdiv -= proj * proj / denom
        active[j] = 0
        masked -= proj * proj / denom
        masked[j] = -np.inf
        picks.append(j)
        gains.append(q)
    return np.asarray(picks, dtype=np.int64), np.asarray(gains, dtype=np.float64)


def group_sqdiv(cols, denom):
    """Squared function-class diversity for every value column in ``cols``.

    ``denom`` is the pairwise history sum (without the +1).
    """
    if len(cols) == 0:
        return np.zeros(0)
    diff = cols[:, :, None] - cols[:, None, :]
    ratio = (diff * diff) / (denom + 1.0)
    return ratio.reshape(len(cols), -1).max(axis=1)


def nl_greedy(cols, members, group_ptr, next_ptr, denom, eps):
    """Greedy selection under the function-class diversity.

    Points sharing a value column are grouped; ``members[group_ptr[g]:group_ptr[g+1]]``
    lists group ``g``'s pool indices in ascending order and ``next_ptr[g]`` is the
    offset of its next unselected member. ``denom`` and ``next_ptr`` are updated
    in place. A negative ``eps`` runs until every point is selected.
    Returns ``(picks, sqdivs)``.

    Evaluation is lazy: a group's squared diversity never increases as
    ``denom`` grows (also in floating point), so a stale value is an upper
    bound and only the current leader needs re-evaluating before it is taken.
    The picks equal those of a full rescan after every selection.
    """
    n_groups = len(cols)
    sizes = np.diff(group_ptr)
    picks = []
    sqdivs = []
    d2 = group_sqdiv(cols, denom)
    stamp = np.zeros(n_groups, dtype=np.int64)
    version = 0
    while True:
        best_g = -1
        best_d = -1.0
        best_idx = 0
        for g in range(n_groups):
            if next_ptr[g] >= sizes[g]:
                continue
            dg = math.sqrt(d2[g])
            idx = members[group_ptr[g] + next_ptr[g]]
            if dg > best_d or (dg == best_d and idx < best_idx):
                best_g, best_d, best_idx = g, dg, idx
        if best_g < 0:
            break
        if stamp[best_g] != version:
            d2[best_g] = group_sqdiv(cols[best_g:best_g + 1], denom)[0]
            stamp[best_g] = version
            continue
        if best_d <= eps:
            break
        picks.append(int(best_idx))
        sqdivs.append(float(d2[best_g]))
        next_ptr[best_g] += 1
        c = cols[best_g]
        diff = c[:, None] - c[None, :]
        denom += diff * diff
        version += 1
    return np.asarray(picks, dtype=np.int64), np.asarray(sqdivs, dtype=np.float64)
