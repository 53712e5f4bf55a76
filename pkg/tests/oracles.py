"""Independent reference implementations used to check the package.

Everything here is deliberately naive: plain Python loops and dicts, no
shared code with the package internals beyond data-holding types.  If a fast
implementation and its oracle agree, a bug would have to exist in both.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, Sequence

import numpy as np

# Published hyperparameters, frozen here so package constants cannot drift
# silently: consistency weight per topology, deviation weight, epoch count,
# dimension, window radius, and the two frequency thresholds.
EXPECTED_ALPHA = {"chain": 1.5, "complete": 1.0}
EXPECTED_BETA = 0.2
EXPECTED_EPOCHS = 40
EXPECTED_DIM = 50
EXPECTED_WINDOW = 5
EXPECTED_MIN_COUNT = {"news": 200, "regional": 5}


def brute_force_cooccurrence(streams: Mapping[str, Sequence[str]],
                             word_ids: Mapping[str, int],
                             condition_order: Sequence[str],
                             window: int) -> dict[tuple[int, int, int], float]:
    """Nested-loop pair enumeration: for every position pair within the
    window radius where both tokens are in vocabulary, count 1 in each
    direction.  Out-of-vocabulary tokens keep their positions."""
    counts: dict[tuple[int, int, int], float] = {}
    for c, cid in enumerate(condition_order):
        tokens = list(streams[cid])
        for pos, tok in enumerate(tokens):
            i = word_ids.get(tok)
            if i is None:
                continue
            for off in range(1, window + 1):
                if pos + off >= len(tokens):
                    break
                j = word_ids.get(tokens[pos + off])
                if j is None:
                    continue
                counts[(c, i, j)] = counts.get((c, i, j), 0.0) + 1.0
                counts[(c, j, i)] = counts.get((c, j, i), 0.0) + 1.0
    return counts


def naive_objective(V: np.ndarray, U: np.ndarray, Q: np.ndarray,
                    D: np.ndarray, Dp: np.ndarray, B: np.ndarray,
                    Bp: np.ndarray,
                    entries: Sequence[tuple[int, int, int, float]],
                    topology_pairs: Sequence[tuple[int, int]],
                    alpha: float, beta: float) -> float:
    """Straight-line evaluation of the training objective.

    Data term: for each nonzero entry (i, j, c, x), the squared difference
    between (V_i*Q_c + D_ic) . (U_j*Q_c + Dp_jc) + B_ic + Bp_jc and log x.
    Penalties: (alpha/2) sum of squared distances over topology pairs and
    (beta/2) the squared norms of both deviation tensors.
    """
    m = V.shape[1]
    total = 0.0
    for i, j, c, x in entries:
        dot = 0.0
        for t in range(m):
            p = V[i][t] * Q[c][t] + D[i][c][t]
            r = U[j][t] * Q[c][t] + Dp[j][c][t]
            dot += p * r
        err = dot + B[i][c] + Bp[j][c] - math.log(x)
        total += err * err
    for a, b in topology_pairs:
        for t in range(m):
            diff = Q[a][t] - Q[b][t]
            total += 0.5 * alpha * diff * diff
    for w in range(D.shape[0]):
        for c in range(D.shape[1]):
            for t in range(m):
                total += 0.5 * beta * D[w][c][t] * D[w][c][t]
                total += 0.5 * beta * Dp[w][c][t] * Dp[w][c][t]
    return total


def central_difference(loss: Callable[[], float], array: np.ndarray,
                       eps: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of ``loss`` w.r.t. ``array``.

    ``loss`` must read ``array`` afresh on every call; the array is restored
    element by element.
    """
    grad = np.zeros_like(array)
    flat = array.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        up = loss()
        flat[idx] = orig - eps
        down = loss()
        flat[idx] = orig
        gflat[idx] = (up - down) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = 1e-8) -> float:
    """Worst elementwise relative disagreement, floored to avoid 0/0."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def rank_of_gold_brute(query_vec: np.ndarray, matrix: np.ndarray,
                       gold_id: int, excluded: set[int] = frozenset()) -> int | None:
    """Reference ranking: cosine against every row, sort by (-score, id)."""
    qn = math.sqrt(float(query_vec @ query_vec))
    scored = []
    for wid in range(matrix.shape[0]):
        if wid in excluded:
            continue
        row = matrix[wid]
        rn = math.sqrt(float(row @ row))
        if rn == 0.0:
            continue
        scored.append((-float(row @ query_vec) / (rn * qn), wid))
    scored.sort()
    for rank, (_, wid) in enumerate(scored, start=1):
        if wid == gold_id:
            return rank
    return None
