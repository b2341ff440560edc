"""Compiled inner loops of the boosted-tree grower."""
import numpy as np
from numba import njit


@njit(cache=True)
def level_splits(node, feat, val, ge, he, G_node, H_node, n_node, lam):
    """Best split of every node from entries grouped by node, then feature
    ascending, then value descending.

    Returns per-node arrays (feature, threshold, gain); feature -1 marks a
    node without any candidate.  Scanning in storage order and replacing
    only on strictly larger gain makes ties go to the lowest feature and
    then the highest threshold.
    """
    n_nodes = G_node.shape[0]
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    best_gain = np.full(n_nodes, -np.inf)
    m = node.shape[0]
    GR = 0.0
    HR = 0.0
    nR = 0
    for i in range(m):
        if i == 0 or node[i] != node[i - 1] or feat[i] != feat[i - 1]:
            GR = 0.0
            HR = 0.0
            nR = 0
        GR += ge[i]
        HR += he[i]
        nR += 1
        last = (
            i == m - 1
            or node[i + 1] != node[i]
            or feat[i + 1] != feat[i]
            or val[i + 1] != val[i]
        )
        if not last:
            continue
        j = node[i]
        if n_node[j] - nR <= 0:
            continue
        G = G_node[j]
        H = H_node[j]
        GL = G - GR
        HL = H - HR
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam))
        if gain > best_gain[j]:
            best_gain[j] = gain
            best_feat[j] = feat[i]
            best_thr[j] = val[i]
    return best_feat, best_thr, best_gain


@njit(cache=True)
def route_and_partition(node, row, feat, val, split_feat, split_thr, left_of, node_of_row):
    """Apply one level of splits.

    Rows of split nodes move to the left child unless their entry for the
    split feature is ``>= threshold``.  Entries of split nodes are then
    reordered (stably) into child order; entries of unsplit nodes are
    dropped.  Returns the kept-entry order and the entries' new node ids;
    ``node_of_row`` is updated in place.
    """
    n_rows = node_of_row.shape[0]
    goes_right = np.zeros(n_rows, dtype=np.bool_)
    m = node.shape[0]
    for i in range(m):
        j = node[i]
        f = split_feat[j]
        if f >= 0 and feat[i] == f and val[i] >= split_thr[j]:
            goes_right[row[i]] = True
    for r in range(n_rows):
        j = node_of_row[r]
        if j < split_feat.shape[0] and split_feat[j] >= 0:
            node_of_row[r] = left_of[j] + (1 if goes_right[r] else 0)

    n_children = 0
    for j in range(split_feat.shape[0]):
        if split_feat[j] >= 0:
            n_children = max(n_children, left_of[j] + 2)
    counts = np.zeros(n_children + 1, dtype=np.int64)
    new_node = np.full(m, -1, dtype=np.int64)
    for i in range(m):
        j = node[i]
        if split_feat[j] >= 0:
            c = left_of[j] + (1 if goes_right[row[i]] else 0)
            new_node[i] = c
            counts[c + 1] += 1
    for c in range(n_children):
        counts[c + 1] += counts[c]
    total = counts[n_children]
    order = np.empty(total, dtype=np.int64)
    out_node = np.empty(total, dtype=np.int64)
    for i in range(m):
        c = new_node[i]
        if c >= 0:
            p = counts[c]
            order[p] = i
            out_node[p] = c
            counts[c] += 1
    return order, out_node
