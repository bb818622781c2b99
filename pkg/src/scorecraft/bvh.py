"""Bounding-volume hierarchy over triangles.

The tree is built once per mesh snapshot (median split on centroids along the
widest axis) and is immutable afterwards. Traversal lives in the kernels.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BVH:
    lo: np.ndarray      # (M, 3) node bounds
    hi: np.ndarray      # (M, 3)
    left: np.ndarray    # (M,) left child index, -1 for leaves; right child is stored separately
    right: np.ndarray   # (M,)
    start: np.ndarray   # (M,) first slot in ``order`` for leaves
    count: np.ndarray   # (M,) triangle count for leaves
    order: np.ndarray   # (T,) triangle ids in leaf order

    @property
    def n_nodes(self):
        return self.lo.shape[0]


def build_bvh(v0, v1, v2, leaf_size=4):
    n_tri = v0.shape[0]
    tri_lo = np.minimum(np.minimum(v0, v1), v2)
    tri_hi = np.maximum(np.maximum(v0, v1), v2)
    cent = (v0 + v1 + v2) / 3.0
    order = np.arange(n_tri, dtype=np.int64)

    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node():
        lo.append(None)
        hi.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(lo) - 1

    if n_tri == 0:
        return BVH(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, np.int64),
                   np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), order)

    root = new_node()
    stack = [(root, 0, n_tri)]
    while stack:
        node, s, e = stack.pop()
        ids = order[s:e]
        lo[node] = tri_lo[ids].min(axis=0)
        hi[node] = tri_hi[ids].max(axis=0)
        if e - s <= leaf_size:
            start[node] = s
            count[node] = e - s
            continue
        c = cent[ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order[s:e] = ids[np.argsort(c[:, axis], kind="stable")]
        mid = (s + e) // 2
        a, b = new_node(), new_node()
        left[node] = a
        right[node] = b
        stack.append((b, mid, e))
        stack.append((a, s, mid))

    return BVH(
        np.array(lo), np.array(hi),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64), np.array(count, dtype=np.int64),
        order,
    )
