"""Axis-aligned BVH over triangles, stored as flat arrays.

Built once per mesh in Python; traversal happens inside the compiled
kernels.  Median split on the widest centroid axis, leaves hold up to
``LEAF_SIZE`` triangles referenced through a permutation array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass
class Bvh:
    # nodes: internal nodes carry children, leaves carry a triangle range
    bounds_min: np.ndarray  # (N, 3)
    bounds_max: np.ndarray  # (N, 3)
    left: np.ndarray  # (N,) child index, -1 for leaves
    right: np.ndarray  # (N,)
    start: np.ndarray  # (N,) first index into tri_order for leaves
    count: np.ndarray  # (N,) triangle count, 0 for internal nodes
    tri_order: np.ndarray  # (F,) permutation of triangle indices

    @property
    def n_nodes(self) -> int:
        return self.bounds_min.shape[0]


def build_bvh(vertices: np.ndarray, triangles: np.ndarray) -> Bvh:
    tri_verts = vertices[triangles]  # (F, 3, 3)
    lo = tri_verts.min(axis=1)
    hi = tri_verts.max(axis=1)
    centroids = tri_verts.mean(axis=1)
    n_tris = triangles.shape[0]

    bounds_min, bounds_max = [], []
    left, right, start, count = [], [], [], []
    order = np.arange(n_tris, dtype=np.int64)

    def new_node():
        bounds_min.append(None)
        bounds_max.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    # (node index, slice into order) work list; recursion kept explicit so
    # deep meshes cannot hit the interpreter stack limit
    root = new_node()
    stack = [(root, 0, n_tris)]
    while stack:
        node, a, b = stack.pop()
        idx = order[a:b]
        bounds_min[node] = lo[idx].min(axis=0)
        bounds_max[node] = hi[idx].max(axis=0)
        if b - a <= LEAF_SIZE:
            start[node] = a
            count[node] = b - a
            continue
        cent = centroids[idx]
        axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
        mid = (b - a) // 2
        part = np.argsort(cent[:, axis], kind="stable")
        order[a:b] = idx[part]
        lc = new_node()
        rc = new_node()
        left[node] = lc
        right[node] = rc
        stack.append((lc, a, a + mid))
        stack.append((rc, a + mid, b))

    return Bvh(
        bounds_min=np.ascontiguousarray(np.array(bounds_min), dtype=np.float64),
        bounds_max=np.ascontiguousarray(np.array(bounds_max), dtype=np.float64),
        left=np.ascontiguousarray(left, dtype=np.int32),
        right=np.ascontiguousarray(right, dtype=np.int32),
        start=np.ascontiguousarray(start, dtype=np.int32),
        count=np.ascontiguousarray(count, dtype=np.int32),
        tri_order=np.ascontiguousarray(order, dtype=np.int32),
    )
