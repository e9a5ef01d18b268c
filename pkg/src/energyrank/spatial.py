"""A small in-memory R-tree for rectangle queries.

Guttman's original structure with the quadratic split heuristic. Entries are
axis-aligned rectangles ``(xmin, ymin, xmax, ymax)``; points are stored as
degenerate rectangles. Query results are returned sorted by key, so they do
not depend on insertion order even though the tree shape does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _union(a, b):
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _area(r):
    return (r[2] - r[0]) * (r[3] - r[1])


def _intersects(a, b):
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def _contains(outer, inner):
    return outer[0] <= inner[0] and outer[1] <= inner[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


@dataclass
class _Node:
    leaf: bool
    entries: list = field(default_factory=list)  # (rect, key) in leaves, (rect, _Node) otherwise

    def bbox(self):
        r = self.entries[0][0]
        for e in self.entries[1:]:
            r = _union(r, e[0])
        return r


class RTree:
    """R-tree keyed by arbitrary sortable keys.

    Parameters
    ----------
    max_entries : int
        Node capacity ``M``. Nodes split when they exceed it.
    min_entries : int, optional
        Minimum fill ``m`` after a split; defaults to ``max_entries // 3``.
    """

    def __init__(self, max_entries=16, min_entries=None):
        if max_entries < 4:
            raise ValueError("max_entries must be at least 4")
        self.M = max_entries
        self.m = min_entries if min_entries is not None else max(2, max_entries // 3)
        if not 1 <= self.m <= self.M // 2:
            raise ValueError("min_entries must be in [1, max_entries/2]")
        self.root = _Node(leaf=True)
        self._n = 0

    def __len__(self):
        return self._n

    # -- insertion

    def insert(self, key, rect):
        rect = tuple(float(v) for v in rect)
        if rect[0] > rect[2] or rect[1] > rect[3]:
            raise ValueError(f"malformed rectangle {rect}")
        split = self._insert(self.root, key, rect)
        if split is not None:
            a, b = split
            self.root = _Node(leaf=False, entries=[(a.bbox(), a), (b.bbox(), b)])
        self._n += 1

    def insert_point(self, key, x, y):
        self.insert(key, (x, y, x, y))

    def _insert(self, node, key, rect):
        if node.leaf:
            node.entries.append((rect, key))
        else:
            i = self._choose(node, rect)
            child = node.entries[i][1]
            split = self._insert(child, key, rect)
            if split is None:
                node.entries[i] = (_union(node.entries[i][0], rect), child)
            else:
                a, b = split
                node.entries[i] = (a.bbox(), a)
                node.entries.append((b.bbox(), b))
        if len(node.entries) > self.M:
            return self._split(node)
        return None

    @staticmethod
    def _choose(node, rect):
        best, best_key = 0, None
        for i, (r, _) in enumerate(node.entries):
            grow = _area(_union(r, rect)) - _area(r)
            k = (grow, _area(r))
            if best_key is None or k < best_key:
                best, best_key = i, k
        return best

    def _split(self, node):
        entries = node.entries
        # pick seeds: the pair wasting the most area
        worst, seeds = -np.inf, (0, 1)
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                d = _area(_union(entries[i][0], entries[j][0])) - _area(entries[i][0]) - _area(entries[j][0])
                if d > worst:
                    worst, seeds = d, (i, j)
        ga, gb = [entries[seeds[0]]], [entries[seeds[1]]]
        ra, rb = ga[0][0], gb[0][0]
        rest = [e for k, e in enumerate(entries) if k not in seeds]
        while rest:
            if len(ga) + len(rest) == self.m:
                ga.extend(rest)
                break
            if len(gb) + len(rest) == self.m:
                gb.extend(rest)
                break
            # pick next: strongest preference for one group
            best_k, best_diff = 0, -1.0
            for k, e in enumerate(rest):
                da = _area(_union(ra, e[0])) - _area(ra)
                db = _area(_union(rb, e[0])) - _area(rb)
                if abs(da - db) > best_diff:
                    best_k, best_diff = k, abs(da - db)
            e = rest.pop(best_k)
            da = _area(_union(ra, e[0])) - _area(ra)
            db = _area(_union(rb, e[0])) - _area(rb)
            if (da, _area(ra), len(ga)) <= (db, _area(rb), len(gb)):
                ga.append(e)
                ra = _union(ra, e[0])
            else:
                gb.append(e)
                rb = _union(rb, e[0])
        return _Node(node.leaf, ga), _Node(node.leaf, gb)

    # -- queries

    def search(self, rect):
        """Keys of all entries intersecting the closed rectangle ``rect``, sorted."""
        rect = tuple(float(v) for v in rect)
        out = []
        if self._n == 0:
            return out
        stack = [self.root]
        while stack:
            node = stack.pop()
            for r, item in node.entries:
                if _intersects(r, rect):
                    if node.leaf:
                        out.append(item)
                    else:
                        stack.append(item)
        out.sort()
        return out

    def bounds(self):
        if self._n == 0:
            return None
        return self.root.bbox()

    def depth(self):
        d, node = 1, self.root
        while not node.leaf:
            node = node.entries[0][1]
            d += 1
        return d

    def check(self):
        """Verify structural invariants; raises AssertionError on violation."""
        leaf_depths = set()

        def walk(node, depth, is_root):
            if not is_root:
                assert self.m <= len(node.entries) <= self.M, len(node.entries)
            if node.leaf:
                leaf_depths.add(depth)
                return len(node.entries)
            n = 0
            for r, child in node.entries:
                assert _contains(r, child.bbox())
                n += walk(child, depth + 1, False)
            return n

        total = walk(self.root, 0, True) if self._n else 0
        assert total == self._n
        assert len(leaf_depths) <= 1
