"""Pure-Python incremental metric cursor.

Fallback used when the compiled extension is unavailable; behavior is
bit-identical. The cursor folds edges forward only: ``advance(t)``
consumes all edges with ts strictly below t, after which per-node and
per-pair state answers metric reads in near-constant time.
"""

from __future__ import annotations


class PurePythonCursor:
    backend = "python"

    def __init__(self, src, dst, ts, label, n_slots: int = 0):
        # plain lists beat numpy scalar indexing in the fold loop
        self._src = [int(x) for x in src]
        self._dst = [int(x) for x in dst]
        self._ts = [float(x) for x in ts]
        self._label = [int(x) for x in label]
        self._pos = 0
        self._n = len(self._src)
        self._seen = 0

        self._freq: dict[int, int] = {}
        self._as_src: dict[int, int] = {}
        self._as_dst: dict[int, int] = {}
        self._nbrs: dict[int, set] = {}
        self._node_labels: dict[int, dict[int, int]] = {}
        self._pair_count: dict[tuple[int, int], int] = {}
        self._pair_labels: dict[tuple[int, int], dict[int, int]] = {}

    @property
    def position(self) -> int:
        return self._pos

    def advance(self, t: float) -> None:
        """Fold every remaining edge with ts < t into the cursor state."""
        src, dst, ts, lab = self._src, self._dst, self._ts, self._label
        freq, as_src, as_dst = self._freq, self._as_src, self._as_dst
        nbrs, node_labels = self._nbrs, self._node_labels
        pair_count, pair_labels = self._pair_count, self._pair_labels
        pos, n = self._pos, self._n
        while pos < n and ts[pos] < t:
            s, d, c = src[pos], dst[pos], lab[pos]
            freq[s] = freq.get(s, 0) + 1
            freq[d] = freq.get(d, 0) + 1
            as_src[s] = as_src.get(s, 0) + 1
            as_dst[d] = as_dst.get(d, 0) + 1
            nbrs.setdefault(s, set()).add(d)
            nbrs.setdefault(d, set()).add(s)
            ls = node_labels.setdefault(s, {})
            ls[c] = ls.get(c, 0) + 1
            ld = node_labels.setdefault(d, {})
            ld[c] = ld.get(c, 0) + 1
            key = (s, d) if s <= d else (d, s)
            pair_count[key] = pair_count.get(key, 0) + 1
            lp = pair_labels.setdefault(key, {})
            lp[c] = lp.get(c, 0) + 1
            pos += 1
        self._pos = pos

    # -- reads ----------------------------------------------------------

    def pair_count(self, u: int, v: int) -> int:
        key = (u, v) if u <= v else (v, u)
        return self._pair_count.get(key, 0)

    def common_neighbors(self, u: int, v: int) -> int:
        a = self._nbrs.get(u)
        b = self._nbrs.get(v)
        if not a or not b:
            return 0
        if len(a) > len(b):
            a, b = b, a
        return sum(1 for x in a if x in b)

    def neighbors(self, n: int) -> set:
        return set(self._nbrs.get(n, ()))

    def neighbor_count(self, n: int) -> int:
        return len(self._nbrs.get(n, ()))

    def frequency(self, n: int) -> int:
        return self._freq.get(n, 0)

    def activity(self, n: int) -> tuple[int, int, int, float]:
        """(frequency, as_source, as_destination, avg_neighbor_frequency)."""
        nbrs = self._nbrs.get(n)
        if nbrs:
            avg = sum(self._freq.get(w, 0) for w in nbrs) / len(nbrs)
        else:
            avg = 0.0
        return (
            self._freq.get(n, 0),
            self._as_src.get(n, 0),
            self._as_dst.get(n, 0),
            avg,
        )

    def node_label_counts(self, n: int) -> dict[int, int]:
        """Label -> count over incident folded edges, first-occurrence order."""
        return dict(self._node_labels.get(n, {}))

    def pair_label_counts(self, u: int, v: int) -> dict[int, int]:
        key = (u, v) if u <= v else (v, u)
        return dict(self._pair_labels.get(key, {}))
