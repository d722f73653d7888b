# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
# distutils: language = c++
"""Compiled incremental metric cursor.

Same contract and folding semantics as the pure-Python cursor in
_cursor_py.py; see that module for the definitions. Node ids must be
dense-ish non-negative ints below 2**31 (the engine front end checks
this before choosing the compiled path).

Label tallies live in twin maps (count and first-seen order) so that
materialized dicts reproduce the Python cursor's first-occurrence
iteration order exactly.
"""

from cython.operator cimport dereference as deref, preincrement as inc
from libcpp.unordered_map cimport unordered_map
from libcpp.unordered_set cimport unordered_set
from libcpp.vector cimport vector

import numpy as np

ctypedef long long i64
ctypedef unordered_map[i64, i64] CountMap


cdef inline i64 _pair_key(i64 u, i64 v) nogil:
    if u <= v:
        return (u << 32) | v
    return (v << 32) | u


cdef dict _ordered_counts(CountMap* counts, CountMap* first):
    items = []
    cdef unordered_map[i64, i64].iterator it = counts.begin()
    while it != counts.end():
        items.append((first[0][deref(it).first], deref(it).first, deref(it).second))
        inc(it)
    items.sort()
    cdef dict out = {}
    for _order, lab, count in items:
        out[lab] = count
    return out


cdef class CompiledCursor:
    backend = "cython"

    cdef:
        i64[::1] _src
        i64[::1] _dst
        double[::1] _ts
        i64[::1] _label
        Py_ssize_t _pos, _n
        i64 _seen
        vector[i64] _freq
        vector[i64] _as_src
        vector[i64] _as_dst
        vector[unordered_set[i64]] _nbrs
        vector[CountMap] _node_label_counts
        vector[CountMap] _node_label_first
        unordered_map[i64, i64] _pair_count
        unordered_map[i64, CountMap] _pair_label_counts
        unordered_map[i64, CountMap] _pair_label_first

    def __init__(self, src, dst, ts, label, n_slots):
        self._src = np.ascontiguousarray(src, dtype=np.int64)
        self._dst = np.ascontiguousarray(dst, dtype=np.int64)
        self._ts = np.ascontiguousarray(ts, dtype=np.float64)
        self._label = np.ascontiguousarray(label, dtype=np.int64)
        self._pos = 0
        self._n = self._src.shape[0]
        self._seen = 0
        cdef Py_ssize_t slots = max(int(n_slots), 1)
        self._freq.resize(slots, 0)
        self._as_src.resize(slots, 0)
        self._as_dst.resize(slots, 0)
        self._nbrs.resize(slots)
        self._node_label_counts.resize(slots)
        self._node_label_first.resize(slots)

    @property
    def position(self):
        return self._pos

    cdef void _bump(self, CountMap* counts, CountMap* first, i64 lab):
        if counts.find(lab) == counts.end():
            first[0][lab] = self._seen
        counts[0][lab] += 1

    def advance(self, double t):
        cdef Py_ssize_t pos = self._pos
        cdef Py_ssize_t n = self._n
        cdef i64 s, d, c, key
        while pos < n and self._ts[pos] < t:
            s = self._src[pos]
            d = self._dst[pos]
            c = self._label[pos]
            self._freq[s] += 1
            self._freq[d] += 1
            self._as_src[s] += 1
            self._as_dst[d] += 1
            self._nbrs[s].insert(d)
            self._nbrs[d].insert(s)
            self._bump(&self._node_label_counts[s], &self._node_label_first[s], c)
            self._bump(&self._node_label_counts[d], &self._node_label_first[d], c)
            key = _pair_key(s, d)
            self._pair_count[key] += 1
            self._bump(&self._pair_label_counts[key], &self._pair_label_first[key], c)
            self._seen += 1
            pos += 1
        self._pos = pos

    # -- reads ----------------------------------------------------------

    def pair_count(self, i64 u, i64 v):
        cdef unordered_map[i64, i64].iterator it = self._pair_count.find(_pair_key(u, v))
        if it == self._pair_count.end():
            return 0
        return deref(it).second

    def common_neighbors(self, i64 u, i64 v):
        cdef unordered_set[i64]* a = &self._nbrs[u]
        cdef unordered_set[i64]* b = &self._nbrs[v]
        cdef unordered_set[i64]* tmp
        if a.size() == 0 or b.size() == 0:
            return 0
        if a.size() > b.size():
            tmp = a
            a = b
            b = tmp
        cdef i64 count = 0
        cdef unordered_set[i64].iterator it = a.begin()
        while it != a.end():
            if b.find(deref(it)) != b.end():
                count += 1
            inc(it)
        return count

    def neighbors(self, i64 n):
        out = set()
        cdef unordered_set[i64].iterator it = self._nbrs[n].begin()
        while it != self._nbrs[n].end():
            out.add(deref(it))
            inc(it)
        return out

    def neighbor_count(self, i64 n):
        return self._nbrs[n].size()

    def frequency(self, i64 n):
        return self._freq[n]

    def activity(self, i64 n):
        cdef i64 total = 0
        cdef i64 size = <i64> self._nbrs[n].size()
        cdef double avg = 0.0
        cdef unordered_set[i64].iterator it
        if size > 0:
            it = self._nbrs[n].begin()
            while it != self._nbrs[n].end():
                total += self._freq[deref(it)]
                inc(it)
            avg = (<double> total) / (<double> size)
        return (self._freq[n], self._as_src[n], self._as_dst[n], avg)

    def node_label_counts(self, i64 n):
        return _ordered_counts(&self._node_label_counts[n], &self._node_label_first[n])

    def pair_label_counts(self, i64 u, i64 v):
        cdef i64 key = _pair_key(u, v)
        cdef unordered_map[i64, CountMap].iterator it = self._pair_label_counts.find(key)
        if it == self._pair_label_counts.end():
            return {}
        return _ordered_counts(&deref(it).second, &self._pair_label_first[key])
