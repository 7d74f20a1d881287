"""Symmetric sparse linear algebra.

Lower-triangle compressed-column storage, a left-looking sparse Cholesky
with elimination-tree symbolic analysis, triangular solves, log-determinants
and Takahashi selected inversion. The numeric kernels are compiled with
numba and release the GIL, so distinct factors can be computed from
different threads.
"""
from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import DimensionMismatch, NotPositiveDefinite, ValidationError

ORDERINGS = ("natural", "band-reducing")
PIVOT_THRESHOLD = 1e-300


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric matrix stored as its lower triangle in CSC form.

    Row indices are strictly increasing within each column and never above
    the diagonal; every diagonal entry is stored explicitly.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "data", data)
        n = int(self.n)
        if n < 1:
            raise ValidationError("matrix dimension must be >= 1")
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
            raise ValidationError("malformed column pointer array")
        if data.size != indices.size:
            raise ValidationError("data and indices lengths differ")
        if np.any(np.diff(indptr) < 1):
            raise ValidationError("every column must store its diagonal")
        cols = np.repeat(np.arange(n), np.diff(indptr))
        first = indptr[:-1]
        if np.any(indices[first] != np.arange(n)):
            raise ValidationError("diagonal entry must lead each column")
        if np.any(indices >= n):
            raise ValidationError("row index out of range")
        step = np.diff(indices)
        same_col = cols[1:] == cols[:-1]
        if np.any(step[same_col] <= 0):
            raise ValidationError("row indices must be strictly increasing per column")

    @classmethod
    def from_coo(cls, n, rows, cols, vals) -> "SparseSymMatrix":
        """Build from triplets of either triangle; duplicates are summed.

        An off-diagonal entry listed in both triangles is counted twice, so
        pass each symmetric pair once.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        lo_r = np.concatenate([np.maximum(rows, cols), np.arange(n)])
        lo_c = np.concatenate([np.minimum(rows, cols), np.arange(n)])
        vals = np.concatenate([vals, np.zeros(n)])
        order = np.lexsort((lo_r, lo_c))
        lo_r, lo_c, vals = lo_r[order], lo_c[order], vals[order]
        keep = np.ones(lo_r.size, dtype=bool)
        keep[1:] = (lo_r[1:] != lo_r[:-1]) | (lo_c[1:] != lo_c[:-1])
        group = np.cumsum(keep) - 1
        summed = np.zeros(int(keep.sum()))
        np.add.at(summed, group, vals)
        lo_r, lo_c = lo_r[keep], lo_c[keep]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(lo_c, minlength=n), out=indptr[1:])
        return cls(n, indptr, lo_r, summed)

    @classmethod
    def from_scipy(cls, a) -> "SparseSymMatrix":
        """Build from a scipy sparse matrix holding the full symmetric matrix."""
        low = sp.tril(sp.coo_matrix(a))
        return cls.from_coo(a.shape[0], low.row, low.col, low.data)

    @classmethod
    def from_dense(cls, a) -> "SparseSymMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(np.tril(a))
        return cls.from_coo(a.shape[0], r, c, a[r, c])

    def with_data(self, data) -> "SparseSymMatrix":
        """Same sparsity pattern, new values."""
        return SparseSymMatrix(self.n, self.indptr, self.indices, data)

    def diagonal(self) -> np.ndarray:
        return self.data[self.indptr[:-1]].copy()

    def to_scipy(self) -> sp.csc_matrix:
        low = sp.csc_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
        strict = sp.tril(low, k=-1)
        return (low + strict.T).tocsc()

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"vector length {x.shape[0]} != {self.n}")
        return _sym_matvec(self.n, self.indptr, self.indices, self.data, x)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True, eq=False)
class Symbolic:
    """Ordering, permuted pattern and factor pattern for one sparsity structure."""

    n: int
    ordering: str
    perm: np.ndarray
    iperm: np.ndarray
    ap: np.ndarray
    ai: np.ndarray
    amap: np.ndarray
    parent: np.ndarray
    lp: np.ndarray
    li: np.ndarray


@dataclass(frozen=True, eq=False)
class CholFactor:
    """Cholesky factor with P Q P^T = L L^T; immutable once built."""

    symbolic: Symbolic
    lx: np.ndarray
    _logdet: float = field(repr=False)

    @property
    def n(self) -> int:
        return self.symbolic.n

    @property
    def ordering(self) -> np.ndarray:
        return self.symbolic.perm

    def log_det(self) -> float:
        return self._logdet

    def solve(self, b) -> np.ndarray:
        return solve(self, b)

    def selected_inverse(self) -> SparseSymMatrix:
        return selected_inverse(self)

    def inverse_diagonal(self) -> np.ndarray:
        """Diagonal of Q^-1 in the original ordering."""
        s = self.symbolic
        z = _takahashi(s.n, s.lp, s.li, self.lx)
        out = np.empty(s.n)
        out[s.perm] = z[s.lp[:-1]]
        return out

    def solve_lt(self, v) -> np.ndarray:
        """Return P^T L^-T v, whose covariance is Q^-1 for white-noise ``v``."""
        s = self.symbolic
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != s.n:
            raise DimensionMismatch(f"vector length {v.shape[0]} != {s.n}")
        w = np.array(v, dtype=np.float64, order="F")
        if w.ndim == 1:
            _backward(s.n, s.lp, s.li, self.lx, w[:, None])
        else:
            _backward(s.n, s.lp, s.li, self.lx, w)
        out = np.empty_like(w)
        out[s.perm] = w
        return out

    def lower_dense(self) -> np.ndarray:
        s = self.symbolic
        cols = np.repeat(np.arange(s.n), np.diff(s.lp))
        out = np.zeros((s.n, s.n))
        out[s.li, cols] = self.lx
        return out


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _sym_matvec(n, indptr, indices, data, x):
    y = np.zeros(n)
    for j in range(n):
        xj = x[j]
        acc = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            i = indices[p]
            v = data[p]
            if i == j:
                acc += v * xj
            else:
                acc += v * x[i]
                y[i] += v * xj
        y[j] += acc
    return y


@njit(cache=True, nogil=True)
def _etree(n, up, ui):
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(up[k], up[k + 1]):
            i = ui[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@njit(cache=True, nogil=True)
def _factor_pattern(n, up, ui, parent):
    # Row k of L is the union of etree paths from each i < k with A_ki != 0.
    mark = np.full(n, -1, dtype=np.int64)
    counts = np.ones(n, dtype=np.int64)
    for k in range(n):
        mark[k] = k
        for p in range(up[k], up[k + 1]):
            i = ui[p]
            while i < k and mark[i] != k:
                counts[i] += 1
                mark[i] = k
                i = parent[i]
    lp = np.zeros(n + 1, dtype=np.int64)
    for j in range(n):
        lp[j + 1] = lp[j] + counts[j]
    li = np.empty(lp[n], dtype=np.int64)
    nxt = lp[:-1].copy()
    for j in range(n):
        li[nxt[j]] = j
        nxt[j] += 1
    mark[:] = -1
    for k in range(n):
        mark[k] = k
        for p in range(up[k], up[k + 1]):
            i = ui[p]
            while i < k and mark[i] != k:
                li[nxt[i]] = k
                nxt[i] += 1
                mark[i] = k
                i = parent[i]
    return lp, li


@njit(cache=True, nogil=True)
def _numeric(n, ap, ai, ax, lp, li, lx, threshold):
    x = np.zeros(n)
    head = np.full(n, -1, dtype=np.int64)
    link = np.full(n, -1, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    for j in range(n):
        for p in range(ap[j], ap[j + 1]):
            x[ai[p]] = ax[p]
        k = head[j]
        while k != -1:
            knext = link[k]
            p = pos[k]
            ljk = lx[p]
            for q in range(p, lp[k + 1]):
                x[li[q]] -= lx[q] * ljk
            p += 1
            pos[k] = p
            if p < lp[k + 1]:
                r = li[p]
                link[k] = head[r]
                head[r] = k
            k = knext
        d = x[j]
        if not d > threshold:
            return j, d
        ljj = np.sqrt(d)
        lx[lp[j]] = ljj
        x[j] = 0.0
        for q in range(lp[j] + 1, lp[j + 1]):
            r = li[q]
            lx[q] = x[r] / ljj
            x[r] = 0.0
        p = lp[j] + 1
        pos[j] = p
        if p < lp[j + 1]:
            r = li[p]
            link[j] = head[r]
            head[r] = j
    return -1, 0.0


@njit(cache=True, nogil=True)
def _forward(n, lp, li, lx, y):
    m = y.shape[1]
    for j in range(n):
        d = lx[lp[j]]
        for c in range(m):
            y[j, c] /= d
        for q in range(lp[j] + 1, lp[j + 1]):
            r = li[q]
            v = lx[q]
            for c in range(m):
                y[r, c] -= v * y[j, c]


@njit(cache=True, nogil=True)
def _backward(n, lp, li, lx, y):
    m = y.shape[1]
    for j in range(n - 1, -1, -1):
        for q in range(lp[j] + 1, lp[j + 1]):
            r = li[q]
            v = lx[q]
            for c in range(m):
                y[j, c] -= v * y[r, c]
        d = lx[lp[j]]
        for c in range(m):
            y[j, c] /= d


@njit(cache=True, nogil=True)
def _takahashi(n, lp, li, lx):
    z = np.zeros(lx.size)
    posmap = np.full(n, -1, dtype=np.int64)
    for j in range(n - 1, -1, -1):
        p0 = lp[j]
        p1 = lp[j + 1]
        for q in range(p0 + 1, p1):
            posmap[li[q]] = q
        for q in range(p0 + 1, p1):
            i = li[q]
            lij = lx[q]
            for t in range(lp[i], lp[i + 1]):
                r = li[t]
                m = posmap[r]
                if m < 0:
                    continue
                s_ri = z[t]
                if r == i:
                    z[q] += lij * s_ri
                else:
                    z[q] += lx[m] * s_ri
                    z[m] += lij * s_ri
        inv = 1.0 / lx[p0]
        diag = inv * inv
        for q in range(p0 + 1, p1):
            z[q] = -z[q] * inv
            diag -= lx[q] * z[q] * inv
        z[p0] = diag
        for q in range(p0 + 1, p1):
            posmap[li[q]] = -1
    return z


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

_CACHE_SIZE = 32
_symbolic_cache: OrderedDict = OrderedDict()
_cache_lock = threading.Lock()


def _pattern_key(q: SparseSymMatrix, ordering: str) -> tuple:
    h = hashlib.blake2b(digest_size=16)
    h.update(q.indptr.tobytes())
    h.update(q.indices.tobytes())
    return ordering, q.n, h.hexdigest()


def analyze(q: SparseSymMatrix, ordering: str = "natural") -> Symbolic:
    """Symbolic analysis; results are memoized per sparsity pattern."""
    if ordering not in ORDERINGS:
        raise ValidationError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")
    key = _pattern_key(q, ordering)
    with _cache_lock:
        hit = _symbolic_cache.get(key)
        if hit is not None:
            _symbolic_cache.move_to_end(key)
            return hit
    n = q.n
    if ordering == "natural":
        perm = np.arange(n, dtype=np.int64)
    else:
        pattern = sp.csr_matrix(
            (np.ones(q.nnz), q.indices, q.indptr), shape=(n, n)
        )
        pattern = pattern + pattern.T
        perm = np.asarray(reverse_cuthill_mckee(pattern.tocsr(), symmetric_mode=True), dtype=np.int64)
    iperm = np.empty(n, dtype=np.int64)
    iperm[perm] = np.arange(n)

    cols = np.repeat(np.arange(n), np.diff(q.indptr))
    pr, pc = iperm[q.indices], iperm[cols]
    lo, hi = np.minimum(pr, pc), np.maximum(pr, pc)
    amap = np.lexsort((hi, lo))
    ap = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(lo, minlength=n), out=ap[1:])
    ai = hi[amap]
    # Column k of the upper triangle lists rows i <= k; needed by the etree.
    uorder = np.lexsort((lo, hi))
    up = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(hi, minlength=n), out=up[1:])
    ui = lo[uorder]
    parent = _etree(n, up, ui)
    lp, li = _factor_pattern(n, up, ui, parent)
    sym = Symbolic(n, ordering, perm, iperm, ap, ai, amap.astype(np.int64), parent, lp, li)
    with _cache_lock:
        _symbolic_cache[key] = sym
        while len(_symbolic_cache) > _CACHE_SIZE:
            _symbolic_cache.popitem(last=False)
    return sym


def factorize(
    q: SparseSymMatrix,
    ordering: str = "natural",
    threshold: float = PIVOT_THRESHOLD,
) -> CholFactor:
    """Cholesky-factorize a symmetric positive definite matrix.

    Raises:
        NotPositiveDefinite: a pivot fell to ``threshold`` or below.
    """
    sym = analyze(q, ordering)
    ax = q.data[sym.amap]
    lx = np.zeros(sym.li.size)
    col, pivot = _numeric(sym.n, sym.ap, sym.ai, ax, sym.lp, sym.li, lx, threshold)
    if col >= 0:
        raise NotPositiveDefinite(int(sym.perm[col]), float(pivot))
    logdet = 2.0 * float(np.sum(np.log(lx[sym.lp[:-1]])))
    return CholFactor(sym, lx, logdet)


def solve(factor: CholFactor, b) -> np.ndarray:
    """Solve Q z = b for a vector or a matrix of right-hand sides."""
    s = factor.symbolic
    b = np.asarray(b, dtype=np.float64)
    if b.ndim not in (1, 2) or b.shape[0] != s.n:
        raise DimensionMismatch(f"right-hand side shape {b.shape} incompatible with n={s.n}")
    w = np.asfortranarray(b[s.perm] if b.ndim == 2 else b[s.perm][:, None])
    _forward(s.n, s.lp, s.li, factor.lx, w)
    _backward(s.n, s.lp, s.li, factor.lx, w)
    out = np.empty_like(w)
    out[s.perm] = w
    return out[:, 0] if b.ndim == 1 else out


def log_det(factor: CholFactor) -> float:
    return factor.log_det()


def selected_inverse(factor: CholFactor) -> SparseSymMatrix:
    """Entries of Q^-1 on the pattern of L + L^T, in the original ordering."""
    s = factor.symbolic
    z = _takahashi(s.n, s.lp, s.li, factor.lx)
    cols = np.repeat(np.arange(s.n), np.diff(s.lp))
    return SparseSymMatrix.from_coo(s.n, s.perm[s.li], s.perm[cols], z)
