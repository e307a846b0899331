"""Measurement-matrix ensembles.

Four constructions over a shared edge-list representation:

* homogeneous: K nonzeros per row, H = alpha*K per column, values +-1
* block: L x L grid of sparse bi-regular blocks on a tridiagonal band,
  couplings (J1, 1, J2), oversampled first block row (alpha_1 = 1)
* striped: L x L bi-regular seed block plus a diagonal stripe of width
  2*L*alpha' through the remaining rectangle, with wrap-around of the
  last columns into the seed region
* dense: iid Gaussian entries of variance 1/N stored in the same edge
  structure (timing baseline only)
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    InfeasibleGraph,
    NonIntegerDegree,
    ParseError,
    SizeLimit,
    WindowTooSmall,
)

DENSE_EDGE_BUDGET = 40_000_000

VARIANTS = ("homogeneous", "block", "striped", "dense")


def _round_half_up(x):
    return int(math.floor(x + 0.5))


class SparseMatrix:
    """Bipartite edge structure: parallel arrays (row, col, val) plus lazily
    built per-row / per-column adjacency (ordered lists of edge ids)."""

    def __init__(self, n_rows, n_cols, row, col, val):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row = np.ascontiguousarray(row, dtype=np.int32)
        self.col = np.ascontiguousarray(col, dtype=np.int32)
        self.val = np.ascontiguousarray(val, dtype=np.float64)
        if not (self.row.size == self.col.size == self.val.size):
            raise DimensionMismatch("row/col/val arrays differ in length")
        self._val_sq = None
        self._row_adj = None
        self._col_adj = None

    @property
    def nnz(self):
        return self.val.size

    @property
    def val_sq(self):
        if self._val_sq is None:
            self._val_sq = self.val * self.val
        return self._val_sq

    @property
    def edges(self):
        """Edge list as (row, col, value) tuples."""
        return list(zip(self.row.tolist(), self.col.tolist(), self.val.tolist()))

    def _adjacency(self, index, n):
        order = np.argsort(index, kind="stable")
        counts = np.bincount(index, minlength=n)
        return np.split(order, np.cumsum(counts)[:-1])

    @property
    def row_adjacency(self):
        if self._row_adj is None:
            self._row_adj = self._adjacency(self.row, self.n_rows)
        return self._row_adj

    @property
    def col_adjacency(self):
        if self._col_adj is None:
            self._col_adj = self._adjacency(self.col, self.n_cols)
        return self._col_adj

    def row_degrees(self):
        return np.bincount(self.row, minlength=self.n_rows)

    def col_degrees(self):
        return np.bincount(self.col, minlength=self.n_cols)

    def to_dense(self):
        dense = np.zeros((self.n_rows, self.n_cols))
        dense[self.row, self.col] = self.val
        return dense

    def validate(self):
        """Check the structural invariants; raise DimensionMismatch on failure."""
        if self.nnz == 0:
            raise DimensionMismatch("empty edge list")
        if self.row.min() < 0 or self.row.max() >= self.n_rows:
            raise DimensionMismatch("row index out of range")
        if self.col.min() < 0 or self.col.max() >= self.n_cols:
            raise DimensionMismatch("col index out of range")
        keys = self.row.astype(np.int64) * self.n_cols + self.col
        if np.unique(keys).size != self.nnz:
            raise DimensionMismatch("duplicate (row, col) pair")
        if (self.row_degrees() == 0).any():
            raise DimensionMismatch("empty row")
        if (self.col_degrees() == 0).any():
            raise DimensionMismatch("empty column")

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.row, other.row)
            and np.array_equal(self.col, other.col)
            and np.array_equal(self.val, other.val)
        )


@dataclass(frozen=True)
class EnsembleSpec:
    """Complete description of one matrix draw; same spec => same matrix."""

    variant: str
    n: int
    m: int
    k: int = 0
    l: int = 0
    j1: float = 4.0
    j2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.n <= 0 or self.m <= 0:
            raise ValueError("n and m must be positive")

    @property
    def alpha(self):
        return self.m / self.n

    def with_seed(self, seed):
        return replace(self, seed=seed)

    def canonical(self):
        return (
            f"variant={self.variant} n={self.n} m={self.m} k={self.k} "
            f"l={self.l} j1={self.j1:.17g} j2={self.j2:.17g} seed={self.seed}"
        )


def _signs(rng, size):
    return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0


def _biregular(n_rows, n_cols, row_deg, col_deg, rng):
    """Uniform-ish simple bipartite graph with exact degrees on both sides.

    Configuration model: pair row stubs with shuffled column stubs, then
    repair duplicate (row, col) pairs by swapping column endpoints with
    random partner edges. Budget: 100 * |edges| swap attempts.
    """
    if n_rows * row_deg != n_cols * col_deg:
        raise NonIntegerDegree(
            f"stub mismatch: {n_rows}x{row_deg} rows vs {n_cols}x{col_deg} cols"
        )
    if row_deg > n_cols or col_deg > n_rows or row_deg <= 0 or col_deg <= 0:
        raise InfeasibleGraph(
            f"degrees ({row_deg}, {col_deg}) infeasible for {n_rows}x{n_cols}"
        )
    if row_deg == n_cols:
        # complete bipartite block: the simple graph is unique
        grid_r, grid_c = np.divmod(np.arange(n_rows * n_cols, dtype=np.int64), n_cols)
        return grid_r, grid_c
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), row_deg)
    cols = np.repeat(np.arange(n_cols, dtype=np.int64), col_deg)
    rng.shuffle(cols)
    n_edges = rows.size

    keys = rows * n_cols + cols
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    cnt = dict(zip(uniq.tolist(), counts.tolist()))
    bad = list(np.flatnonzero(counts[inverse] > 1))

    budget = 100 * n_edges
    attempts = 0
    while bad:
        i = bad.pop()
        ki = int(rows[i] * n_cols + cols[i])
        if cnt.get(ki, 0) <= 1:
            continue
        attempts += 1
        if attempts > budget:
            raise InfeasibleGraph(
                f"swap budget exhausted repairing duplicates "
                f"({n_rows}x{n_cols}, degrees {row_deg}/{col_deg})"
            )
        j = int(rng.integers(n_edges))
        kin = int(rows[i] * n_cols + cols[j])
        kjn = int(rows[j] * n_cols + cols[i])
        if kin != kjn and cnt.get(kin, 0) == 0 and cnt.get(kjn, 0) == 0:
            kj = int(rows[j] * n_cols + cols[j])
            cnt[ki] -= 1
            cnt[kj] -= 1
            cnt[kin] = 1
            cnt[kjn] = 1
            cols[i], cols[j] = cols[j], cols[i]
        else:
            bad.append(i)
    return rows, cols


def generate_homogeneous(spec):
    """K nonzeros in every row, H = alpha*K in every column, values +-1."""
    if spec.variant != "homogeneous":
        raise ValueError(f"variant {spec.variant!r} is not homogeneous")
    n, m, k = spec.n, spec.m, spec.k
    if (m * k) % n != 0:
        raise NonIntegerDegree(f"alpha*K = {m}*{k}/{n} is not an integer")
    h = (m * k) // n
    rng = np.random.default_rng(spec.seed)
    rows, cols = _biregular(m, n, k, h, rng)
    val = _signs(rng, rows.size)
    return SparseMatrix(m, n, rows, cols, val)


def _block_profile(spec):
    """Derived block quantities (nl, m1, mp, hp) with exact integer checks."""
    n, m, big_l, k = spec.n, spec.m, spec.l, spec.k
    if n % big_l != 0:
        raise NonIntegerDegree(f"N={n} not divisible by L={big_l}")
    nl = n // big_l
    m1 = nl  # alpha_1 = 1
    # alpha_p = (L*alpha - 1)/(L - 1) for p != 1, exact in integers:
    # M_p = alpha_p * N / L = (L*M - N) / (L*(L-1))
    num = big_l * m - n
    if num <= 0:
        raise NonIntegerDegree(f"L*alpha = {big_l * m}/{n} must exceed 1")
    if num % (big_l * (big_l - 1)) != 0:
        raise NonIntegerDegree(
            f"M_p = ({big_l}*{m} - {n})/({big_l}*({big_l}-1)) is not an integer"
        )
    mp = num // (big_l * (big_l - 1))
    # h_p = alpha_p * k = k * M_p / (N/L)
    if (k * mp) % nl != 0:
        raise NonIntegerDegree(f"h_p = {k}*{mp}/{nl} is not an integer")
    hp = (k * mp) // nl
    if (k * m1) % nl != 0:
        raise NonIntegerDegree(f"h_1 = {k}*{m1}/{nl} is not an integer")
    h1 = (k * m1) // nl
    if m1 + (big_l - 1) * mp != m:
        raise NonIntegerDegree("block row sizes do not add up to M")
    return nl, m1, mp, h1, hp


def generate_block(spec):
    """L x L block grid, nonzero only on the tridiagonal band, couplings
    J(p, p-1) = J1, J(p, p) = 1, J(p, p+1) = J2; first block row has
    alpha_1 = 1. Each nonempty block is k-per-row, h_p-per-column with
    equiprobable signs."""
    if spec.variant != "block":
        raise ValueError(f"variant {spec.variant!r} is not block")
    big_l = spec.l
    rng = np.random.default_rng(spec.seed)
    if big_l == 1:
        # degenerate single block: plain homogeneous ensemble with J = 1
        flat = EnsembleSpec(
            "homogeneous", spec.n, spec.m, spec.k, seed=spec.seed
        )
        return generate_homogeneous(flat)
    nl, m1, mp, h1, hp = _block_profile(spec)
    row_start = np.zeros(big_l + 1, dtype=np.int64)
    for p in range(1, big_l + 1):
        row_start[p] = row_start[p - 1] + (m1 if p == 1 else mp)

    rows_all, cols_all, vals_all = [], [], []
    for p in range(1, big_l + 1):
        n_rows_p = m1 if p == 1 else mp
        h_p = h1 if p == 1 else hp
        for q in (p - 1, p, p + 1):
            if q < 1 or q > big_l:
                continue
            mag = spec.j1 if q == p - 1 else (1.0 if q == p else spec.j2)
            r, c = _biregular(n_rows_p, nl, spec.k, h_p, rng)
            rows_all.append(r + row_start[p - 1])
            cols_all.append(c + (q - 1) * nl)
            vals_all.append(_signs(rng, r.size) * mag)
    return SparseMatrix(
        spec.m,
        spec.n,
        np.concatenate(rows_all),
        np.concatenate(cols_all),
        np.concatenate(vals_all),
    )


def generate_striped(spec):
    """Seed block plus diagonal stripe; see the module docstring.

    Per stripe column: n_c = round(2*K*alpha') elements at distinct rows in
    a window of integer half-width round(L*alpha') around the diagonal row
    r*(c) = L + round((c-L)*alpha'); the admissible row closest to r* takes
    the fixed value +1; an element at distance d from r* has magnitude 1
    when d <= L*alpha'/3, else J1 below / J2 above the diagonal, with
    equiprobable sign. Elements with r > M (possible only in the last L
    columns) wrap via r -> r-(M-L), c -> c-(N-L).
    """
    if spec.variant != "striped":
        raise ValueError(f"variant {spec.variant!r} is not striped")
    n, m, big_l, k = spec.n, spec.m, spec.l, spec.k
    if not 1 <= big_l < min(n, m):
        raise InfeasibleGraph(f"L={big_l} outside [1, min(N, M))")
    ap = (m - big_l) / (n - big_l)
    if not 0.0 < ap < 1.0:
        raise InfeasibleGraph(f"residual rate alpha'={ap} outside (0, 1)")
    rng = np.random.default_rng(spec.seed)

    # 1-based arithmetic below mirrors the construction rules; indices are
    # shifted to 0-based only when edge arrays are emitted.
    seed_rows, seed_cols = _biregular(big_l, big_l, k, k, rng)
    seed_vals = _signs(rng, seed_rows.size)

    w = _round_half_up(big_l * ap)
    n_c = _round_half_up(2 * k * ap)
    near = big_l * ap / 3.0

    rows, cols, vals = [seed_rows + 1], [seed_cols + 1], [seed_vals]
    for c in range(big_l + 1, n + 1):
        r_star = big_l + _round_half_up((c - big_l) * ap)
        lo = max(big_l + 1, r_star - w)
        hi = r_star + w
        if c <= n - big_l:
            hi = min(hi, m)  # wrap is defined only for the last L columns
        count = hi - lo + 1
        if count < n_c:
            raise WindowTooSmall(
                f"column {c}: window [{lo}, {hi}] has {count} rows < n_c={n_c}"
            )
        forced = min(max(r_star, lo), hi)
        f_pos = forced - lo
        pick = rng.choice(count - 1, size=n_c - 1, replace=False)
        pick = np.where(pick >= f_pos, pick + 1, pick)
        r = np.concatenate(([forced], lo + pick))
        d = np.abs(r - r_star)
        mag = np.where(d <= near, 1.0, np.where(r > r_star, spec.j1, spec.j2))
        v = _signs(rng, n_c) * mag
        v[0] = 1.0  # fixed near-diagonal element
        c_arr = np.full(n_c, c, dtype=np.int64)
        over = r > m
        if over.any():
            r = np.where(over, r - (m - big_l), r)
            c_arr = np.where(over, c_arr - (n - big_l), c_arr)
        rows.append(r)
        cols.append(c_arr)
        vals.append(v)

    row = np.concatenate(rows) - 1
    col = np.concatenate(cols) - 1
    val = np.concatenate(vals)
    mat = SparseMatrix(m, n, row, col, val)
    # wrapped elements cannot collide (distinct source rows per column and a
    # unique wrapped column per source column) but re-draw defensively
    keys = mat.row.astype(np.int64) * n + mat.col
    if np.unique(keys).size != keys.size:  # pragma: no cover
        order = np.argsort(keys, kind="stable")
        dup = order[1:][keys[order][1:] == keys[order][:-1]]
        taken = set(keys.tolist())
        for e in dup:
            while True:
                r_new = int(rng.integers(big_l, big_l + w)) + 1
                k_new = (r_new - 1) * np.int64(n) + mat.col[e]
                if k_new not in taken:
                    taken.add(int(k_new))
                    mat.row[e] = r_new - 1
                    break
    return mat


def generate_dense(spec, max_edges=DENSE_EDGE_BUDGET):
    """All N*M entries iid Gaussian(0, 1/N), stored as a full edge list."""
    if spec.variant != "dense":
        raise ValueError(f"variant {spec.variant!r} is not dense")
    n, m = spec.n, spec.m
    if n * m > max_edges:
        raise SizeLimit(f"N*M = {n * m} exceeds edge budget {max_edges}")
    rng = np.random.default_rng(spec.seed)
    val = rng.normal(0.0, 1.0 / math.sqrt(n), size=n * m)
    row = np.repeat(np.arange(m, dtype=np.int32), n)
    col = np.tile(np.arange(n, dtype=np.int32), m)
    return SparseMatrix(m, n, row, col, val)


_GENERATORS = {
    "homogeneous": generate_homogeneous,
    "block": generate_block,
    "striped": generate_striped,
    "dense": generate_dense,
}


def generate(spec):
    """Dispatch to the variant's generator."""
    return _GENERATORS[spec.variant](spec)


def _format_value(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.17g}"


def serialize_matrix(matrix, path, header_comment=None):
    """Text format: optional '#' comment lines, then "N M nnz", then one
    "row col value" line per edge (0-based)."""
    lines = []
    if header_comment is not None:
        lines.append(f"# {header_comment}")
    lines.append(f"{matrix.n_cols} {matrix.n_rows} {matrix.nnz}")
    rows = matrix.row.tolist()
    cols = matrix.col.tolist()
    vals = matrix.val.tolist()
    lines.extend(
        f"{r} {c} {_format_value(v)}" for r, c, v in zip(rows, cols, vals)
    )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def deserialize_matrix(path):
    """Inverse of serialize_matrix; exact round trip."""
    with open(path) as fh:
        raw = fh.readlines()
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(raw)]
    rows = [(no, ln) for no, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError("empty matrix file")
    no, head = rows[0]
    parts = head.split()
    if len(parts) != 3:
        raise ParseError(f"header must be 'N M nnz', got {head!r}", line=no)
    try:
        n, m, nnz = (int(p) for p in parts)
    except ValueError:
        raise ParseError(f"non-integer header field in {head!r}", line=no) from None
    body = rows[1:]
    if len(body) != nnz:
        raise DimensionMismatch(f"header says {nnz} edges, file has {len(body)}")
    if nnz == 0:
        raise DimensionMismatch("empty edge list")
    r_arr = np.empty(nnz, dtype=np.int32)
    c_arr = np.empty(nnz, dtype=np.int32)
    v_arr = np.empty(nnz, dtype=np.float64)
    seen = set()
    for e, (no, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'row col value', got {ln!r}", line=no)
        try:
            r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad field in {ln!r}", line=no) from None
        if not (0 <= r < m and 0 <= c < n):
            raise ParseError(f"index ({r}, {c}) out of range", line=no)
        if (r, c) in seen:
            raise ParseError(f"duplicate edge ({r}, {c})", line=no)
        seen.add((r, c))
        r_arr[e], c_arr[e], v_arr[e] = r, c, v
    mat = SparseMatrix(m, n, r_arr, c_arr, v_arr)
    mat.validate()
    return mat
