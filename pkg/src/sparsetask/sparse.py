"""Immutable CSR matrix, Matrix Market / SCSR file IO and the two sparse
products used by the input layer of the network."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateEntry, FormatError, IndexOutOfRange, ParseError, ShapeMismatch, VersionError

SCSR_MAGIC = b"SCSR"
SCSR_VERSION = 1


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed-sparse-row matrix in canonical form.

    Rows are sorted by column, no duplicate entries and no stored zeros.
    Instances are immutable; the backing arrays are read-only.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, np.int64))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        self._validate()

    def _validate(self):
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        if self.n_rows < 0 or self.n_cols < 0:
            raise ShapeMismatch(f"negative shape {self.shape}")
        if rp.shape != (self.n_rows + 1,) or rp[0] != 0:
            raise FormatError("row_ptr must have length n_rows+1 and start at 0")
        if np.any(np.diff(rp) < 0):
            raise FormatError("row_ptr must be non-decreasing")
        nnz = int(rp[-1])
        if ci.shape != (nnz,) or v.shape != (nnz,):
            raise FormatError(f"row_ptr[-1]={nnz} disagrees with col_idx/values lengths")
        if nnz:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise IndexOutOfRange(f"column index out of range for {self.n_cols} columns")
            step = np.diff(ci)
            # a non-increasing step is allowed only where a new row starts
            row_start = np.zeros(nnz, dtype=bool)
            row_start[rp[1:-1][rp[1:-1] < nnz]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise FormatError("column indices must be strictly increasing within a row")
            if np.any(v == 0):
                raise FormatError("explicit zeros are not allowed in canonical storage")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_of_entry(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))

    def pattern(self) -> "SparsityPattern":
        return SparsityPattern(self.n_rows, self.n_cols, self.row_ptr, self.col_idx)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_of_entry(), self.col_idx] = self.values
        return out

    def triplets(self) -> list[tuple[int, int, float]]:
        return list(zip(self.row_of_entry().tolist(), self.col_idx.tolist(), self.values.tolist()))

    def take_rows(self, rows: Sequence[int]) -> CsrMatrix:
        sub, _ = self.take_rows_indexed(rows)
        return sub

    def take_rows_indexed(self, rows: Sequence[int]) -> tuple[CsrMatrix, np.ndarray]:
        """Select ``rows`` (in the given order); also returns, for every entry
        of the result, its position in this matrix's storage."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.n_rows):
            raise IndexOutOfRange(f"row index out of range for {self.n_rows} rows")
        starts = self.row_ptr[rows]
        counts = self.row_ptr[rows + 1] - starts
        row_ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        # positions: starts[r] + 0..counts[r]-1 for each selected row
        entry = np.arange(row_ptr[-1], dtype=np.int64) - np.repeat(row_ptr[:-1] - starts, counts)
        return CsrMatrix(len(rows), self.n_cols, row_ptr, self.col_idx[entry], self.values[entry]), entry

    def with_values(self, values: np.ndarray) -> CsrMatrix:
        """Same pattern, new values (none of which may be zero)."""
        return CsrMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CsrMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and self.values.tobytes() == other.values.tobytes()
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"

    @classmethod
    def from_dense(cls, a) -> CsrMatrix:
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeMismatch(f"expected a 2-d array, got shape {a.shape}")
        r, c = np.nonzero(a)
        row_ptr = np.zeros(a.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=a.shape[0]), out=row_ptr[1:])
        return cls(a.shape[0], a.shape[1], row_ptr, c, a[r, c])

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> CsrMatrix:
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), [], [])


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """The (row, col) set of a CsrMatrix, without values."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    def keys(self) -> np.ndarray:
        """Sorted linear keys ``row * n_cols + col``."""
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))
        return rows * self.n_cols + self.col_idx

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return (
            (self.n_rows, self.n_cols) == (other.n_rows, other.n_cols)
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
        )

    __hash__ = None

    def __le__(self, other: SparsityPattern) -> bool:
        """Subset test."""
        if (self.n_rows, self.n_cols) != (other.n_rows, other.n_cols):
            return False
        return bool(np.all(np.isin(self.keys(), other.keys(), assume_unique=True)))


def csr_from_triplets(triplets: Iterable[tuple[int, int, float]], n_rows: int, n_cols: int) -> CsrMatrix:
    """Build a canonical CsrMatrix. Duplicate (row, col) pairs are an error,
    exact zeros are dropped."""
    trip = list(triplets)
    if trip:
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        vals = np.array([t[2] for t in trip], dtype=np.float64)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return csr_from_arrays(rows, cols, vals, n_rows, n_cols)


def csr_from_arrays(rows, cols, vals, n_rows: int, n_cols: int) -> CsrMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if not (rows.shape == cols.shape == vals.shape and rows.ndim == 1):
        raise ShapeMismatch("rows, cols and values must be 1-d arrays of equal length")
    bad = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise IndexOutOfRange(f"entry ({rows[k]}, {cols[k]}) outside {n_rows}x{n_cols} matrix")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
    if np.any(dup):
        k = int(np.argmax(dup))
        raise DuplicateEntry(f"duplicate entry ({rows[k]}, {cols[k]})")
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
    return CsrMatrix(n_rows, n_cols, row_ptr, cols, vals)


def spmm_dense(x: CsrMatrix, w: np.ndarray) -> np.ndarray:
    """``x @ w`` for sparse ``x`` and dense ``w``.

    Each output row is accumulated over its stored entries in ascending
    column order, starting from 0.0.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != x.n_cols:
        raise ShapeMismatch(f"cannot multiply {x.shape} sparse by {w.shape} dense")
    out = np.zeros((x.n_rows, w.shape[1]))
    counts = np.diff(x.row_ptr)
    if x.nnz == 0:
        return out
    # slot k holds the k-th entry of every row that has more than k entries
    for k in range(int(counts.max())):
        rows = np.flatnonzero(counts > k)
        pos = x.row_ptr[rows] + k
        out[rows] += x.values[pos, None] * w[x.col_idx[pos]]
    return out


def spmm_transpose_dense(x: CsrMatrix, g: np.ndarray) -> np.ndarray:
    """``x.T @ g``; contributions are accumulated row-major over ``x``."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != x.n_rows:
        raise ShapeMismatch(f"cannot multiply transpose of {x.shape} sparse by {g.shape} dense")
    out = np.zeros((x.n_cols, g.shape[1]))
    if x.nnz:
        # ufunc.at applies updates unbuffered, in index order
        np.add.at(out, x.col_idx, x.values[:, None] * g[x.row_of_entry()])
    return out


# -- Matrix Market ---------------------------------------------------------


def _format_value(v: float) -> str:
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_matrix_market(m: CsrMatrix, path) -> None:
    lines = ["%%MatrixMarket matrix coordinate real general", f"{m.n_rows} {m.n_cols} {m.nnz}"]
    for r, c, v in m.triplets():
        lines.append(f"{r + 1} {c + 1} {_format_value(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_market(path) -> CsrMatrix:
    """Read a coordinate real/integer general Matrix Market file."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline()
        parts = header.lower().split()
        if len(parts) != 5 or parts[0] != "%%matrixmarket" or parts[1] != "matrix":
            raise ParseError(f"{path}: bad Matrix Market header {header.strip()!r}")
        if parts[2] != "coordinate":
            raise ParseError(f"{path}: only coordinate format is supported, got {parts[2]}")
        if parts[3] not in ("real", "integer"):
            raise ParseError(f"{path}: unsupported field {parts[3]}")
        if parts[4] != "general":
            raise ParseError(f"{path}: unsupported symmetry {parts[4]}")
        size = None
        rows, cols, vals = [], [], []
        for lineno, line in enumerate(fh, start=2):
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            tok = s.split()
            try:
                if size is None:
                    if len(tok) != 3:
                        raise ValueError
                    size = tuple(int(t) for t in tok)
                    if min(size) < 0:
                        raise ValueError
                    continue
                if len(tok) != 3:
                    raise ValueError
                r, c = int(tok[0]), int(tok[1])
                v = int(tok[2]) if parts[3] == "integer" else float(tok[2])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed line {s!r}") from None
            rows.append(r - 1)
            cols.append(c - 1)
            vals.append(v)
    if size is None:
        raise ParseError(f"{path}: missing size line")
    n_rows, n_cols, nnz = size
    if len(rows) != nnz:
        raise ParseError(f"{path}: size line declares {nnz} entries, found {len(rows)}")
    try:
        return csr_from_arrays(rows, cols, vals, n_rows, n_cols)
    except (IndexOutOfRange, DuplicateEntry) as exc:
        # report 1-based indices as they appear in the file
        raise type(exc)(f"{path}: {exc} (0-based)") from None


# -- SCSR binary container -------------------------------------------------

_SCSR_HEAD = struct.Struct("<4sIQQQ")


def write_scsr(m: CsrMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_SCSR_HEAD.pack(SCSR_MAGIC, SCSR_VERSION, m.n_rows, m.n_cols, m.nnz))
        fh.write(m.row_ptr.astype("<u8").tobytes())
        fh.write(m.col_idx.astype("<u8").tobytes())
        fh.write(m.values.astype("<f8").tobytes())


def read_scsr(path) -> CsrMatrix:
    data = Path(path).read_bytes()
    if len(data) < _SCSR_HEAD.size:
        raise FormatError(f"{path}: truncated SCSR header")
    magic, version, n_rows, n_cols, nnz = _SCSR_HEAD.unpack_from(data)
    if magic != SCSR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != SCSR_VERSION:
        raise VersionError(f"{path}: unsupported SCSR version {version}")
    expected = _SCSR_HEAD.size + 8 * (n_rows + 1) + 16 * nnz
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _SCSR_HEAD.size
    row_ptr = np.frombuffer(data, "<u8", n_rows + 1, off).astype(np.int64)
    off += 8 * (n_rows + 1)
    col_idx = np.frombuffer(data, "<u8", nnz, off).astype(np.int64)
    off += 8 * nnz
    values = np.frombuffer(data, "<f8", nnz, off).astype(np.float64)
    try:
        return CsrMatrix(n_rows, n_cols, row_ptr, col_idx, values)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def read_matrix(path) -> CsrMatrix:
    """Read either format; SCSR is recognised by its magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == SCSR_MAGIC:
        return read_scsr(path)
    return read_matrix_market(path)


def write_matrix(m: CsrMatrix, path) -> None:
    if str(path).endswith(".scsr"):
        write_scsr(m, path)
    else:
        write_matrix_market(m, path)
