"""Loading, representing, and splitting binary relational data.

An adjacency matrix is dense N x N with entries in {0, 1}; the datasets this
package targets are at most a few thousand nodes, so dense storage keeps the
downstream cached arithmetic simple. Observation masks record which entries
are visible to the fitter (train) versus held out (test); the diagonal is
excluded by default since self-links are meaningless for these graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import ParseError

__all__ = [
    "AdjacencyMatrix",
    "ObservationMask",
    "load_edge_list",
    "load_dense_matrix",
    "split_observations",
    "write_dense",
    "write_mask",
    "load_mask",
]


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Dense binary relation over ``n`` nodes, with optional node labels.

    ``symmetric_hint`` records whether the source data looked symmetric at
    load time; split routines use it to decide whether mirrored entries
    should share a train/test assignment.
    """

    n: int
    entries: np.ndarray
    labels: list[str] | None = None
    symmetric_hint: bool = False

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int8)
        if entries.shape != (self.n, self.n):
            raise ValueError(f"entries must be {self.n}x{self.n}, got {entries.shape}")
        if not np.isin(entries, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if self.labels is not None:
            if len(self.labels) != self.n:
                raise ValueError(f"expected {self.n} labels, got {len(self.labels)}")
            if len(set(self.labels)) != self.n:
                raise ValueError("node labels must be distinct")


@dataclass(frozen=True)
class ObservationMask:
    """Boolean N x N mask of which entries of Y are observed.

    Masks with zero observed entries are legal (they arise from degenerate
    splits); operations that require observations validate locally.
    """

    n: int
    observed: np.ndarray

    def __post_init__(self):
        observed = np.asarray(self.observed, dtype=bool)
        if observed.shape != (self.n, self.n):
            raise ValueError(f"mask must be {self.n}x{self.n}, got {observed.shape}")
        observed.setflags(write=False)
        object.__setattr__(self, "observed", observed)

    @property
    def count(self) -> int:
        return int(self.observed.sum())

    @classmethod
    def full(cls, n: int, include_diagonal: bool = False) -> "ObservationMask":
        """Mask observing every entry (off-diagonal only unless requested)."""
        observed = np.ones((n, n), dtype=bool)
        if not include_diagonal:
            np.fill_diagonal(observed, False)
        return cls(n, observed)


def _iter_data_lines(stream: Iterable[str]):
    """Yield (line_number, stripped_line) skipping blanks and '#' comments."""
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def load_edge_list(stream: Iterable[str] | TextIO, n: int | None = None) -> AdjacencyMatrix:
    """Parse "src dst [value]" lines (tab- or space-separated) into a matrix.

    Node ids are non-negative integers; the optional third token must be 0
    or 1 (default 1). If ``n`` is omitted it is inferred as 1 + max id.
    Duplicate lines are idempotent. The result carries symmetric_hint=False:
    an edge list is read as a directed relation.
    """
    edges: list[tuple[int, int, int]] = []
    max_id = -1
    for lineno, line in _iter_data_lines(stream):
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 'src dst [value]', got {line!r}", lineno)
        try:
            src, dst = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", lineno) from None
        if src < 0 or dst < 0:
            raise ParseError(f"negative node id in {line!r}", lineno)
        if n is not None and (src >= n or dst >= n):
            raise ParseError(f"node id out of range (n={n}) in {line!r}", lineno)
        value = 1
        if len(parts) == 3:
            try:
                value = int(parts[2])
            except ValueError:
                raise ParseError(f"non-integer edge value in {line!r}", lineno) from None
            if value not in (0, 1):
                raise ParseError(f"edge value must be 0 or 1, got {value}", lineno)
        edges.append((src, dst, value))
        max_id = max(max_id, src, dst)

    if n is None and max_id < 0:
        raise ParseError("cannot infer node count from an empty edge list; pass n")
    size = n if n is not None else max_id + 1
    entries = np.zeros((size, size), dtype=np.int8)
    for src, dst, value in edges:
        entries[src, dst] = value
    return AdjacencyMatrix(size, entries, symmetric_hint=False)


def load_dense_matrix(stream: Iterable[str] | TextIO) -> AdjacencyMatrix:
    """Parse N rows of N whitespace-separated {0,1} tokens.

    symmetric_hint is set by checking the parsed matrix against its
    transpose.
    """
    rows: list[list[int]] = []
    row_lines: list[int] = []
    for lineno, line in _iter_data_lines(stream):
        tokens = line.split()
        try:
            row = [int(t) for t in tokens]
        except ValueError:
            raise ParseError(f"non-integer token in row {line!r}", lineno) from None
        if any(v not in (0, 1) for v in row):
            raise ParseError("matrix tokens must be 0 or 1", lineno)
        rows.append(row)
        row_lines.append(lineno)

    if not rows:
        raise ParseError("empty matrix file")
    size = len(rows)
    for row, lineno in zip(rows, row_lines):
        if len(row) != size:
            raise ParseError(f"ragged row: expected {size} tokens, got {len(row)}", lineno)
    entries = np.array(rows, dtype=np.int8)
    symmetric = bool((entries == entries.T).all())
    return AdjacencyMatrix(size, entries, symmetric_hint=symmetric)


def write_dense(adj: AdjacencyMatrix) -> str:
    """Serialize to the dense format; load_dense_matrix round-trips it bit-exactly."""
    return "\n".join(" ".join(str(int(v)) for v in row) for row in adj.entries) + "\n"


def split_observations(
    adj: AdjacencyMatrix,
    train_fraction: float,
    seed: int,
    tie_symmetric: bool | None = None,
) -> tuple[ObservationMask, ObservationMask]:
    """Partition off-diagonal entries into train and test masks, reproducibly.

    When ``tie_symmetric`` (default: the matrix's symmetric_hint), (i, j) and
    (j, i) always land in the same partition and the fraction applies to the
    (N^2-N)/2 unordered pairs. Train gets floor(train_fraction * M) of the M
    eligible units; test gets the rest. Diagonal entries are never eligible.
    """
    if not (0.0 < train_fraction <= 1.0):
        raise ValueError(f"train_fraction must be in (0, 1], got {train_fraction}")
    if tie_symmetric is None:
        tie_symmetric = adj.symmetric_hint
    n = adj.n
    rng = np.random.default_rng(seed)

    if tie_symmetric:
        units = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        units = [(i, j) for i in range(n) for j in range(n) if i != j]
    m = len(units)
    # guard against FP sitting a hair below an exact integer product
    n_train = int(math.floor(train_fraction * m + 1e-9))
    order = rng.permutation(m)

    train = np.zeros((n, n), dtype=bool)
    test = np.zeros((n, n), dtype=bool)
    for rank, unit_idx in enumerate(order):
        i, j = units[unit_idx]
        target = train if rank < n_train else test
        target[i, j] = True
        if tie_symmetric:
            target[j, i] = True
    return ObservationMask(n, train), ObservationMask(n, test)


def write_mask(train: ObservationMask, test: ObservationMask) -> str:
    """Serialize a split as "i j {0|1}" lines (1 = train), row-major order."""
    lines = []
    either = train.observed | test.observed
    for i, j in np.argwhere(either):
        lines.append(f"{i} {j} {1 if train.observed[i, j] else 0}")
    return "\n".join(lines) + "\n"


def load_mask(stream: Iterable[str] | TextIO, n: int) -> tuple[ObservationMask, ObservationMask]:
    """Parse a mask file back into (train, test) masks."""
    train = np.zeros((n, n), dtype=bool)
    test = np.zeros((n, n), dtype=bool)
    for lineno, line in _iter_data_lines(stream):
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'i j flag', got {line!r}", lineno)
        try:
            i, j, flag = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(f"non-integer token in {line!r}", lineno) from None
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"index out of range (n={n}) in {line!r}", lineno)
        if flag not in (0, 1):
            raise ParseError(f"mask flag must be 0 or 1, got {flag}", lineno)
        (train if flag == 1 else test)[i, j] = True
    return ObservationMask(n, train), ObservationMask(n, test)
