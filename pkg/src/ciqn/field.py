"""Row-partitioned interface vectors and the BLAS-1 kernels on them.

An interface field of global size p is split into contiguous row slices,
one per rank.  Two global orderings coexist:

* the *physical* ordering, rank 0's rows first, then rank 1's, and so
  on -- this is the ordering the coupled problems are written in;
* the *renumbered* ordering used by the factorization kernels, where the
  leader rank's rows come first and the remaining ranks follow in rank
  order.  Pivoting is restricted to leader rows, so putting them first
  makes pivot row j simply leader-local row j.

Local storage is identical under both orderings (each rank keeps its
slice contiguously); only the global concatenation order differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .runtime import RankComm, select_leader


@dataclass(frozen=True)
class PartitionLayout:
    """Static description of one row partitioning.

    counts[r] is the number of rows rank r owns.  The leader owns the
    most rows (ties to the lowest rank id) and hosts the pivoting and
    triangular work.
    """

    counts: tuple[int, ...]
    leader: int
    global_size: int
    physical_starts: tuple[int, ...]
    renumbered_starts: tuple[int, ...]

    @classmethod
    def from_counts(cls, counts) -> "PartitionLayout":
        counts = tuple(int(c) for c in counts)
        leader = select_leader(counts)
        phys = []
        off = 0
        for c in counts:
            phys.append(off)
            off += c
        renum = [0] * len(counts)
        roff = counts[leader]
        for r in range(len(counts)):
            if r == leader:
                renum[r] = 0
            else:
                renum[r] = roff
                roff += counts[r]
        return cls(counts, leader, off, tuple(phys), tuple(renum))

    @property
    def nranks(self) -> int:
        return len(self.counts)

    @property
    def leader_count(self) -> int:
        return self.counts[self.leader]

    def owner_of_renumbered(self, j: int) -> tuple[int, int]:
        """Map a renumbered global row to (owning rank, local index)."""
        if not 0 <= j < self.global_size:
            raise IndexError("row %d out of range" % j)
        for r in range(self.nranks):
            start = self.renumbered_starts[r]
            if start <= j < start + self.counts[r]:
                return r, j - start
        raise IndexError("row %d not owned" % j)  # unreachable


def split_evenly(global_size: int, nranks: int) -> tuple[int, ...]:
    """Near-equal contiguous split; the first ranks take the remainder."""
    if nranks < 1:
        raise ValueError("need at least one rank")
    if global_size < 1:
        raise ValueError("empty interface")
    base, extra = divmod(global_size, nranks)
    return tuple(base + (1 if r < extra else 0) for r in range(nranks))


@dataclass
class InterfaceVector:
    """One rank's slice of a global interface field."""

    layout: PartitionLayout
    comm: RankComm
    local: np.ndarray

    def __post_init__(self):
        self.local = np.asarray(self.local, dtype=np.float64)
        if self.local.ndim != 1:
            raise ValueError("local slice must be 1-D")
        expect = self.layout.counts[self.comm.rank]
        if self.local.shape[0] != expect:
            raise ValueError("rank %d expects %d rows, got %d"
                             % (self.comm.rank, expect, self.local.shape[0]))

    def copy(self) -> "InterfaceVector":
        return InterfaceVector(self.layout, self.comm, self.local.copy())


def zeros(layout: PartitionLayout, comm: RankComm) -> InterfaceVector:
    return InterfaceVector(layout, comm, np.zeros(layout.counts[comm.rank]))


def _check_compatible(a: InterfaceVector, b: InterfaceVector) -> None:
    if a.layout != b.layout:
        raise ValueError("mismatched layouts")


def dot(a: InterfaceVector, b: InterfaceVector) -> float:
    """Global inner product: one reduction, rank-ordered fold."""
    _check_compatible(a, b)
    return a.comm.allreduce_sum(float(a.local @ b.local))


def norm2(a: InterfaceVector) -> float:
    """Global Euclidean norm (one reduction)."""
    return float(np.sqrt(dot(a, a)))


def axpy(alpha: float, x: InterfaceVector, y: InterfaceVector) -> InterfaceVector:
    """y + alpha*x, elementwise on local slices.  No communication."""
    _check_compatible(x, y)
    return InterfaceVector(y.layout, y.comm, y.local + alpha * x.local)


def scale(alpha: float, x: InterfaceVector) -> InterfaceVector:
    return InterfaceVector(x.layout, x.comm, alpha * x.local)


def unit_at(layout: PartitionLayout, comm: RankComm, j: int) -> InterfaceVector:
    """Unit vector for renumbered global row j.  No communication."""
    rank, li = layout.owner_of_renumbered(j)
    local = np.zeros(layout.counts[comm.rank])
    if comm.rank == rank:
        local[li] = 1.0
    return InterfaceVector(layout, comm, local)


def gather(v: InterfaceVector) -> np.ndarray:
    """Full field in physical ordering, replicated on every rank."""
    parts = v.comm.allgather(v.local)
    full = np.empty(v.layout.global_size)
    for r, part in enumerate(parts):
        start = v.layout.physical_starts[r]
        full[start:start + v.layout.counts[r]] = part
    return full


def gather_renumbered(v: InterfaceVector) -> np.ndarray:
    """Full field in renumbered (leader-first) ordering."""
    parts = v.comm.allgather(v.local)
    full = np.empty(v.layout.global_size)
    for r, part in enumerate(parts):
        start = v.layout.renumbered_starts[r]
        full[start:start + v.layout.counts[r]] = part
    return full


def distribute(layout: PartitionLayout, comm: RankComm,
               full) -> InterfaceVector:
    """Take this rank's slice of a physically ordered full field."""
    full = np.asarray(full, dtype=np.float64)
    if full.shape != (layout.global_size,):
        raise ValueError("full field has wrong size")
    start = layout.physical_starts[comm.rank]
    return InterfaceVector(layout, comm,
                           full[start:start + layout.counts[comm.rank]].copy())


def distribute_renumbered(layout: PartitionLayout, comm: RankComm,
                          full) -> InterfaceVector:
    """Take this rank's slice of a renumbered-ordered full field."""
    full = np.asarray(full, dtype=np.float64)
    if full.shape != (layout.global_size,):
        raise ValueError("full field has wrong size")
    start = layout.renumbered_starts[comm.rank]
    return InterfaceVector(layout, comm,
                           full[start:start + layout.counts[comm.rank]].copy())
