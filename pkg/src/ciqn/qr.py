"""Compact Householder factorization of tall distributed matrices.

The quasi-Newton update needs the least-squares solution of a tall,
skinny system V*lam ~ -r where V has at most a few dozen columns but as
many rows as the interface.  We factor V = Q*[U; 0] with Householder
reflectors and never form Q or any p-by-p matrix: the factorization is
just the q unit reflector vectors (stored as distributed fields) plus
the small q-by-q upper triangle U, replicated on every rank.

Pivoting is restricted to rows owned by the leader rank (rows are
renumbered so those come first), which keeps the triangular reduction
local to the leader while the reflector applications stay fully
distributed, one reduction each.

A relative filter guards against (near-)linearly dependent columns:
after diagonal entry U[j, j] is computed, the j-th surviving column is
removed outright when |U[j, j]| < epsilon * ||U||_F (norm over the
entries filled so far), and the factorization restarts on the reduced
column set.  With epsilon = 0 the test never fires and an exactly
dependent column surfaces later as a "singular U" error from the
triangular solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from math import copysign, sqrt

import numpy as np
import scipy.linalg

from .field import InterfaceVector, PartitionLayout, _check_compatible
from .runtime import RankComm


class EmptySecantSpaceError(RuntimeError):
    """Every column was filtered out; nothing left to factor."""

    def __init__(self, dropped: list[int], restarts: int):
        super().__init__("empty secant space: all %d columns filtered"
                         % len(dropped))
        self.dropped = dropped
        self.restarts = restarts


class SingularUpperError(RuntimeError):
    """Exactly zero diagonal in U; enable filtering to drop the column."""


@dataclass
class IncrementMatrix:
    """Ordered distributed columns, newest increment first."""

    columns: list[InterfaceVector]

    def __post_init__(self):
        for c in self.columns[1:]:
            _check_compatible(self.columns[0], c)

    @property
    def q(self) -> int:
        return len(self.columns)


@dataclass
class FilterOutcome:
    """Which original column indices survived the dependence filter."""

    kept: list[int]
    dropped: list[int]
    restarts: int


@dataclass
class HouseholderStack:
    """The factorization: q reflectors plus the replicated triangle.

    reflectors[j] zeroes column j below pivot row j (renumbered
    ordering).  Each has unit norm or is identically zero; zero means
    the column was already reduced there and the reflector is the
    identity.  ``upper`` is q-by-q, identical on all ranks.
    """

    reflectors: list[InterfaceVector]
    upper: np.ndarray
    identity_flags: list[bool] = dataclass_field(default_factory=list)

    @property
    def q(self) -> int:
        return self.upper.shape[0]


def _reflector_from_column(layout: PartitionLayout, comm: RankComm,
                           col: np.ndarray, pivot: int):
    """Build the reflector zeroing ``col`` below renumbered row ``pivot``.

    Rows before the pivot (all leader-local) are treated as zero: they
    hold already-computed triangle entries and must not move again.
    Returns (u_local, alpha, is_identity); costs one reduction and one
    broadcast.
    """
    is_leader = comm.rank == layout.leader
    tail = col[pivot:] if is_leader else col
    sigma = sqrt(comm.allreduce_sum(float(tail @ tail)))
    pivot_value = comm.broadcast(
        float(col[pivot]) if is_leader else 0.0, root=layout.leader)
    zero_u = np.zeros_like(col)
    if sigma == 0.0:
        return zero_u, 0.0, True
    if pivot_value == sigma:
        # column already has the right shape; keep the positive pivot
        return zero_u, sigma, True
    alpha = -copysign(sigma, pivot_value)
    # ||col - alpha*e_pivot|| via replicated scalars; the sign choice
    # makes pivot_value - alpha an addition, never a cancellation
    nrm = sqrt(2.0 * sigma * (sigma + abs(pivot_value)))
    u = col / nrm
    if is_leader:
        u[:pivot] = 0.0
        u[pivot] = (pivot_value - alpha) / nrm
    return u, alpha, False


def householder_vector(v: InterfaceVector, pivot_row: int):
    """Reflector for one column: returns (u, alpha) with u distributed.

    ``pivot_row`` indexes the renumbered ordering and must fall in the
    leader's block.  After reflection the column is alpha at the pivot
    and zero below; u is a unit vector or exactly zero.
    """
    layout = v.layout
    if not 0 <= pivot_row < layout.leader_count:
        raise ValueError("pivot row %d outside the leader block (size %d)"
                         % (pivot_row, layout.leader_count))
    u_local, alpha, _ = _reflector_from_column(
        layout, v.comm, v.local.copy(), pivot_row)
    return InterfaceVector(layout, v.comm, u_local), alpha


def apply_reflector(u: InterfaceVector, t: InterfaceVector) -> InterfaceVector:
    """t - 2*u*(u.t): one reduction, local update."""
    _check_compatible(u, t)
    coef = u.comm.allreduce_sum(float(u.local @ t.local))
    return InterfaceVector(t.layout, t.comm, t.local - 2.0 * coef * u.local)


def decompose(matrix: IncrementMatrix, epsilon: float):
    """Factor the columns into (HouseholderStack, FilterOutcome).

    Columns that fail the relative diagonal test are dropped and the
    whole reduction restarts on the survivors (the triangle computed so
    far is not reusable once a column leaves).  Raises
    EmptySecantSpaceError when nothing survives.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if matrix.q == 0:
        raise EmptySecantSpaceError([], 0)
    first = matrix.columns[0]
    layout, comm = first.layout, first.comm
    if matrix.q > layout.leader_count:
        raise ValueError("%d columns exceed the leader block (%d rows)"
                         % (matrix.q, layout.leader_count))
    is_leader = comm.rank == layout.leader

    kept = list(range(matrix.q))
    dropped: list[int] = []
    restarts = 0
    while True:
        if not kept:
            raise EmptySecantSpaceError(dropped, restarts)
        k = len(kept)
        work = [matrix.columns[i].local.copy() for i in kept]
        reflectors: list[np.ndarray] = []
        flags: list[bool] = []
        upper = np.zeros((k, k))
        filtered = False
        for j in range(k):
            u, alpha, identity = _reflector_from_column(
                layout, comm, work[j], j)
            if is_leader:
                col_head = np.append(work[j][:j], alpha)
            else:
                col_head = None
            col_head = comm.broadcast(col_head, root=layout.leader)
            upper[:j + 1, j] = col_head
            if epsilon > 0.0:
                filled = np.sqrt(np.sum(upper[:, :j + 1] ** 2))
                if abs(upper[j, j]) < epsilon * filled:
                    dropped.append(kept.pop(j))
                    restarts += 1
                    filtered = True
                    break
            if not identity and j + 1 < k:
                partial = np.array([u @ work[i] for i in range(j + 1, k)])
                coefs = comm.allreduce_sum_array(partial)
                for off, i in enumerate(range(j + 1, k)):
                    work[i] -= 2.0 * coefs[off] * u
            if is_leader:
                work[j][j] = alpha
                work[j][j + 1:] = 0.0
            else:
                work[j][:] = 0.0
            reflectors.append(u)
            flags.append(identity)
        if filtered:
            continue
        stack = HouseholderStack(
            [InterfaceVector(layout, comm, u) for u in reflectors],
            upper, flags)
        return stack, FilterOutcome(kept, dropped, restarts)


def apply_qt(stack: HouseholderStack, r: InterfaceVector) -> np.ndarray:
    """First q rows of Q^T r, replicated on every rank.

    The reflectors are applied in construction order (the first one
    first); the result lives in the leader's first q rows and is
    broadcast from there.
    """
    layout, comm = r.layout, r.comm
    t = r.local.copy()
    for u, identity in zip(stack.reflectors, stack.identity_flags):
        if identity:
            continue
        coef = comm.allreduce_sum(float(u.local @ t))
        t -= 2.0 * coef * u.local
    q = stack.q
    head = t[:q] if comm.rank == layout.leader else None
    return np.asarray(comm.broadcast(head, root=layout.leader))


def back_substitute(stack: HouseholderStack, rhs: np.ndarray,
                    comm: RankComm, layout: PartitionLayout) -> np.ndarray:
    """Solve U*lam = rhs on the leader and broadcast lam.

    A diagonal entry indistinguishable from zero at working precision
    raises SingularUpperError (on every rank; U is replicated, so the
    test needs no communication).  An exactly dependent column lands a
    few ulps from zero after reduction, so the test must be a relative
    one; the threshold sits many orders below any diagonal a usable
    column can produce.
    """
    upper = stack.upper
    floor = 4.0 * layout.global_size * np.finfo(np.float64).eps \
        * np.sqrt(np.sum(upper ** 2))
    if np.any(np.abs(np.diag(upper)) <= floor):
        raise SingularUpperError("singular U")
    if comm.rank == layout.leader:
        lam = scipy.linalg.solve_triangular(upper, rhs, lower=False)
    else:
        lam = None
    return np.asarray(comm.broadcast(lam, root=layout.leader))


def reconstruct(stack: HouseholderStack, outcome_cols: int | None = None
                ) -> list[InterfaceVector]:
    """Rebuild the kept columns from [U; 0] by reversing the reflectors.

    Mainly a verification aid: the result should match the kept input
    columns to round-off.
    """
    refl = stack.reflectors
    if not refl:
        return []
    layout, comm = refl[0].layout, refl[0].comm
    ncols = stack.q if outcome_cols is None else outcome_cols
    out = []
    for i in range(ncols):
        full = np.zeros(layout.global_size)
        full[:stack.q] = stack.upper[:, i]
        start = layout.renumbered_starts[comm.rank]
        t = full[start:start + layout.counts[comm.rank]].copy()
        for u, identity in zip(reversed(refl), reversed(stack.identity_flags)):
            if identity:
                continue
            coef = comm.allreduce_sum(float(u.local @ t))
            t -= 2.0 * coef * u.local
        out.append(InterfaceVector(layout, comm, t))
    return out
