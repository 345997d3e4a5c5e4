"""Shared test helpers for the simulated-rank modules."""

import numpy as np

from ciqn.field import InterfaceVector, PartitionLayout, distribute_renumbered
from ciqn.qr import IncrementMatrix, apply_qt, back_substitute, decompose
from ciqn.runtime import RankComm, run_spmd


def single_rank(p: int):
    """Layout and communicator for a one-rank team of p rows."""
    return PartitionLayout.from_counts([p]), RankComm(0, 1, None)


def on_team(counts, body, timeout: float = 30.0):
    """Run ``body(comm, layout)`` on each rank; per-rank results in rank order."""
    layout = PartitionLayout.from_counts(counts)
    return run_spmd(len(counts), lambda comm: body(comm, layout),
                    timeout=timeout)


def vector(layout, comm, full) -> InterfaceVector:
    """Distributed vector from a dense renumbered-ordered array."""
    return distribute_renumbered(layout, comm, np.asarray(full, dtype=float))


def dense_columns(layout, comm, dense):
    """Column InterfaceVectors from a p-by-q array in renumbered order."""
    return [vector(layout, comm, dense[:, j]) for j in range(dense.shape[1])]


def compact_lstsq(dense_v, r_full, epsilon=0.0):
    """Single-rank run of the whole pipeline; returns (lam, stack, outcome)."""
    layout, comm = single_rank(dense_v.shape[0])
    cols = dense_columns(layout, comm, dense_v)
    stack, outcome = decompose(IncrementMatrix(cols), epsilon)
    head = apply_qt(stack, vector(layout, comm, r_full))
    lam = back_substitute(stack, -head, comm, layout)
    return lam, stack, outcome


def random_tall(p, q, cond, rng):
    """p-by-q matrix with prescribed condition number (singular 1..1/cond)."""
    basis, _ = np.linalg.qr(rng.standard_normal((p, q)))
    rot, _ = np.linalg.qr(rng.standard_normal((q, q)))
    sv = cond ** -np.linspace(0.0, 1.0, q)
    return basis @ (sv[:, None] * rot)
