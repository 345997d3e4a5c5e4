"""Partitioned interface vectors and their BLAS-1 kernels."""

import numpy as np
import pytest

from ciqn import field
from ciqn.field import InterfaceVector, PartitionLayout, split_evenly
from ciqn.runtime import RankComm, run_spmd

from conftest import on_team, single_rank, vector


def test_layout_orderings():
    layout = PartitionLayout.from_counts([3, 7, 2])
    assert layout.leader == 1
    assert layout.global_size == 12
    assert layout.physical_starts == (0, 3, 10)
    # renumbered: leader rows first, others follow in rank order
    assert layout.renumbered_starts == (7, 0, 10)
    assert layout.leader_count == 7
    assert layout.nranks == 3


def test_owner_of_renumbered_roundtrip():
    layout = PartitionLayout.from_counts([3, 7, 2])
    for j in range(layout.global_size):
        rank, li = layout.owner_of_renumbered(j)
        assert layout.renumbered_starts[rank] + li == j
        assert 0 <= li < layout.counts[rank]
    with pytest.raises(IndexError):
        layout.owner_of_renumbered(12)


def test_split_evenly():
    assert split_evenly(10, 3) == (4, 3, 3)
    assert split_evenly(4, 4) == (1, 1, 1, 1)
    with pytest.raises(ValueError):
        split_evenly(10, 0)
    with pytest.raises(ValueError):
        split_evenly(0, 2)


def test_vector_validates_local_slice():
    layout, comm = single_rank(3)
    with pytest.raises(ValueError):
        InterfaceVector(layout, comm, np.zeros(2))
    with pytest.raises(ValueError):
        InterfaceVector(layout, comm, np.zeros((3, 1)))


def test_dot_ones():
    def body(comm, layout):
        v = vector(layout, comm, [1.0, 1.0, 1.0, 1.0])
        return field.dot(v, v)

    assert on_team([2, 2], body) == [4.0, 4.0]


def test_dot_single_rank():
    layout, comm = single_rank(2)
    a = InterfaceVector(layout, comm, np.array([1.0, 2.0]))
    b = InterfaceVector(layout, comm, np.array([3.0, 4.0]))
    assert field.dot(a, b) == 11.0


def test_dot_matches_single_rank_reference():
    rng = np.random.default_rng(7)
    a_full, b_full = rng.standard_normal(17), rng.standard_normal(17)
    reference = float(a_full @ b_full)

    def body(comm, layout):
        return field.dot(vector(layout, comm, a_full),
                         vector(layout, comm, b_full))

    for got in on_team([6, 6, 5], body):
        assert got == pytest.approx(reference, rel=1e-14)


def test_norm_examples():
    layout, comm = single_rank(2)
    assert field.norm2(field.zeros(layout, comm)) == 0.0
    v = InterfaceVector(layout, comm, np.array([3.0, 4.0]))
    assert field.norm2(v) == 5.0


def test_norm_cross_partition_agreement():
    rng = np.random.default_rng(3)
    full = rng.standard_normal(33)
    reference = float(np.linalg.norm(full))

    def body(comm, layout):
        return field.norm2(vector(layout, comm, full))

    for got in on_team([9, 8, 8, 8], body):
        assert got == pytest.approx(reference, rel=1e-13)


def test_axpy_is_local():
    def body(comm, layout):
        x = vector(layout, comm, [1.0, 2.0, 3.0, 4.0])
        y = vector(layout, comm, [10.0, 10.0, 10.0, 10.0])
        before = comm.total_collectives
        out = field.axpy(-2.0, x, y)
        made = comm.total_collectives - before
        return made, field.gather_renumbered(out)

    for made, full in on_team([2, 2], body):
        assert made == 0
        np.testing.assert_array_equal(full, [8.0, 6.0, 4.0, 2.0])


def test_scale():
    layout, comm = single_rank(3)
    v = InterfaceVector(layout, comm, np.array([1.0, -2.0, 4.0]))
    np.testing.assert_array_equal(field.scale(0.5, v).local, [0.5, -1.0, 2.0])


def test_unit_at_renumbered_basis():
    def body(comm, layout):
        before = comm.total_collectives
        e = field.unit_at(layout, comm, 4)
        made = comm.total_collectives - before
        return made, field.gather_renumbered(e)

    for made, full in on_team([2, 3], body):
        assert made == 0
        expect = np.zeros(5)
        expect[4] = 1.0
        np.testing.assert_array_equal(full, expect)


def test_gather_distribute_roundtrip():
    rng = np.random.default_rng(0)
    full = rng.standard_normal(9)

    def body(comm, layout):
        phys = field.distribute(layout, comm, full)
        renum = field.distribute_renumbered(layout, comm, full)
        return field.gather(phys), field.gather_renumbered(renum)

    for phys_back, renum_back in on_team([2, 4, 3], body):
        np.testing.assert_array_equal(phys_back, full)
        np.testing.assert_array_equal(renum_back, full)


def test_distribute_rejects_wrong_size():
    layout, comm = single_rank(3)
    with pytest.raises(ValueError):
        field.distribute(layout, comm, np.zeros(4))


def test_mismatched_layouts_rejected():
    layout_a, comm = single_rank(2)
    layout_b = PartitionLayout.from_counts([2, 0])
    a = InterfaceVector(layout_a, comm, np.zeros(2))
    b = InterfaceVector(layout_b, comm, np.zeros(2))
    with pytest.raises(ValueError):
        field.dot(a, b)


def test_copy_is_independent():
    layout, comm = single_rank(2)
    a = InterfaceVector(layout, comm, np.array([1.0, 2.0]))
    c = a.copy()
    c.local[0] = 99.0
    assert a.local[0] == 1.0
