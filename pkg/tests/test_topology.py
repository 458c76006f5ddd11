import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedistil.topology import from_edges, is_connected, neighbors, ring_lattice


def test_ring_10_6():
    g = ring_lattice(10, 6)
    assert all(g.degree(i) == 6 for i in range(10))
    assert neighbors(g, 0) == [1, 2, 3, 7, 8, 9]
    assert g.num_edges == 30


def test_triangle():
    g = ring_lattice(3, 2)
    assert g.sorted_edges() == [(0, 1), (0, 2), (1, 2)]


@pytest.mark.parametrize("n,k", [(10, 5), (10, 10), (4, 0), (1, 2)])
def test_ring_rejects(n, k):
    with pytest.raises(ValueError):
        ring_lattice(n, k)


@given(st.integers(3, 60), st.data())
def test_ring_regular_and_symmetric(n, draw):
    k = 2 * draw.draw(st.integers(1, (n - 1) // 2))
    g = ring_lattice(n, k)
    for i in range(n):
        nb = neighbors(g, i)
        assert len(nb) == k and i not in nb and nb == sorted(nb)
        assert all(i in neighbors(g, j) for j in nb)


def test_custom_graphs():
    g = from_edges(2, [(0, 1)])
    assert neighbors(g, 1) == [0]
    lonely = from_edges(3, [(0, 1)])
    assert neighbors(lonely, 2) == []
    with pytest.raises(IndexError):
        neighbors(g, 2)


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)]])
def test_custom_graph_rejects(edges):
    with pytest.raises(ValueError):
        from_edges(3, edges)


def test_connectivity():
    assert is_connected(ring_lattice(10, 6))
    assert not is_connected(from_edges(4, [(0, 1), (2, 3)]))
    assert is_connected(from_edges(1, []))
