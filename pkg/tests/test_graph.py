import io
import warnings

import numpy as np
import pytest

from templatent.graph import (DeltaGraph, DynamicGraph, EdgeListError, GraphSnapshot, TemporalEdgeList,
                              aggregate, apply_delta, diff_snapshots, load_temporal_edges,
                              read_node_map, read_snapshot, slice_snapshots, write_node_map,
                              write_snapshot, write_temporal_edges)

from conftest import random_snapshot


def snap(n, edges, w=None):
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return GraphSnapshot.from_edges(n, e[:, 0], e[:, 1], w)


class TestLoad:
    def test_basic_parse(self):
        el = load_temporal_edges(io.StringIO("0 1 0.5\n1 2 1.5\n"))
        assert len(el) == 2
        assert el.node_count == 3
        np.testing.assert_array_equal(el.w, [1.0, 1.0])

    def test_self_loop_dropped_and_counted(self):
        with pytest.warns(UserWarning, match="self-loop"):
            el = load_temporal_edges(io.StringIO("0 0 1.0\n"))
        assert len(el) == 0
        assert el.rejected_self_loops == 1

    def test_malformed_line_reports_line_number(self):
        with pytest.raises(EdgeListError) as info:
            load_temporal_edges(io.StringIO("a b\n"))
        assert info.value.lineno == 1
        with pytest.raises(EdgeListError) as info:
            load_temporal_edges(io.StringIO("# c\n0 1 0.5\n0 1 x\n"))
        assert info.value.lineno == 3

    def test_comments_weights_and_duplicates(self):
        el = load_temporal_edges(io.BytesIO(b"# header\n7 9 0.1 2.5\n7 9 0.1 2.5\n\n9 3 1\n"))
        assert len(el) == 3  # duplicates kept as interaction volume
        assert el.node_ids == ("7", "9", "3")
        np.testing.assert_array_equal(el.u, [0, 0, 1])
        np.testing.assert_array_equal(el.v, [1, 1, 2])
        np.testing.assert_array_equal(el.w, [2.5, 2.5, 1.0])

    @pytest.mark.parametrize("line", ["0 1 nan", "0 1 1.0 -2", "0 1 1.0 0", "0 1 2 3 4", "0 1 inf"])
    def test_rejects_bad_values(self, line):
        with pytest.raises(EdgeListError):
            load_temporal_edges(io.StringIO(line + "\n"))

    def test_node_map_round_trip(self):
        el = load_temporal_edges(io.StringIO("alice bob 1\nbob carol 2\n"))
        buf = io.StringIO()
        write_node_map(buf, el.node_ids)
        assert buf.getvalue() == "alice 0\nbob 1\ncarol 2\n"
        buf.seek(0)
        assert tuple(read_node_map(buf)) == el.node_ids

    def test_edge_list_round_trip(self):
        el = TemporalEdgeList.from_arrays([0, 2, 1], [1, 0, 3], [0.25, 1.0 / 3, 2.0], [1.0, 0.1, 7.0])
        buf = io.StringIO()
        write_temporal_edges(buf, el)
        back = load_temporal_edges(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(back.t, el.t)
        np.testing.assert_array_equal(back.w, el.w)

    def test_type_invariants(self):
        with pytest.raises(ValueError):
            TemporalEdgeList.from_arrays([0], [0], [1.0])
        with pytest.raises(ValueError):
            TemporalEdgeList.from_arrays([0], [5], [1.0], node_count=3)


class TestSnapshot:
    def test_symmetry_and_duplicates_sum(self):
        s = snap(3, [(0, 1), (1, 0), (1, 2)])
        assert s.m == 2
        assert s.weight(0, 1) == 2.0 and s.weight(1, 0) == 2.0
        assert s.weight(0, 2) == 0.0
        np.testing.assert_array_equal(s.degrees(), [1, 2, 1])

    def test_binarize(self):
        s = GraphSnapshot.from_edges(3, [0, 0], [1, 1], [2.0, 3.0], binarize=True)
        assert s.weight(0, 1) == 1.0

    def test_rejects_invalid_adjacency(self):
        import scipy.sparse as sp
        with pytest.raises(ValueError):
            GraphSnapshot(sp.csr_matrix(np.array([[0, 1.0], [0, 0]])))
        with pytest.raises(ValueError):
            GraphSnapshot(sp.csr_matrix(np.array([[1.0, 0], [0, 0]])))
        with pytest.raises(ValueError):
            GraphSnapshot(sp.csr_matrix(np.array([[0, -1.0], [-1.0, 0]])))
        with pytest.raises(ValueError):
            GraphSnapshot.from_edges(3, [1], [1])

    def test_neighbors_sorted(self, rng):
        s = random_snapshot(rng, 30, 0.3)
        for u in range(30):
            nb, _ = s.neighbors(u)
            assert np.all(np.diff(nb) > 0)

    def test_write_read_round_trip(self, rng):
        s = random_snapshot(rng, 25, 0.2, weighted=True)
        buf = io.StringIO()
        write_snapshot(buf, s, 4)
        assert buf.getvalue().startswith(f"# snapshot 4 25 {s.m}\n")
        back, tau = read_snapshot(io.StringIO(buf.getvalue()))
        assert tau == 4
        assert back == s

    def test_read_rejects_bad_header_and_count(self):
        with pytest.raises(EdgeListError):
            read_snapshot(io.StringIO("0 1 1.0\n"))
        with pytest.raises(EdgeListError):
            read_snapshot(io.StringIO("# snapshot 1 3 2\n0 1 1.0\n"))


class TestSlice:
    def test_interval_membership(self):
        el = load_temporal_edges(io.StringIO("0 1 0.5\n1 2 1.5\n"))
        G = slice_snapshots(el, T=2, start=0, end=2)
        assert G.T == 2
        assert [tuple(map(tuple, np.c_[s.edges()[:2]])) for s in G] == [((0, 1),), ((1, 2),)]
        assert all(s.n == 3 for s in G)

    def test_duplicate_records_aggregate(self):
        el = load_temporal_edges(io.StringIO("0 1 0.2 1\n0 1 0.7 1\n"))
        G = slice_snapshots(el, T=1, start=0, end=1)
        assert G[0].weight(0, 1) == 2.0
        Gb = slice_snapshots(el, T=1, start=0, end=1, binarize=True)
        assert Gb[0].weight(0, 1) == 1.0

    def test_right_closed_boundaries(self):
        el = TemporalEdgeList.from_arrays([0, 1, 2], [1, 2, 3], [0.0, 1.0, 1.5])
        G = slice_snapshots(el, boundaries=[0, 1, 2])
        assert G[0].m == 2  # t=0 (left-closed first interval) and t=1 (right-closed)
        assert G[1].m == 1

    def test_empty_snapshots_warn(self):
        el = TemporalEdgeList.from_arrays([0], [1], [0.5])
        with pytest.warns(UserWarning, match="empty"):
            G = slice_snapshots(el, T=4, start=0, end=4)
        assert [s.m for s in G] == [1, 0, 0, 0]

    def test_out_of_range_dropped(self):
        el = TemporalEdgeList.from_arrays([0, 1], [1, 2], [0.5, 9.0])
        with pytest.warns(UserWarning, match="outside"):
            G = slice_snapshots(el, boundaries=[0, 1])
        assert G[0].m == 1

    def test_volume_preserved(self, rng):
        n = 20
        u = rng.integers(0, n, 500)
        v = (u + rng.integers(1, n, 500)) % n
        t = rng.uniform(0, 10, 500)
        w = rng.uniform(0.1, 3, 500)
        el = TemporalEdgeList.from_arrays(u, v, t, w, node_count=n)
        G = slice_snapshots(el, T=7)
        total = sum(s.edges()[2].sum() for s in G)
        assert total == pytest.approx(w.sum(), rel=1e-12)

    def test_argument_checks(self):
        el = TemporalEdgeList.from_arrays([0], [1], [0.5])
        with pytest.raises(ValueError):
            slice_snapshots(el)
        with pytest.raises(ValueError):
            slice_snapshots(el, T=0)
        with pytest.raises(ValueError):
            slice_snapshots(el, boundaries=[1, 1])


class TestDelta:
    def test_identical_is_empty(self, rng):
        s = random_snapshot(rng, 15)
        d = diff_snapshots(s, s)
        assert d.is_empty and len(d.changed_nodes) == 0

    def test_single_insertion(self):
        d = diff_snapshots(snap(4, [(1, 2)]), snap(4, [(1, 2), (2, 3)]))
        assert d.added_edges.tolist() == [[2, 3]]
        assert len(d.removed_edges) == 0
        assert d.changed_nodes.tolist() == [2, 3]

    def test_single_deletion(self):
        d = diff_snapshots(snap(4, [(1, 2)]), GraphSnapshot.empty(4))
        assert d.removed_edges.tolist() == [[1, 2]]
        assert d.changed_nodes.tolist() == [1, 2]

    def test_weight_change(self):
        d = diff_snapshots(snap(3, [(0, 1)], [1.0]), snap(3, [(0, 1)], [2.0]))
        assert d.weight_changed_edges.tolist() == [[0, 1]]
        assert d.changed_nodes.tolist() == [0, 1]

    def test_node_removal_as_empty_row(self):
        d = diff_snapshots(snap(4, [(0, 1), (0, 2), (2, 3)]), snap(4, [(2, 3)]))
        assert d.changed_nodes.tolist() == [0, 1, 2]

    def test_mismatched_n(self):
        with pytest.raises(ValueError):
            diff_snapshots(GraphSnapshot.empty(3), GraphSnapshot.empty(4))

    def test_apply_reproduces_next(self, rng):
        for _ in range(20):
            a = random_snapshot(rng, 12, 0.3, weighted=True)
            b = random_snapshot(rng, 12, 0.3, weighted=True)
            assert apply_delta(a, diff_snapshots(a, b)) == b


def test_dynamic_graph_invariants():
    with pytest.raises(ValueError):
        DynamicGraph(())
    with pytest.raises(ValueError):
        DynamicGraph((GraphSnapshot.empty(3), GraphSnapshot.empty(4)))
    G = DynamicGraph((GraphSnapshot.empty(3), snap(3, [(0, 1)])))
    assert G.T == 2 and G.n == 3 and G[1:].T == 1


def test_aggregate_is_binary_union():
    agg = aggregate([snap(4, [(0, 1)], [3.0]), snap(4, [(0, 1), (2, 3)])])
    assert agg.m == 2 and agg.weight(0, 1) == 1.0
