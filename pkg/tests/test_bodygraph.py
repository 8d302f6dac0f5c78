import numpy as np
import pytest

from harpbd.errors import ConfigurationError, ContractViolation
from harpbd.graph import (
    SensorSet,
    build_graph,
    graph_for,
    load_skeleton,
    neighbor_set,
    reduce_sensors,
)
from harpbd.graph.bodygraph import parse_skeleton
from harpbd.nn import GCLayerParams, gc_forward
from harpbd.numerics import Tensor


@pytest.fixture(scope="module")
def skeleton():
    return load_skeleton()


@pytest.fixture(scope="module")
def full(skeleton):
    return skeleton.full_graph()


def test_full_skeleton_is_a_connected_tree(full):
    assert full.node_count == 22
    assert len(full.edges) == 21
    assert full.is_connected()


def test_propagation_is_symmetric_and_normalized(full):
    np.testing.assert_allclose(full.propagation, full.propagation.T)
    a_hat = full.adjacency + np.eye(22)
    degree = a_hat.sum(axis=1)
    np.testing.assert_allclose(full.propagation, a_hat / np.sqrt(np.outer(degree, degree)))


def test_graph_arrays_are_read_only(full):
    with pytest.raises(ValueError):
        full.adjacency[0, 0] = 1.0


def test_build_graph_rejects_dangling_edge():
    with pytest.raises(ContractViolation):
        build_graph([1, 2], [(1, 3)])


def test_build_graph_rejects_self_loop():
    with pytest.raises(ContractViolation):
        build_graph([1, 2], [(1, 1)])


def test_unknown_node_lookup(full):
    with pytest.raises(ContractViolation):
        full.index_of(23)


def test_neighbor_set_of_neck(full):
    assert neighbor_set(full, 22) == {22, 21, 9, 2, 5}


def test_path_graph_propagation():
    path = build_graph([1, 2, 3], [(1, 2), (2, 3)])
    np.testing.assert_allclose(np.diag(path.propagation), [1 / 2, 1 / 3, 1 / 2])
    assert path.propagation[0, 1] == pytest.approx(1 / np.sqrt(6))
    assert path.propagation[0, 2] == 0.0


def test_neighbor_set_grows_with_distance():
    path = build_graph([1, 2, 3], [(1, 2), (2, 3)])
    assert neighbor_set(path, 1) == {1, 2}
    assert neighbor_set(path, 1, max_distance=2) == {1, 2, 3}
    assert neighbor_set(path, 2, max_distance=2) == {1, 2, 3}


def test_two_node_graph_convolution_averages_features():
    pair = build_graph([1, 2], [(1, 2)])
    layer = GCLayerParams(mode="single", weight=Tensor.parameter(np.eye(3), "gc.W"))
    out = gc_forward(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), pair, layer).value
    np.testing.assert_allclose(out, [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]])


@pytest.mark.parametrize(
    "preset,nodes", [("full22", 22), ("one_side14", 14), ("one_side7", 7), ("symmetric7", 7)]
)
def test_presets_keep_expected_node_counts(skeleton, preset, nodes):
    graph = graph_for(SensorSet.preset(preset, skeleton), skeleton)
    assert graph.node_count == nodes
    assert graph.is_connected()


def test_full22_reduction_is_identity(skeleton, full):
    reduced = reduce_sensors(full, SensorSet.preset("full22", skeleton))
    assert reduced.node_ids == full.node_ids
    np.testing.assert_array_equal(reduced.propagation, full.propagation)


def test_one_side7_relinks_through_removed_joints(skeleton, full):
    reduced = reduce_sensors(full, SensorSet.preset("one_side7", skeleton))
    assert reduced.node_ids == (1, 5, 7, 9, 16, 19, 22)
    assert reduced.edges == {(1, 16), (1, 22), (5, 7), (5, 22), (9, 22), (16, 19)}


def test_symmetric7_edges(skeleton, full):
    reduced = reduce_sensors(full, SensorSet.preset("symmetric7", skeleton))
    assert reduced.node_ids == (1, 2, 5, 9, 14, 19, 22)
    assert reduced.edges == {(1, 14), (1, 19), (1, 22), (2, 22), (5, 22), (9, 22)}


def test_unknown_preset_is_a_configuration_error(skeleton):
    with pytest.raises(ConfigurationError):
        SensorSet.preset("both_hands", skeleton)


def test_removing_every_node_is_rejected(full):
    with pytest.raises(ContractViolation):
        reduce_sensors(full, SensorSet.custom(range(1, 23)))


def test_reduction_needs_full_graph(skeleton):
    small = graph_for(SensorSet.preset("one_side14", skeleton), skeleton)
    with pytest.raises(ContractViolation):
        reduce_sensors(small, SensorSet.custom([1]))


def test_skeleton_parse_error_names_line():
    with pytest.raises(ConfigurationError, match=":3:"):
        parse_skeleton("1 hips\n2 spine\nedge 1\n")


def test_select_picks_node_columns(skeleton):
    graph = graph_for(SensorSet.preset("symmetric7", skeleton), skeleton)
    features = np.arange(22 * 3, dtype=float).reshape(1, 22, 3)
    picked = graph.select(features)
    assert picked.shape == (1, 7, 3)
    np.testing.assert_array_equal(picked[0, 4], features[0, 13])


def _random_graph(rng, n):
    ids = list(range(1, n + 1))
    edges = [(i, int(rng.integers(1, i))) for i in range(2, n + 1)]
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        a, b = rng.choice(ids, size=2, replace=False)
        edges.append((int(a), int(b)))
    return build_graph(ids, edges)


def _loop_single(x, graph, w):
    out = np.zeros((x.shape[0], graph.node_count, w.shape[1]))
    degree = graph.adjacency.sum(axis=1) + 1.0
    for t in range(x.shape[0]):
        for i in range(graph.node_count):
            for j in range(graph.node_count):
                if i == j or graph.adjacency[i, j]:
                    out[t, i] += x[t, j] @ w / np.sqrt(degree[i] * degree[j])
    return out


def _loop_partitioned(x, graph, w_self, w_neighbor):
    out = np.zeros((x.shape[0], graph.node_count, w_self.shape[1]))
    for t in range(x.shape[0]):
        for i in range(graph.node_count):
            out[t, i] = x[t, i] @ w_self
            neighbors = np.flatnonzero(graph.adjacency[i])
            for j in neighbors:
                out[t, i] += x[t, j] @ w_neighbor / len(neighbors)
    return out


@pytest.mark.parametrize("seed", range(100))
def test_graph_convolution_matches_per_node_loop(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 23))
    graph = _random_graph(rng, n)
    x = rng.normal(size=(3, n, 4))
    single = GCLayerParams.init(rng, 4, 5, "single", "gc")
    partitioned = GCLayerParams.init(rng, 4, 5, "partitioned", "pgc")

    np.testing.assert_allclose(
        gc_forward(x, graph, single).value, _loop_single(x, graph, single.weight.value), atol=1e-10
    )
    np.testing.assert_allclose(
        gc_forward(x, graph, partitioned).value,
        _loop_partitioned(x, graph, partitioned.weight_self.value, partitioned.weight_neighbor.value),
        atol=1e-10,
    )


def test_graph_convolution_is_permutation_equivariant(full):
    rng = np.random.default_rng(11)
    order = rng.permutation(22)
    permuted = build_graph(
        [full.node_ids[i] for i in order],
        full.edges,
    )
    x = rng.normal(size=(2, 22, 3))
    layer = GCLayerParams.init(rng, 3, 4, "single", "gc")
    out = gc_forward(x, full, layer).value
    out_permuted = gc_forward(Tensor(x[:, order, :]), permuted, layer).value
    np.testing.assert_allclose(out_permuted, out[:, order, :], atol=1e-12)
