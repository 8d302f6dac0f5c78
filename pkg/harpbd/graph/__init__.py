from harpbd.graph.bodygraph import (
    BodyGraph,
    SensorSet,
    Skeleton,
    build_graph,
    graph_for,
    load_skeleton,
    neighbor_set,
    reduce_sensors,
)

__all__ = [
    "BodyGraph",
    "SensorSet",
    "Skeleton",
    "build_graph",
    "graph_for",
    "load_skeleton",
    "neighbor_set",
    "reduce_sensors",
]
