"""Bundled benchmark graphs.

The 34-node club network ships verbatim.  The 198-node collaboration-scale
graph is a seeded random stand-in with the same node and edge counts (the
original distribution terms do not allow redistribution here); everything
downstream only depends on size and density.
"""

from __future__ import annotations

import networkx as nx

from .graphs import Graph, from_edges, save_edge_list

BUILTIN = ("karate", "jazz")


def builtin_graph(name: str) -> Graph:
    if name == "karate":
        gx = nx.karate_club_graph()
        return from_edges(list(gx.edges()), num_nodes=34)
    if name == "jazz":
        gx = nx.gnm_random_graph(198, 2742, seed=7)
        return from_edges(list(gx.edges()), num_nodes=198)
    raise ValueError(f"unknown builtin graph {name!r}; known: {BUILTIN}")


def materialize(name: str, path) -> Graph:
    """Write a builtin graph as an edge-list file and return it."""
    g = builtin_graph(name)
    save_edge_list(g, path)
    return g
