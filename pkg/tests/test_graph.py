"""Similarity graph, Louvain wrapper, bridgeness, pruning, canonical naming."""

import math
import random

import networkx as nx
import numpy as np
import pytest

from harmonizer.embed import NameEmbedding
from harmonizer.errors import ConfigError
from harmonizer.graph import (
    FilterParams,
    Partition,
    assign_canonical_names,
    bridgeness_centrality,
    build_graph,
    louvain,
    name_community_centroid,
    name_community_volume,
    prune_global_bridges,
    refine_communities,
)
from harmonizer.ingest import AssigneeRecord
from harmonizer.match import ConditionVector, ScoredPair
from harmonizer.parse import NameClass

from oracles import brute_bridgeness


def pair(a, b, score):
    cv = ConditionVector(NameClass.TYPE1, 1, 0, 0, 0, 0.0)
    return ScoredPair(id_a=min(a, b), id_b=max(a, b), conditions=cv, score=score)


def records_for(ids, locations=None):
    locations = locations or {}
    return {
        rid: AssigneeRecord(rid, f"NAME {rid.upper()}", 1, frozenset(locations.get(rid, ())))
        for rid in ids
    }


class TestFilterParams:
    def test_defaults(self):
        p = FilterParams()
        assert (p.threshold, p.resolution, p.bridgeness_threshold, p.location_boost) == (3.9, 1.0, 1.0, 1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"resolution": 0.0},
            {"location_boost": -0.5},
            {"naming": "alphabetical"},
            {"prune_rule": "nuke"},
            {"refine_passes": -1},
            {"max_refine_passes": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            FilterParams(**kwargs)


class TestBuildGraph:
    def test_threshold_is_inclusive(self):
        records = records_for(["a", "b", "c"])
        graph = build_graph([pair("a", "b", 3.9), pair("b", "c", 3.8999999)], records, FilterParams())
        assert graph.has_edge("a", "b")
        assert not graph.has_edge("b", "c")

    def test_every_record_is_a_node(self):
        records = records_for(["a", "b", "loner"])
        graph = build_graph([pair("a", "b", 4.5)], records, FilterParams())
        assert set(graph.nodes) == {"a", "b", "loner"}

    def test_boost_applies_after_threshold(self):
        # Shared location must NOT rescue a sub-threshold pair...
        records = records_for(["a", "b"], {"a": {"york||uk"}, "b": {"york||uk"}})
        graph = build_graph([pair("a", "b", 3.5)], records, FilterParams(location_boost=1.0))
        assert not graph.has_edge("a", "b")

    def test_boost_added_to_weight(self):
        # ...but it strengthens an edge that already cleared it.
        records = records_for(["a", "b"], {"a": {"york||uk"}, "b": {"york||uk"}})
        graph = build_graph([pair("a", "b", 4.0)], records, FilterParams(location_boost=1.0))
        assert graph["a"]["b"]["weight"] == 5.0

    def test_no_shared_location_no_boost(self):
        records = records_for(["a", "b"], {"a": {"york||uk"}, "b": {"leeds||uk"}})
        graph = build_graph([pair("a", "b", 4.0)], records, FilterParams())
        assert graph["a"]["b"]["weight"] == 4.0

    def test_all_empty_location_key_never_matches(self):
        records = records_for(["a", "b"], {"a": {"||"}, "b": {"||"}})
        graph = build_graph([pair("a", "b", 4.0)], records, FilterParams(location_boost=1.0))
        assert graph["a"]["b"]["weight"] == 4.0


class TestLouvain:
    def test_empty_graph(self):
        assert louvain(nx.Graph()).assignments == {}

    def test_isolated_nodes_are_singletons(self):
        g = nx.Graph()
        g.add_nodes_from(["a", "b", "c"])
        part = louvain(g)
        assert len(set(part.assignments.values())) == 3

    def test_two_cliques(self):
        g = nx.Graph()
        left = [f"l{i}" for i in range(4)]
        right = [f"r{i}" for i in range(4)]
        for group in (left, right):
            g.add_edges_from((a, b) for i, a in enumerate(group) for b in group[i + 1:])
        part = louvain(g)
        assert len({part.assignments[n] for n in left}) == 1
        assert len({part.assignments[n] for n in right}) == 1
        assert part.assignments["l0"] != part.assignments["r0"]

    def test_dense_ids_ordered_by_smallest_member(self):
        g = nx.Graph()
        g.add_edge("z1", "z2")
        g.add_edge("a1", "a2")
        part = louvain(g)
        assert part.assignments["a1"] == 0
        assert part.assignments["z1"] == 1

    def test_deterministic_across_calls(self):
        rng = random.Random(5)
        g = nx.gnp_random_graph(40, 0.15, seed=9)
        g = nx.relabel_nodes(g, {i: f"n{i:02d}" for i in g.nodes})
        for u, v in g.edges:
            g[u][v]["weight"] = rng.uniform(0.5, 2.0)
        parts = [louvain(g, resolution=1.0, seed=3).assignments for _ in range(3)]
        assert parts[0] == parts[1] == parts[2]

    def test_resolution_monotone_in_community_count(self):
        g = nx.gnp_random_graph(40, 0.2, seed=2)
        g = nx.relabel_nodes(g, {i: f"n{i:02d}" for i in g.nodes})
        low = louvain(g, resolution=0.05, seed=0).n_communities
        high = louvain(g, resolution=2.5, seed=0).n_communities
        assert low <= high


class TestBridgeness:
    def test_five_path_center(self):
        # Path 0-1-2-3-4: only the middle node has both endpoints of any
        # admissible pair outside its closed neighborhood.
        g = nx.path_graph(5)
        b = bridgeness_centrality(g)
        assert b == {0: 0.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 0.0}

    def test_two_cliques_bridge_node(self):
        # Two 3-cliques joined through one cut vertex: every cross pair (3x3)
        # routes through it, all outside its neighborhood... the cut vertex is
        # adjacent to everyone, so pairs must sit at distance >= 2 from it.
        g = nx.Graph()
        g.add_edges_from([(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (3, 5), (2, 6), (6, 3)])
        b = bridgeness_centrality(g)
        oracle = brute_bridgeness(g)
        for node in g.nodes:
            assert math.isclose(b[node], oracle[node], abs_tol=1e-9)

    def test_star_center_zero(self):
        # The hub is adjacent to every leaf, so no pair escapes its
        # neighborhood: bridgeness 0 despite maximal betweenness.
        b = bridgeness_centrality(nx.star_graph(5))
        assert b[0] == 0.0

    def test_cycle_six(self):
        g = nx.cycle_graph(6)
        b = bridgeness_centrality(g)
        oracle = brute_bridgeness(g)
        for node in g.nodes:
            assert math.isclose(b[node], oracle[node], abs_tol=1e-9)

    def test_disconnected_components(self):
        g = nx.Graph()
        g.add_edges_from([(0, 1), (1, 2), (2, 3)])  # path
        g.add_edges_from([(10, 11), (11, 12), (12, 13)])  # separate path
        b = bridgeness_centrality(g)
        oracle = brute_bridgeness(g)
        for node in g.nodes:
            assert math.isclose(b[node], oracle[node], abs_tol=1e-9)

    def test_tiny_graphs(self):
        assert bridgeness_centrality(nx.Graph()) == {}
        g = nx.Graph()
        g.add_edge(0, 1)
        assert bridgeness_centrality(g) == {0: 0.0, 1: 0.0}

    def test_matches_oracle_on_random_graphs(self):
        for seed in range(12):
            g = nx.gnp_random_graph(10, 0.3, seed=seed)
            b = bridgeness_centrality(g)
            oracle = brute_bridgeness(g)
            for node in g.nodes:
                assert math.isclose(b[node], oracle[node], abs_tol=1e-9), (seed, node)

    def test_ignores_weights(self):
        g = nx.path_graph(5)
        for u, v in g.edges:
            g[u][v]["weight"] = 100.0
        assert bridgeness_centrality(g)[2] == 1.0


class TestPruning:
    def test_five_path_beta_half(self):
        # Only the center exceeds 0.5; dropping its edges leaves the two ends.
        pruned = prune_global_bridges(nx.path_graph(5), beta=0.5)
        assert sorted(pruned.edges) == [(0, 1), (3, 4)]
        assert set(pruned.nodes) == set(range(5))

    def test_beta_one_keeps_five_path(self):
        # B(center) == 1.0 is not > 1.0: nothing flagged.
        pruned = prune_global_bridges(nx.path_graph(5), beta=1.0)
        assert sorted(pruned.edges) == sorted(nx.path_graph(5).edges)

    def test_input_not_mutated(self):
        g = nx.path_graph(5)
        prune_global_bridges(g, beta=0.5)
        assert g.number_of_edges() == 4

    def test_edge_bridgeness_rule_is_gentler(self):
        # Two triangles joined by a path through a middle node.
        g = nx.Graph()
        g.add_edges_from([(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (4, 6)])
        incident = prune_global_bridges(g, beta=0.5, rule="incident")
        edgewise = prune_global_bridges(g, beta=0.5, rule="edge_bridgeness")
        assert incident.number_of_edges() <= edgewise.number_of_edges()

    def test_unknown_rule(self):
        with pytest.raises(ConfigError):
            prune_global_bridges(nx.path_graph(3), beta=1.0, rule="zap")


class TestRefine:
    def _joint_venture_motif(self):
        """Two 5-cliques plus a connector matching two members of each; the
        connector is the only node with bridgeness above 1."""
        g = nx.Graph()
        left = [f"a{i}" for i in range(5)]
        right = [f"b{i}" for i in range(5)]
        for group in (left, right):
            g.add_edges_from((u, v, {"weight": 4.5}) for i, u in enumerate(group) for v in group[i + 1:])
        for end in ("a0", "a1", "b0", "b1"):
            g.add_edge("jv", end, weight=4.0)
        return g, left, right

    def _two_cliques_with_bridge(self):
        g = nx.Graph()
        left = [f"a{i}" for i in range(5)]
        right = [f"b{i}" for i in range(5)]
        for group in (left, right):
            g.add_edges_from((u, v, {"weight": 4.5}) for i, u in enumerate(group) for v in group[i + 1:])
        g.add_edge("a0", "b0", weight=4.0)
        return g, left, right

    def test_splits_joint_venture_community(self):
        g, left, right = self._joint_venture_motif()
        # At this resolution the first pass merges all 11 nodes; pruning the
        # connector's edges is what separates the cliques.
        assert louvain(g, resolution=0.1, seed=0).n_communities == 1
        part = refine_communities(g, FilterParams(resolution=0.1, bridgeness_threshold=1.0))
        left_ids = {part.assignments[n] for n in left}
        right_ids = {part.assignments[n] for n in right}
        assert len(left_ids) == 1 and len(right_ids) == 1
        assert left_ids != right_ids
        assert part.assignments["jv"] not in left_ids | right_ids

    def test_no_pruning_keeps_partition(self):
        # Every node here has bridgeness 0, so the merged community must
        # survive refinement even though Louvain would split it in isolation.
        g, _, _ = self._two_cliques_with_bridge()
        plain = louvain(g, resolution=0.05, seed=0)
        assert plain.n_communities == 1
        part = refine_communities(g, FilterParams(resolution=0.05, bridgeness_threshold=1.0))
        assert part.assignments == plain.assignments

    def test_small_communities_kept_intact(self):
        g = nx.Graph()
        g.add_edge("a", "b", weight=4.0)
        part = refine_communities(g, FilterParams())
        assert part.assignments["a"] == part.assignments["b"]

    def test_zero_passes_is_plain_louvain(self):
        g, _, _ = self._joint_venture_motif()
        plain = louvain(g, resolution=1.0, seed=0)
        part = refine_communities(g, FilterParams(refine_passes=0))
        assert part.n_communities == plain.n_communities

    def test_until_stable_terminates(self):
        g, _, _ = self._joint_venture_motif()
        part = refine_communities(
            g, FilterParams(resolution=0.1, refine_until_stable=True, max_refine_passes=10)
        )
        assert part.n_communities == 3

    def test_deterministic(self):
        g, _, _ = self._joint_venture_motif()
        p1 = refine_communities(g, FilterParams(resolution=0.1))
        p2 = refine_communities(g, FilterParams(resolution=0.1))
        assert p1.assignments == p2.assignments

    def test_dense_ids(self):
        g, _, _ = self._joint_venture_motif()
        part = refine_communities(g, FilterParams(resolution=0.1))
        ids = sorted(set(part.assignments.values()))
        assert ids == list(range(len(ids)))
        # Numbered by smallest member: the community of "a0" comes first.
        assert part.assignments["a0"] == 0


def embeddings_for(vectors):
    return {
        rid: NameEmbedding(record_id=rid, vector=np.array(vec, dtype=float), degenerate=not any(vec))
        for rid, vec in vectors.items()
    }


class TestNaming:
    def test_centroid_picks_most_central(self):
        embs = embeddings_for({
            "a": [1.0, 0.0],
            "b": [0.9, 0.1],
            "c": [0.0, 1.0],
        })
        cleaned = {"a": "acme", "b": "acme corp", "c": "zeta"}
        raw = {"a": "ACME", "b": "ACME CORP", "c": "ZETA"}
        # b is closest to both a and c on average.
        assert name_community_centroid(["a", "b", "c"], embs, cleaned, raw) == "ACME CORP"

    def test_centroid_tie_breaks_on_cleaned(self):
        embs = embeddings_for({"a": [1.0, 0.0], "b": [1.0, 0.0]})
        cleaned = {"a": "zeta", "b": "acme"}
        raw = {"a": "ZETA", "b": "ACME"}
        assert name_community_centroid(["a", "b"], embs, cleaned, raw) == "ACME"

    def test_centroid_singleton(self):
        embs = embeddings_for({"a": [1.0, 0.0]})
        assert name_community_centroid(["a"], embs, {"a": "acme"}, {"a": "ACME"}) == "ACME"

    def test_centroid_ignores_degenerate_voters(self):
        embs = embeddings_for({"a": [1.0, 0.0], "b": [0.0, 0.0], "c": [1.0, 0.0]})
        cleaned = {"a": "acme", "b": "bbb", "c": "ccme"}
        raw = {"a": "ACME", "b": "BBB", "c": "CCME"}
        assert name_community_centroid(["a", "b", "c"], embs, cleaned, raw) == "ACME"

    def test_centroid_all_degenerate_raises(self):
        embs = embeddings_for({"a": [0.0, 0.0]})
        with pytest.raises(ValueError):
            name_community_centroid(["a"], embs, {"a": "acme"}, {"a": "ACME"})

    def test_volume_picks_biggest_portfolio(self):
        records = {
            "a": AssigneeRecord("a", "ACME", 10),
            "b": AssigneeRecord("b", "ACME INC", 50),
        }
        assert name_community_volume(["a", "b"], records, {"a": "acme", "b": "acme inc"}) == "ACME INC"

    def test_volume_tie_breaks_on_cleaned(self):
        records = {
            "a": AssigneeRecord("a", "ZETA", 5),
            "b": AssigneeRecord("b", "ACME", 5),
        }
        assert name_community_volume(["a", "b"], records, {"a": "zeta", "b": "acme"}) == "ACME"

    def test_assign_centroid_with_volume_fallback(self):
        part = Partition(assignments={"a": 0, "b": 0, "c": 1})
        records = {
            "a": AssigneeRecord("a", "ACME", 1),
            "b": AssigneeRecord("b", "ACME INC", 9),
            "c": AssigneeRecord("c", "LONER", 2),
        }
        cleaned = {"a": "acme", "b": "acme inc", "c": "loner"}
        # Community 0 has no usable embeddings -> volume fallback inside centroid mode.
        embs = embeddings_for({"a": [0.0, 0.0], "b": [0.0, 0.0], "c": [1.0, 0.0]})
        named = assign_canonical_names(part, records, cleaned, embs, strategy="centroid")
        assert named.canonical[0] == "ACME INC"
        assert named.canonical[1] == "LONER"

    def test_assign_volume_strategy(self):
        part = Partition(assignments={"a": 0, "b": 0})
        records = {
            "a": AssigneeRecord("a", "ACME", 1),
            "b": AssigneeRecord("b", "ACME INC", 9),
        }
        named = assign_canonical_names(part, records, {"a": "acme", "b": "acme inc"}, None, strategy="volume")
        assert named.canonical[0] == "ACME INC"

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError):
            assign_canonical_names(Partition(assignments={}), {}, {}, None, strategy="longest")


class TestPartition:
    def test_communities_sorted(self):
        part = Partition(assignments={"b": 1, "a": 0, "c": 1})
        assert part.communities() == {0: ["a"], 1: ["b", "c"]}
        assert part.n_communities == 2
