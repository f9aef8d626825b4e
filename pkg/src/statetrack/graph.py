"""Dialogue state graph: construction, relational message passing, fusion.

The graph is rebuilt per turn from the previous dialogue state: one node per
domain with at least one filled pair, one placeholder node per filled
(domain, slot) pair, a slot-labeled directed edge from each domain to its
placeholders, and bidirectional co-occurrence edges forming the complete
graph on present domains. Placeholder nodes carry no learned embedding —
they are dynamically filled by the attention output at the pair's [SLOT]
position.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from statetrack.corpus import SENTINELS, Dialogue, DialogueState, Schema
from statetrack.numerics.tensor import Tensor, concat, layer_norm, set_rows, softmax
from statetrack.state import StateOperation, derive_operations


@dataclass(frozen=True)
class Placeholder:
    domain: str
    slot: str
    position: int  # [SLOT] index in the encoder sequence


@dataclass(frozen=True)
class StateGraph:
    domain_nodes: tuple[str, ...]
    value_placeholders: tuple[Placeholder, ...]
    slot_edges: tuple[tuple[str, int, str], ...]       # (domain, placeholder idx, slot label)
    cooccurrence_edges: tuple[tuple[str, str], ...]    # unordered pairs, schema order

    @property
    def is_empty(self) -> bool:
        return not self.domain_nodes

    @property
    def n_nodes(self) -> int:
        return len(self.domain_nodes) + len(self.value_placeholders)

    @property
    def n_edges(self) -> int:
        """Slot edges plus co-occurrence edges (undirected, counted once)."""
        return len(self.slot_edges) + len(self.cooccurrence_edges)

    @property
    def n_edge_types(self) -> int:
        labels = {label for _, _, label in self.slot_edges}
        return len(labels) + (1 if self.cooccurrence_edges else 0)


def build_state_graph(s_prev: DialogueState,
                      slot_positions: dict[tuple[str, str], int]) -> StateGraph:
    """Construct the graph for one turn; node order follows the state's pairs."""
    domains: list[str] = []
    placeholders: list[Placeholder] = []
    for pair in s_prev.pairs:
        value = s_prev.get(pair)
        if value in SENTINELS:
            continue
        d, s = pair
        if d not in domains:
            domains.append(d)
        placeholders.append(Placeholder(d, s, slot_positions[pair]))
    slot_edges = tuple((ph.domain, i, ph.slot) for i, ph in enumerate(placeholders))
    cooc = tuple((domains[i], domains[j])
                 for i in range(len(domains)) for j in range(i + 1, len(domains)))
    return StateGraph(tuple(domains), tuple(placeholders), slot_edges, cooc)


@dataclass
class GraphEmbeddings:
    """Learned node/edge-type embeddings shared by every GCN layer."""

    domain_index: dict[str, int]
    slot_index: dict[str, int]
    domain_emb: Tensor        # (n_domains, d_h)
    slot_edge_emb: Tensor     # (n_slot_names, d_h)
    self_loop_emb: Tensor     # (1, d_h)
    cooccurrence_emb: Tensor  # (1, d_h)


def rgcn_update(graph: StateGraph, c: Tensor, emb: GraphEmbeddings,
                weights: dict, domain_feats: dict[str, Tensor] | None = None,
                update_placeholders: bool = False,
                ) -> tuple[dict[str, Tensor], Tensor | None]:
    """One relational-GCN layer over the state graph.

    Each present domain pools (feature − edge-type embedding) differences:
    its own feature through w_self against the self-loop embedding, each
    placeholder's attention-output row through w_out against the slot-label
    embedding, and each co-present domain through (w_in + w_out) against the
    co-occurrence embedding, then applies ReLU. Placeholder rows pass into
    the returned node matrix unchanged (``update_placeholders`` is an
    experimental variant that rewrites them from their incident edges).

    Returns (domain -> (1, d_h) representation, node matrix of domain rows
    followed by placeholder rows), or ({}, None) for the empty graph.
    """
    if graph.is_empty:
        return {}, None
    n = c.shape[0]
    for ph in graph.value_placeholders:
        if ph.position >= n:
            raise IndexError(f"placeholder position {ph.position} out of range for n={n}")
    w_self, w_in, w_out = weights["w_self"], weights["w_in"], weights["w_out"]

    if domain_feats is None:
        rows = [emb.domain_emb[emb.domain_index[d]:emb.domain_index[d] + 1]
                for d in graph.domain_nodes]
    else:
        rows = [domain_feats[d] for d in graph.domain_nodes]
    feats = concat(rows, axis=0) if len(rows) > 1 else rows[0]  # (k_d, d_h)
    k_d = len(graph.domain_nodes)

    positions = np.array([ph.position for ph in graph.value_placeholders])
    slot_ids = np.array([emb.slot_index[ph.slot] for ph in graph.value_placeholders])
    c_v = c[positions]                                    # (k_v, d_h)
    slot_msg = (c_v - emb.slot_edge_emb[slot_ids]) @ w_out

    # segment-sum placeholder messages onto their domains
    d_index = {d: i for i, d in enumerate(graph.domain_nodes)}
    pool = np.zeros((k_d, len(graph.value_placeholders)))
    for j, ph in enumerate(graph.value_placeholders):
        pool[d_index[ph.domain], j] = 1.0
    placeholder_term = Tensor(pool) @ slot_msg

    self_term = (feats - emb.self_loop_emb) @ w_self

    # neighbor sum over co-present domains = (total − self) − (k_d−1)·e_co
    total = feats.sum(axis=0, keepdims=True)
    neighbor = (Tensor(np.ones((k_d, 1))) @ total) - feats
    cooc_term = (neighbor - float(k_d - 1) * emb.cooccurrence_emb) @ (w_in + w_out)

    updated = (self_term + placeholder_term + cooc_term).relu()
    domain_reps = {d: updated[i:i + 1] for i, d in enumerate(graph.domain_nodes)}

    if update_placeholders:
        idx_rows = [emb.domain_index[ph.domain] for ph in graph.value_placeholders]
        d_emb_rows = emb.domain_emb[np.array(idx_rows)]
        ph_rows = ((c_v - emb.self_loop_emb) @ w_self
                   + (d_emb_rows - emb.slot_edge_emb[slot_ids]) @ w_in).relu()
    else:
        ph_rows = c_v
    node_matrix = concat([updated, ph_rows], axis=0) if len(positions) else updated
    return domain_reps, node_matrix


def fuse(c: Tensor, graph: StateGraph, domain_reps: dict[str, Tensor],
         fusion_params: dict) -> Tensor:
    """Gate each placeholder's row toward its domain representation.

    beta = sigmoid(c_p w + b) per placeholder position; the row becomes
    LayerNorm(beta*c_p + (1-beta)*g_d). Every other position — and the whole
    tensor when the graph is empty — passes through untouched, which is what
    makes the graph-free configuration an exact special case.
    """
    if graph.is_empty:
        return c
    positions = np.array([ph.position for ph in graph.value_placeholders])
    c_p = c[positions]                                           # (k_v, d_h)
    beta = (c_p @ fusion_params["w"] + fusion_params["b"]).sigmoid()  # (k_v, 1)
    g_rows = concat([domain_reps[ph.domain] for ph in graph.value_placeholders], axis=0) \
        if len(graph.value_placeholders) > 1 else domain_reps[graph.value_placeholders[0].domain]
    mixed = beta * c_p + (1.0 - beta) * g_rows
    normed = layer_norm(mixed, fusion_params["ln_gain"], fusion_params["ln_bias"])
    return set_rows(c, positions, normed)


def graph_attention_gcls(query: Tensor, node_matrix: Tensor | None) -> Tensor:
    """Attention-weighted summary of the node matrix; zero vector when empty."""
    if node_matrix is None or node_matrix.shape[0] == 0:
        return Tensor.zeros((1, query.shape[-1]))
    d_h = query.shape[-1]
    scores = (query @ node_matrix.transpose((1, 0))) / math.sqrt(d_h)  # (1, k)
    return softmax(scores) @ node_matrix


# ---------------------------------------------------------------------------
# Corpus-level graph statistics
# ---------------------------------------------------------------------------

STATS_FIELDS = ["# edges", "# edge types", "# nodes", "# domains", "# values",
                ">=2 domains", ">=3 domains", "in dialog state"]


def graph_stats(dialogues: list[Dialogue], schema: Schema) -> dict[str, float]:
    """Per-turn means of graph size plus update-provenance fractions.

    Graphs are built from each turn's previous gold state (all-NULL before
    turn 0). "in dialog state" is the fraction of all turns that have at
    least one gold UPDATE and whose every UPDATE value already appears among
    the previous state's filled values.
    """
    pairs = schema.pairs()
    dummy_positions = {p: i for i, p in enumerate(pairs)}
    totals = {f: 0.0 for f in STATS_FIELDS}
    n_turns = 0
    for dlg in dialogues:
        prev = DialogueState.empty(pairs)
        for turn in dlg.turns:
            g = build_state_graph(prev, dummy_positions)
            n_turns += 1
            totals["# edges"] += g.n_edges
            totals["# edge types"] += g.n_edge_types
            totals["# nodes"] += g.n_nodes
            totals["# domains"] += len(g.domain_nodes)
            totals["# values"] += len(g.value_placeholders)
            totals[">=2 domains"] += len(g.domain_nodes) >= 2
            totals[">=3 domains"] += len(g.domain_nodes) >= 3
            updates = [v for _, (op, v) in derive_operations(prev, turn.gold_state).items()
                       if op == StateOperation.UPDATE]
            stored = {prev.get(p) for p in prev.filled_pairs()}
            totals["in dialog state"] += bool(updates) and all(v in stored for v in updates)
            prev = turn.gold_state
    if n_turns == 0:
        return {f: 0.0 for f in STATS_FIELDS}
    return {f: totals[f] / n_turns for f in STATS_FIELDS}


def write_stats_csv(per_split: dict[str, dict[str, float]], path) -> None:
    """One row per split, columns in the fixed report order."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["split", *STATS_FIELDS])
        for split, stats in per_split.items():
            writer.writerow([split, *[f"{stats[field]:.6g}" for field in STATS_FIELDS]])
