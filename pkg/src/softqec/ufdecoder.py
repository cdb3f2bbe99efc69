"""Weighted union-find decoding with per-shot soft reweighting.

The decoding graph is built per CSS basis from a detector error model:
mechanisms touching one or two basis detectors become (boundary) edges,
wider mechanisms are decomposed into primitive edges, and the soft
classification mechanisms attach their measurement tag to the edge sharing
their endpoints.  Per-shot reweighting replaces the weight of each tagged
edge through a 256-entry lookup table indexed by the measurement's
quantised soft value, so the shot loop performs no logarithms.

Cluster growth uses integer half-edge units on weights discretised to 1/64
natural-log units; peeling inside the grown forest yields a correction
whose implied syndrome always reproduces the input exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from softqec.pauli_sim import DetectorErrorModel

__all__ = [
    "DecodingGraph",
    "WeightLut",
    "DecodingError",
    "graph_from_dem",
    "hard_baseline_graph",
    "reweight",
    "decode",
    "UnionFindDecoder",
    "ml_oracle",
    "bounded_ml_table",
    "weight_of_prob",
    "WEIGHT_SCALE",
    "PROB_CLAMP",
]

# Integer weight units per natural-log unit; bounds the lookup-table error
# below one growth unit while keeping integer arithmetic.
WEIGHT_SCALE = 64
PROB_CLAMP = 1e-12
_MAX_WEIGHT = int(round(-math.log(PROB_CLAMP / (1 - PROB_CLAMP)) * WEIGHT_SCALE))


class DecodingError(ValueError):
    """Graph construction or decoding failure."""


def _clamp_prob(p: float) -> float:
    return min(max(p, PROB_CLAMP), 0.5 - PROB_CLAMP)


def weight_of_prob(p: float) -> float:
    """Edge weight -log(p / (1-p)) after clamping p into (0, 0.5)."""
    p = _clamp_prob(p)
    return -math.log(p / (1.0 - p))


def _int_weight(p: float) -> int:
    return int(round(weight_of_prob(p) * WEIGHT_SCALE))


def _compose(a: float, b: float) -> float:
    return a * (1.0 - b) + b * (1.0 - a)


@dataclass
class DecodingGraph:
    """Per-basis matching graph; node ``n_nodes - 1`` is the boundary.

    ``edge_tags[e]`` lists the measurements whose soft values reweight edge
    e (usually one; distinct measurements can share a signature, e.g. two
    final data qubits of one plaquette that both sit on the logical
    string).  ``base_probs`` hold the composed probability of the physical
    (untagged) mechanisms only.
    """

    basis: str
    n_nodes: int
    det_nodes: np.ndarray      # global detector index per non-boundary node
    edges_u: np.ndarray
    edges_v: np.ndarray
    base_probs: np.ndarray
    obs_mask: np.ndarray       # int64 bitmask per edge
    edge_tags: list[tuple[int, ...]]
    n_meas: int
    n_observables: int

    def __post_init__(self):
        self.base_weights = np.array([_int_weight(p) for p in self.base_probs], dtype=np.int32)
        order = np.argsort(np.concatenate([self.edges_u, self.edges_v]), kind="stable")
        eid = np.concatenate([np.arange(self.n_edges), np.arange(self.n_edges)])
        nodes = np.concatenate([self.edges_u, self.edges_v])
        self._adj_eid = eid[order].astype(np.int32)
        counts = np.bincount(nodes, minlength=self.n_nodes)
        self._adj_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    @property
    def n_edges(self) -> int:
        return self.edges_u.size

    @property
    def boundary(self) -> int:
        return self.n_nodes - 1

    @property
    def tagged_edges(self) -> np.ndarray:
        return np.array([e for e, t in enumerate(self.edge_tags) if t], dtype=np.int32)

    def syndrome_from_detectors(self, detector_bits: np.ndarray) -> np.ndarray:
        """Restrict a full detector-bit vector/matrix to this basis's nodes."""
        bits = np.asarray(detector_bits, dtype=np.uint8)
        return bits[..., self.det_nodes]


@dataclass
class WeightLut:
    """Per-shot edge weights from quantised soft values.

    Single-tag edges go through one 256-entry integer table per distinct
    tagged base probability: entry q holds the weight of
    compose(p_base, min(q, 255-q)/255), a zero base probability being
    substituted by the soft-flip probability alone.  Tables are symmetric
    in q -> 255-q and peak at the confident values q in {0, 255}.  Edges
    carrying several tags (rare) compose their soft-flip probabilities
    recursively and convert to a weight directly.
    """

    tables: np.ndarray        # (n_classes, 256) int32
    tag_edges: np.ndarray     # (n_single,) edge ids
    tag_meas: np.ndarray      # (n_single,) measurement index per tagged edge
    tag_class: np.ndarray     # (n_single,) row of `tables` per tagged edge
    multi_edges: np.ndarray   # (n_multi,) edge ids with >1 tag
    multi_base: np.ndarray    # (n_multi,) base probabilities
    multi_tags: list[tuple[int, ...]]

    @classmethod
    def for_graph(cls, graph: DecodingGraph) -> "WeightLut":
        singles = [e for e, t in enumerate(graph.edge_tags) if len(t) == 1]
        multis = [e for e, t in enumerate(graph.edge_tags) if len(t) > 1]
        base = graph.base_probs[singles]
        classes, inverse = np.unique(base, return_inverse=True) if singles else (np.zeros(0), np.zeros(0, dtype=np.int64))
        qs = np.arange(256)
        p_soft = np.minimum(qs, 255 - qs) / 255.0
        tables = np.empty((classes.size, 256), dtype=np.int32)
        for ci, pb in enumerate(classes):
            eff = p_soft if pb == 0.0 else _compose(pb, p_soft)
            tables[ci] = [_int_weight(p) for p in eff]
        return cls(
            tables=tables,
            tag_edges=np.array(singles, dtype=np.int32),
            tag_meas=np.array([graph.edge_tags[e][0] for e in singles], dtype=np.int64),
            tag_class=inverse.astype(np.int32),
            multi_edges=np.array(multis, dtype=np.int32),
            multi_base=graph.base_probs[multis] if multis else np.zeros(0),
            multi_tags=[graph.edge_tags[e] for e in multis],
        )

    def _multi_weights(self, soft_q2d: np.ndarray) -> np.ndarray:
        """(B, n_multi) int32 weights by recursive probability composition."""
        B = soft_q2d.shape[0]
        out = np.empty((B, self.multi_edges.size), dtype=np.int32)
        for j, tags in enumerate(self.multi_tags):
            p = np.full(B, self.multi_base[j])
            for t in tags:
                q = soft_q2d[:, t].astype(np.float64)
                ps = np.minimum(q, 255.0 - q) / 255.0
                p = p * (1.0 - ps) + ps * (1.0 - p)
            p = np.clip(p, PROB_CLAMP, 0.5 - PROB_CLAMP)
            out[:, j] = np.rint(-np.log(p / (1.0 - p)) * WEIGHT_SCALE).astype(np.int32)
        return out

    def overlay(self, soft_q2d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(edge ids, (B, n) int32 weights) replacing base weights per shot."""
        single_w = self.tables[self.tag_class, soft_q2d[:, self.tag_meas]].astype(np.int32) if self.tag_edges.size else np.zeros((soft_q2d.shape[0], 0), dtype=np.int32)
        if not self.multi_edges.size:
            return self.tag_edges, single_w
        multi_w = self._multi_weights(soft_q2d)
        return (
            np.concatenate([self.tag_edges, self.multi_edges]),
            np.concatenate([single_w, multi_w], axis=1),
        )

    def weights_for(self, graph: DecodingGraph, soft_q: np.ndarray) -> np.ndarray:
        """Per-shot weight vectors; ``soft_q`` is (n_meas,) or (B, n_meas)."""
        soft_q = np.asarray(soft_q)
        single = soft_q.ndim == 1
        soft_q2d = np.atleast_2d(soft_q)
        edges, w_over = self.overlay(soft_q2d)
        w = np.broadcast_to(graph.base_weights, (soft_q2d.shape[0], graph.n_edges)).copy()
        w[:, edges] = w_over
        return w[0] if single else w


# ---------------------------------------------------------------------------
# graph construction


def _basis_of(dem: DetectorErrorModel, basis: str) -> np.ndarray:
    if dem.detector_basis is None:
        return np.ones(dem.n_detectors, dtype=bool)
    return np.array([b == basis for b in dem.detector_basis])


def graph_from_dem(dem: DetectorErrorModel, basis: str) -> DecodingGraph:
    """Matching graph of one CSS basis.

    Single-detector mechanisms attach to the boundary node; mechanisms with
    three or four basis detectors are decomposed into primitive edges (the
    components inherit the parent probability).  Tagged soft mechanisms
    never merge into the base probability; they mark their edge as
    reweightable, creating a zero-base edge if no physical mechanism shares
    the endpoints.
    """
    basis = basis.upper()
    in_basis = _basis_of(dem, basis)
    det_nodes = np.nonzero(in_basis)[0]
    node_of = {int(d): i for i, d in enumerate(det_nodes)}
    n_nodes = det_nodes.size + 1
    boundary = n_nodes - 1

    def edge_key(dets_b: tuple[int, ...], obs: tuple[int, ...]):
        obs_bits = 0
        for o in obs:
            obs_bits |= 1 << o
        if len(dets_b) == 2:
            u, v = sorted((node_of[dets_b[0]], node_of[dets_b[1]]))
        elif len(dets_b) == 1:
            u, v = node_of[dets_b[0]], boundary
        else:
            raise DecodingError("edge key needs 1 or 2 detectors")
        return (u, v, obs_bits)

    restricted: list[tuple[tuple[int, ...], tuple[int, ...], float, int]] = []
    for i in range(dem.n_mechanisms):
        dets_b = tuple(d for d in dem.dets[i] if in_basis[d])
        if not dets_b:
            continue
        restricted.append((dets_b, dem.obs[i], float(dem.probs[i]), int(dem.meas_tag[i])))

    probs: dict[tuple, float] = {}
    for dets_b, obs, p, tag in restricted:
        if tag >= 0 or len(dets_b) > 2:
            continue
        key = edge_key(dets_b, obs)
        probs[key] = _compose(probs.get(key, 0.0), p)

    primitive_pairs = {(k[0], k[1]): k[2] for k in probs}

    # Hyperedges: write the detector set as a disjoint union of primitive
    # edges (pairs, plus boundary singles) whose observable masks XOR to
    # the mechanism's mask.
    for dets_b, obs, p, tag in restricted:
        if tag >= 0 or len(dets_b) <= 2:
            continue
        if len(dets_b) > 4:
            raise DecodingError(f"undecomposable hyperedge {dets_b} (too wide)")
        target_obs = 0
        for o in obs:
            target_obs |= 1 << o
        nodes = [node_of[d] for d in dets_b]
        parts = _decompose(nodes, target_obs, primitive_pairs, boundary)
        if parts is None:
            raise DecodingError(f"undecomposable hyperedge dets={dets_b} obs={obs}")
        for u, v in parts:
            key = (u, v, primitive_pairs[(u, v)])
            probs[key] = _compose(probs.get(key, 0.0), p)

    # Soft mechanisms: attach tags (creating zero-base edges if needed).
    tags: dict[tuple, list[int]] = {}
    for dets_b, obs, p, tag in restricted:
        if tag < 0:
            continue
        if len(dets_b) > 2:
            raise DecodingError(f"soft mechanism spans {len(dets_b)} detectors in basis {basis}")
        key = edge_key(dets_b, obs)
        tags.setdefault(key, []).append(tag)
        probs.setdefault(key, 0.0)

    keys = sorted(probs)
    eu = np.array([k[0] for k in keys], dtype=np.int32)
    ev = np.array([k[1] for k in keys], dtype=np.int32)
    return DecodingGraph(
        basis=basis,
        n_nodes=n_nodes,
        det_nodes=det_nodes.astype(np.int64),
        edges_u=eu,
        edges_v=ev,
        base_probs=np.array([probs[k] for k in keys]),
        obs_mask=np.array([k[2] for k in keys], dtype=np.int64),
        edge_tags=[tuple(sorted(tags.get(k, ()))) for k in keys],
        n_meas=dem.n_meas,
        n_observables=dem.n_observables,
    )


def _decompose(nodes: list[int], target_obs: int, primitive_pairs: dict, boundary: int):
    """Split 3-4 nodes into primitive pairs/boundary singles matching obs."""
    def pair_obs(u, v):
        key = (min(u, v), max(u, v))
        return primitive_pairs.get(key)

    candidates = []
    if len(nodes) == 4:
        a, b, c, d = nodes
        pairings = [((a, b), (c, d)), ((a, c), (b, d)), ((a, d), (b, c))]
        for p1, p2 in pairings:
            o1, o2 = pair_obs(*p1), pair_obs(*p2)
            if o1 is not None and o2 is not None and (o1 ^ o2) == target_obs:
                candidates.append([tuple(sorted(p1)), tuple(sorted(p2))])
    else:
        a, b, c = nodes
        for single, pair in [(a, (b, c)), (b, (a, c)), (c, (a, b))]:
            o1, o2 = pair_obs(single, boundary), pair_obs(*pair)
            if o1 is not None and o2 is not None and (o1 ^ o2) == target_obs:
                candidates.append([(single, boundary), tuple(sorted(pair))])
    if not candidates:
        return None
    return sorted(candidates)[0]


def hard_baseline_graph(dem: DetectorErrorModel, mean_ps: float, basis: str) -> DecodingGraph:
    """Data-informed hard graph: tagged edges statically composed with the
    shot-averaged soft-flip probability (once per tag), tags removed."""
    g = graph_from_dem(dem, basis)
    base = g.base_probs.copy()
    if mean_ps > 0:
        for e in g.tagged_edges:
            p = base[e]
            for _ in g.edge_tags[e]:
                p = mean_ps if p == 0.0 else _compose(p, mean_ps)
            base[e] = p
    return DecodingGraph(
        basis=g.basis,
        n_nodes=g.n_nodes,
        det_nodes=g.det_nodes,
        edges_u=g.edges_u,
        edges_v=g.edges_v,
        base_probs=base,
        obs_mask=g.obs_mask,
        edge_tags=[() for _ in range(g.n_edges)],
        n_meas=g.n_meas,
        n_observables=g.n_observables,
    )


def reweight(graph: DecodingGraph, soft_q: np.ndarray, lut: WeightLut | None = None) -> np.ndarray:
    """Per-shot integer weight vector for one soft-value row."""
    soft_q = np.asarray(soft_q)
    if soft_q.shape[-1] != graph.n_meas:
        raise DecodingError(f"need {graph.n_meas} soft values, got {soft_q.shape[-1]}")
    lut = lut or WeightLut.for_graph(graph)
    return lut.weights_for(graph, soft_q)


# ---------------------------------------------------------------------------
# union-find kernels


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def _decode_one(
    eu, ev, w, obsm, adj_ptr, adj_eid, boundary,
    defects,            # uint8 per node (boundary entry unused)
    parent, parity, bndf, estate, grown,
    ring_head, pool_next, pool_edge,
    ll_next, ll_tail,
    order, tree_edge, visited, resid,
    sel_out,
):
    n = parent.size
    E = eu.size
    ring_mask = ring_head.size - 1  # ring size is a power of two
    cap = pool_edge.size
    for i in range(n):
        parent[i] = i
        parity[i] = 0
        bndf[i] = 0
        ll_next[i] = -1
        ll_tail[i] = i
    bndf[boundary] = 1
    for e in range(E):
        estate[e, 0] = 0   # accumulated support
        estate[e, 1] = 0   # clock at last touch
        estate[e, 2] = 0   # growth rate (active sides)
        estate[e, 3] = -1  # scheduled completion time
        grown[e] = 0
        sel_out[e] = 0
    for i in range(ring_mask + 1):
        ring_head[i] = -1

    n_defects = 0
    for i in range(n - 1):
        if defects[i]:
            parity[i] = 1
            n_defects += 1
    if n_defects == 0:
        return 0, 0

    # Zero-weight edges merge immediately.
    for e in range(E):
        if w[e] <= 0:
            ru = _find(parent, eu[e])
            rv = _find(parent, ev[e])
            grown[e] = 1
            if ru != rv:
                parent[rv] = ru
                parity[ru] ^= parity[rv]
                bndf[ru] |= bndf[rv]
                ll_next[ll_tail[ru]] = rv
                ll_tail[ru] = ll_tail[rv]

    # Event-driven lockstep growth: active clusters expand at unit rate,
    # an edge fills at the number of active clusters beside it, and a
    # calendar queue (time ring of bucket lists) orders the completions.
    # Completion lags are bounded by the maximum edge weight, so buckets
    # are addressed modulo the ring size; an entry is stale unless its
    # bucket time matches the edge's scheduled time.  A merge re-times
    # exactly the edges on the side whose activity changed.
    pool_len = 0
    n_live = 0
    clock = np.int64(0)

    for i in range(n - 1):
        r = _find(parent, i)
        if not (parity[r] == 1 and bndf[r] == 0):
            continue
        for kk in range(adj_ptr[i], adj_ptr[i + 1]):
            e = adj_eid[kk]
            if grown[e]:
                continue
            ru = _find(parent, eu[e])
            rv = _find(parent, ev[e])
            if ru == rv:
                continue
            s = 0
            if parity[ru] == 1 and bndf[ru] == 0:
                s += 1
            if parity[rv] == 1 and bndf[rv] == 0:
                s += 1
            if s == estate[e, 2] and estate[e, 2] > 0:
                continue  # other endpoint already scheduled it this pass
            estate[e, 0] += estate[e, 2] * (clock - estate[e, 1])
            estate[e, 1] = clock
            estate[e, 2] = s
            if s > 0:
                need = w[e] - estate[e, 0]
                if need < 0:
                    need = 0
                tc = clock + (need + s - 1) // s
                estate[e, 3] = tc
                if pool_len >= cap:
                    return 0, 2
                slot = tc & ring_mask
                pool_edge[pool_len] = e
                pool_next[pool_len] = ring_head[slot]
                ring_head[slot] = pool_len
                pool_len += 1
                n_live += 1

    cursor = np.int64(0)
    while n_live > 0:
        slot = cursor & ring_mask
        entry = ring_head[slot]
        if entry < 0:
            cursor += 1
            continue
        ring_head[slot] = pool_next[entry]
        n_live -= 1
        e = pool_edge[entry]
        t = cursor
        if grown[e] or estate[e, 3] != t:
            continue
        ru = _find(parent, eu[e])
        rv = _find(parent, ev[e])
        if ru == rv:
            continue
        clock = t
        estate[e, 0] += estate[e, 2] * (clock - estate[e, 1])
        estate[e, 1] = clock
        grown[e] = 1
        a_act = 1 if parity[ru] == 1 and bndf[ru] == 0 else 0
        c_act = 1 if parity[rv] == 1 and bndf[rv] == 0 else 0
        a_stop = ll_tail[ru]
        c_stop = ll_tail[rv]
        parent[rv] = ru
        parity[ru] ^= parity[rv]
        bndf[ru] |= bndf[rv]
        ll_next[ll_tail[ru]] = rv
        ll_tail[ru] = ll_tail[rv]
        d_act = 1 if parity[ru] == 1 and bndf[ru] == 0 else 0
        for side in range(2):
            if side == 0:
                if a_act == d_act:
                    continue
                node = ru
                stop = a_stop
            else:
                if c_act == d_act:
                    continue
                node = rv
                stop = c_stop
            while node != -1:
                for kk in range(adj_ptr[node], adj_ptr[node + 1]):
                    ee = adj_eid[kk]
                    if grown[ee]:
                        continue
                    ru2 = _find(parent, eu[ee])
                    rv2 = _find(parent, ev[ee])
                    if ru2 == rv2:
                        continue
                    s = 0
                    if parity[ru2] == 1 and bndf[ru2] == 0:
                        s += 1
                    if parity[rv2] == 1 and bndf[rv2] == 0:
                        s += 1
                    if s == estate[ee, 2] and estate[ee, 1] == clock:
                        continue
                    estate[ee, 0] += estate[ee, 2] * (clock - estate[ee, 1])
                    estate[ee, 1] = clock
                    estate[ee, 2] = s
                    if s > 0:
                        need = w[ee] - estate[ee, 0]
                        if need < 0:
                            need = 0
                        tc = clock + (need + s - 1) // s
                        estate[ee, 3] = tc
                        if pool_len >= cap:
                            return 0, 2
                        slot2 = tc & ring_mask
                        pool_edge[pool_len] = ee
                        pool_next[pool_len] = ring_head[slot2]
                        ring_head[slot2] = pool_len
                        pool_len += 1
                        n_live += 1
                    else:
                        estate[ee, 3] = -1
                if node == stop:
                    break
                node = ll_next[node]

    # Check every active cluster was resolved (graph connectivity).
    for i in range(n - 1):
        r = _find(parent, i)
        if parity[r] == 1 and bndf[r] == 0:
            return 0, 1

    # Peeling within the grown forest; boundary-rooted tree first so any
    # residual parity is dumped on the boundary.
    for i in range(n):
        visited[i] = 0
        tree_edge[i] = -1
        resid[i] = 0
    for i in range(n - 1):
        resid[i] = defects[i]

    order_len = 0
    for s in range(n + 1):
        start = boundary if s == 0 else s - 1
        if visited[start]:
            continue
        visited[start] = 1
        head = order_len
        order[order_len] = start
        order_len += 1
        while head < order_len:
            v = order[head]
            head += 1
            for kk in range(adj_ptr[v], adj_ptr[v + 1]):
                e = adj_eid[kk]
                if grown[e] != 1:
                    continue
                u = eu[e] if ev[e] == v else ev[e]
                if not visited[u]:
                    visited[u] = 1
                    tree_edge[u] = e
                    order[order_len] = u
                    order_len += 1

    pred = np.int64(0)
    for idx in range(order_len - 1, -1, -1):
        v = order[idx]
        e = tree_edge[v]
        if e < 0:
            continue
        if resid[v] == 1:
            sel_out[e] = 1
            resid[v] = 0
            u = eu[e] if ev[e] == v else ev[e]
            resid[u] ^= 1
            pred ^= obsm[e]
    # Residual parity is legal only on the boundary.
    bad = 0
    for i in range(n - 1):
        if resid[i]:
            bad = 1
    return pred, bad


@njit(cache=True)
def _decode_batch(
    eu, ev, base_w, obsm, adj_ptr, adj_eid, boundary,
    syndromes,          # (B, n_basis_dets) uint8
    tag_edges, tag_weights,  # (Et,), (B, Et) int32; Et may be 0
    parent, parity, bndf, estate, grown,
    ring_head, pool_next, pool_edge,
    ll_next, ll_tail,
    order, tree_edge, visited, resid, sel, w_buf, defects,
    preds, fails,
):
    B = syndromes.shape[0]
    E = eu.size
    Et = tag_edges.size
    for b in range(B):
        for e in range(E):
            w_buf[e] = base_w[e]
        for t in range(Et):
            w_buf[tag_edges[t]] = tag_weights[b, t]
        nd = syndromes.shape[1]
        for i in range(nd):
            defects[i] = syndromes[b, i]
        pred, bad = _decode_one(
            eu, ev, w_buf, obsm, adj_ptr, adj_eid, boundary,
            defects, parent, parity, bndf, estate, grown,
            ring_head, pool_next, pool_edge,
            ll_next, ll_tail, order, tree_edge, visited, resid, sel,
        )
        preds[b] = pred
        fails[b] = bad


class UnionFindDecoder:
    """Weighted union-find decoder over a :class:`DecodingGraph`.

    ``decode_batch`` accepts hardened detector bits (full-width) plus an
    optional matrix of per-shot soft values; tagged edges are reweighted
    through the lookup table before each shot is decoded.
    """

    def __init__(self, graph: DecodingGraph):
        self.graph = graph
        self.lut = WeightLut.for_graph(graph)
        n, E = graph.n_nodes, graph.n_edges
        heap_cap = 64 * E + 64
        self._parent = np.zeros(n, dtype=np.int32)
        self._parity = np.zeros(n, dtype=np.uint8)
        self._bndf = np.zeros(n, dtype=np.uint8)
        self._estate = np.zeros((E, 4), dtype=np.int64)
        self._grown = np.zeros(E, dtype=np.uint8)
        ring_size = 1 << (_MAX_WEIGHT + 2).bit_length()
        self._ring = np.full(ring_size, -1, dtype=np.int32)
        self._pool_next = np.zeros(heap_cap, dtype=np.int32)
        self._pool_edge = np.zeros(heap_cap, dtype=np.int32)
        self._ll_next = np.zeros(n, dtype=np.int32)
        self._ll_tail = np.zeros(n, dtype=np.int32)
        self._order = np.zeros(n, dtype=np.int32)
        self._tree_edge = np.zeros(n, dtype=np.int32)
        self._visited = np.zeros(n, dtype=np.uint8)
        self._resid = np.zeros(n, dtype=np.uint8)
        self._sel = np.zeros(E, dtype=np.uint8)
        self._w_buf = np.zeros(E, dtype=np.int32)
        self._defects = np.zeros(max(n - 1, 1), dtype=np.uint8)

    def _shared(self):
        return (
            self._parent, self._parity, self._bndf, self._estate, self._grown,
            self._ring, self._pool_next, self._pool_edge,
            self._ll_next, self._ll_tail,
            self._order, self._tree_edge, self._visited, self._resid,
        )

    def decode_batch(self, detector_bits: np.ndarray, soft_q: np.ndarray | None = None) -> np.ndarray:
        """Observable predictions (B, n_observables) for a batch of shots."""
        g = self.graph
        syn = g.syndrome_from_detectors(np.atleast_2d(detector_bits))
        B = syn.shape[0]
        if soft_q is not None:
            tag_edges, tw = self.lut.overlay(np.atleast_2d(soft_q))
            tw = np.ascontiguousarray(tw, dtype=np.int32)
        else:
            tw = np.zeros((B, 0), dtype=np.int32)
            tag_edges = np.zeros(0, dtype=np.int32)
        preds = np.zeros(B, dtype=np.int64)
        fails = np.zeros(B, dtype=np.uint8)
        _decode_batch(
            g.edges_u, g.edges_v, g.base_weights, g.obs_mask,
            g._adj_ptr, g._adj_eid, g.boundary,
            np.ascontiguousarray(syn, dtype=np.uint8),
            tag_edges, tw,
            *self._shared(), self._sel, self._w_buf, self._defects,
            preds, fails,
        )
        if fails.any():
            raise DecodingError("peeling left unresolved defects (disconnected graph?)")
        out = np.zeros((B, max(g.n_observables, 1)), dtype=np.uint8)
        for o in range(g.n_observables):
            out[:, o] = (preds >> o) & 1
        return out[:, : g.n_observables]

    def decode_with_correction(self, detector_bits: np.ndarray, soft_q: np.ndarray | None = None):
        """Single-shot decode returning (prediction bits, selected edges)."""
        g = self.graph
        syn = g.syndrome_from_detectors(np.asarray(detector_bits))
        if soft_q is not None:
            w = self.lut.weights_for(g, soft_q).astype(np.int32)
        else:
            w = g.base_weights
        self._defects[: syn.size] = syn
        pred, bad = _decode_one(
            g.edges_u, g.edges_v, w, g.obs_mask,
            g._adj_ptr, g._adj_eid, g.boundary,
            self._defects, *self._shared(), self._sel,
        )
        if bad:
            raise DecodingError("peeling left unresolved defects")
        bits = np.array([(pred >> o) & 1 for o in range(g.n_observables)], dtype=np.uint8)
        return bits, np.nonzero(self._sel)[0]


def decode(graph: DecodingGraph, detector_bits: np.ndarray, soft_q: np.ndarray | None = None) -> np.ndarray:
    """One-shot convenience wrapper around :class:`UnionFindDecoder`."""
    return UnionFindDecoder(graph).decode_batch(detector_bits, None if soft_q is None else np.atleast_2d(soft_q))[0]


# ---------------------------------------------------------------------------
# exact and bounded maximum-likelihood oracles


def _mech_keys(dem: DetectorErrorModel):
    if dem.n_detectors > 63 or dem.n_observables > 63:
        raise DecodingError("oracle supports at most 63 detectors/observables")
    det_keys = np.zeros(dem.n_mechanisms, dtype=np.int64)
    obs_keys = np.zeros(dem.n_mechanisms, dtype=np.int64)
    for i in range(dem.n_mechanisms):
        for d in dem.dets[i]:
            det_keys[i] ^= np.int64(1) << np.int64(d)
        for o in dem.obs[i]:
            obs_keys[i] ^= np.int64(1) << np.int64(o)
    return det_keys, obs_keys


def ml_oracle(dem: DetectorErrorModel, detector_bits: np.ndarray) -> np.ndarray:
    """Exact maximum-likelihood observable class for one syndrome.

    Enumerates every subset of mechanisms, accumulates coset probabilities
    per observable class conditioned on the exact syndrome, and returns the
    argmax class (ties break toward the all-zero class).
    """
    n = dem.n_mechanisms
    if n > 22:
        raise DecodingError(f"ml_oracle enumeration limited to 22 mechanisms, got {n}")
    det_keys, obs_keys = _mech_keys(dem)
    target = np.int64(0)
    bits = np.asarray(detector_bits, dtype=np.uint8)
    for d in np.nonzero(bits)[0]:
        target ^= np.int64(1) << np.int64(d)

    sigs = np.zeros(1, dtype=np.int64)
    obss = np.zeros(1, dtype=np.int64)
    logp = np.zeros(1)
    for i in range(n):
        p = float(dem.probs[i])
        sigs = np.concatenate([sigs, sigs ^ det_keys[i]])
        obss = np.concatenate([obss, obss ^ obs_keys[i]])
        logp = np.concatenate([logp + math.log1p(-p), logp + math.log(p)])
    match = sigs == target
    if not match.any():
        raise DecodingError("syndrome not producible by the model")
    classes = obss[match]
    weights = np.exp(logp[match] - logp[match].max())
    uniq, inv = np.unique(classes, return_inverse=True)
    totals = np.bincount(inv, weights=weights)
    best = uniq[np.lexsort((uniq, -totals))[0]]
    out = np.zeros(dem.n_observables, dtype=np.uint8)
    for o in range(dem.n_observables):
        out[o] = (int(best) >> o) & 1
    return out


def bounded_ml_table(dem: DetectorErrorModel, max_mechs: int = 2):
    """Most likely observable class per syndrome over <=max_mechs-mechanism
    error sets, with each instance's probability weight.

    Returns (instance_weights, syndrome_keys, best_class) aligned over all
    enumerated error sets: ``best_class[i]`` is the ML class of instance
    i's syndrome within the bounded hypothesis space.  Used as a test
    oracle where full enumeration is infeasible.
    """
    if max_mechs != 2:
        raise DecodingError("only the two-mechanism table is implemented")
    det_keys, obs_keys = _mech_keys(dem)
    n = dem.n_mechanisms
    p = dem.probs
    log_stay = float(np.log1p(-p).sum())
    ii, jj = np.triu_indices(n, k=1)
    inst_sig = np.concatenate([np.zeros(n, dtype=np.int64) ^ det_keys, det_keys[ii] ^ det_keys[jj]])
    inst_obs = np.concatenate([obs_keys, obs_keys[ii] ^ obs_keys[jj]])
    odds = p / (1 - p)
    inst_w = np.concatenate([odds, odds[ii] * odds[jj]]) * math.exp(log_stay)

    best_of: dict[int, tuple[float, int]] = {}
    acc: dict[tuple[int, int], float] = {}
    for s, o, w in zip(inst_sig.tolist(), inst_obs.tolist(), inst_w.tolist()):
        acc[(s, o)] = acc.get((s, o), 0.0) + w
    for (s, o), w in acc.items():
        cur = best_of.get(s)
        if cur is None or w > cur[0] + 1e-18 or (abs(w - cur[0]) <= 1e-18 and o < cur[1]):
            best_of[s] = (w, o)
    best_class = np.array([best_of[int(s)][1] for s in inst_sig], dtype=np.int64)
    return inst_w, inst_sig, inst_obs, best_class
