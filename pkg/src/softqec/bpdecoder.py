"""Soft-information belief propagation (min-sum, parallel) with OSD-0.

Variable nodes are merged error mechanisms (identical detector and
observable signature); measurement classification errors share the node of
the bit-flip channel that triggers the same detectors, so soft information
enters purely by re-composing the node priors shot by shot.  Decoding runs
min-sum message passing on a flooding schedule, falling back to an
order-zero ordered-statistics solve on the BP reliabilities whenever the
hard decision does not already satisfy the syndrome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import sparse

from softqec.pauli_sim import DetectorErrorModel

__all__ = [
    "TannerGraph",
    "BpSettings",
    "BpResult",
    "BpError",
    "tanner_from_dem",
    "update_priors",
    "bp_decode",
    "osd0",
    "decode_shot",
    "BpOsdDecoder",
]

_PRIOR_CLAMP = 1e-12


class BpError(ValueError):
    """Invalid decoder configuration or inconsistent inputs."""


@dataclass(frozen=True)
class BpSettings:
    """Decoder knobs; only min-sum with a parallel schedule is supported."""

    max_iters: int = 100
    method: str = "min-sum"
    schedule: str = "parallel"
    ms_scale: float = 1.0
    osd_order: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise BpError("max_iters must be >= 1")
        if self.method != "min-sum":
            raise BpError(f"unsupported BP method {self.method!r}")
        if self.schedule != "parallel":
            raise BpError(f"unsupported schedule {self.schedule!r}")
        if self.osd_order != 0:
            raise BpError("only OSD order 0 is implemented")


@dataclass
class TannerGraph:
    """Bipartite check/variable structure with priors and observables.

    ``var_tags[v]`` lists the measurement indices whose soft values update
    variable v's prior; ``meas_map`` is the inverse (measurement ->
    variables).
    """

    h: sparse.csr_matrix
    priors: np.ndarray
    obs: np.ndarray
    var_tags: list[tuple[int, ...]] = field(default_factory=list)
    n_meas: int = 0

    def __post_init__(self):
        self.h = sparse.csr_matrix(self.h).astype(np.uint8)
        self.priors = np.asarray(self.priors, dtype=np.float64)
        self.obs = np.atleast_2d(np.asarray(self.obs, dtype=np.uint8))
        if not self.var_tags:
            self.var_tags = [() for _ in range(self.n_vars)]
        if self.priors.size != self.n_vars or self.obs.shape[1] != self.n_vars:
            raise BpError("inconsistent prior/observable sizes")
        if np.any(self.priors < 0) or np.any(self.priors > 0.5):
            raise BpError("priors must lie in [0, 0.5]")
        coo = self.h.tocoo()
        order = np.lexsort((coo.col, coo.row))
        self.edge_check = coo.row[order].astype(np.int64)
        self.edge_var = coo.col[order].astype(np.int64)
        self.check_starts = np.searchsorted(self.edge_check, np.arange(self.n_checks))
        self.var_order = np.argsort(self.edge_var, kind="stable")
        self.var_starts = np.searchsorted(self.edge_var[self.var_order], np.arange(self.n_vars))
        self._col_words: np.ndarray | None = None

    @property
    def n_checks(self) -> int:
        return self.h.shape[0]

    @property
    def n_vars(self) -> int:
        return self.h.shape[1]

    @property
    def n_edges(self) -> int:
        return self.edge_check.size

    @property
    def n_observables(self) -> int:
        return self.obs.shape[0]

    @property
    def meas_map(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for v, tags in enumerate(self.var_tags):
            for t in tags:
                out.setdefault(t, []).append(v)
        return out

    def col_words(self) -> np.ndarray:
        """Columns of h packed into uint64 check-words (for OSD)."""
        if self._col_words is None:
            dense = np.ascontiguousarray(self.h.toarray().T)  # (V, C)
            packed = np.packbits(dense, axis=1, bitorder="little")
            wc = (self.n_checks + 63) // 64
            buf = np.zeros((self.n_vars, wc * 8), dtype=np.uint8)
            buf[:, : packed.shape[1]] = packed
            self._col_words = np.ascontiguousarray(buf).view(np.uint64)
        return self._col_words


def tanner_from_dem(dem: DetectorErrorModel) -> TannerGraph:
    """Variable nodes from DEM mechanisms, merged by (detectors, observables).

    Untagged mechanism probabilities compose into the node prior; tagged
    (soft) mechanisms contribute their measurement index instead, so their
    probability enters per shot through :func:`update_priors`.
    """
    groups: dict[tuple, int] = {}
    priors: list[float] = []
    tags: list[list[int]] = []
    sigs: list[tuple] = []
    for i in range(dem.n_mechanisms):
        key = (dem.dets[i], dem.obs[i])
        if key not in groups:
            groups[key] = len(priors)
            priors.append(0.0)
            tags.append([])
            sigs.append(key)
        v = groups[key]
        if dem.meas_tag[i] >= 0:
            tags[v].append(int(dem.meas_tag[i]))
        else:
            p = float(dem.probs[i])
            priors[v] = priors[v] * (1 - p) + p * (1 - priors[v])
    n_vars = len(priors)
    rows, cols = [], []
    for v, (dets, _) in enumerate(sigs):
        for d in dets:
            rows.append(d)
            cols.append(v)
    h = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.uint8), (rows, cols)),
        shape=(dem.n_detectors, n_vars),
    )
    obs = np.zeros((dem.n_observables, n_vars), dtype=np.uint8)
    for v, (_, os) in enumerate(sigs):
        for o in os:
            obs[o, v] = 1
    return TannerGraph(
        h=h,
        priors=np.array(priors),
        obs=obs,
        var_tags=[tuple(sorted(t)) for t in tags],
        n_meas=dem.n_meas,
    )


# ---------------------------------------------------------------------------
# prior updates


def _compose(a, b):
    return a * (1.0 - b) + b * (1.0 - a)


def update_priors(graph: TannerGraph, soft_q: np.ndarray) -> np.ndarray:
    """Per-shot priors: tagged nodes compose the base prior with each
    measurement's soft-flip probability, recursively over all tags."""
    soft_q = np.asarray(soft_q)
    single = soft_q.ndim == 1
    q = np.atleast_2d(soft_q).astype(np.float64)
    if q.shape[1] != graph.n_meas:
        raise BpError(f"need {graph.n_meas} soft values, got {q.shape[1]}")
    out = np.broadcast_to(graph.priors, (q.shape[0], graph.n_vars)).copy()
    depth = max((len(t) for t in graph.var_tags), default=0)
    for r in range(depth):
        vs = np.array([v for v, t in enumerate(graph.var_tags) if len(t) > r], dtype=np.int64)
        ms = np.array([graph.var_tags[v][r] for v in vs], dtype=np.int64)
        ps = np.minimum(q[:, ms], 255.0 - q[:, ms]) / 255.0
        out[:, vs] = _compose(out[:, vs], ps)
    return out[0] if single else out


def _llr_of(priors: np.ndarray) -> np.ndarray:
    p = np.clip(priors, _PRIOR_CLAMP, 0.5)
    return np.log((1.0 - p) / p)


# ---------------------------------------------------------------------------
# min-sum message passing (parallel schedule, batched over shots)


@dataclass
class BpResult:
    llrs: np.ndarray        # posterior LLR per variable
    hard: np.ndarray        # hard decision per variable
    converged: np.ndarray   # per-shot flag
    iterations: np.ndarray  # iteration of first convergence (or max_iters)


def bp_decode(graph: TannerGraph, priors: np.ndarray, syndromes: np.ndarray,
              settings: BpSettings | None = None) -> BpResult:
    """Min-sum BP over a batch of shots.

    ``priors`` is (V,) shared or (B, V); ``syndromes`` is (B, n_checks).
    Convergence means the bitwise hard decision reproduces the syndrome;
    non-convergence is reported, not raised.
    """
    settings = settings or BpSettings()
    syndromes = np.atleast_2d(np.asarray(syndromes, dtype=np.uint8))
    B = syndromes.shape[0]
    if syndromes.shape[1] != graph.n_checks:
        raise BpError("syndrome length mismatch")
    priors = np.asarray(priors, dtype=np.float64)
    prior_llr = _llr_of(np.broadcast_to(priors, (B, graph.n_vars)))

    ec, ev = graph.edge_check, graph.edge_var
    cs, vo, vs = graph.check_starts, graph.var_order, graph.var_starts
    sgn = 1.0 - 2.0 * syndromes[:, : graph.n_checks].astype(np.float64)

    m_cv = np.zeros((B, graph.n_edges))
    out_llr = np.array(prior_llr)
    hard = (out_llr < 0).astype(np.uint8)
    conv = np.zeros(B, dtype=bool)
    iters = np.full(B, settings.max_iters, dtype=np.int64)

    final_llr = np.array(out_llr)
    final_hard = np.array(hard)

    def syndrome_ok(h_bits):
        parity = (graph.h @ h_bits.T) & 1
        return ~np.any(parity.T ^ syndromes, axis=1)

    ok0 = syndrome_ok(hard)
    conv |= ok0
    iters[ok0] = 0
    final_llr[ok0] = out_llr[ok0]
    final_hard[ok0] = hard[ok0]
    if conv.all():
        return BpResult(final_llr, final_hard, conv, iters)

    for it in range(1, settings.max_iters + 1):
        tot = np.zeros((B, graph.n_vars))
        np.add.at(tot, (slice(None), ev), m_cv)
        m_vc = (prior_llr + tot)[:, ev] - m_cv

        mag = np.abs(m_vc)
        neg = (m_vc < 0).astype(np.int8)
        min1 = np.minimum.reduceat(mag, cs, axis=1)
        sgn_tot = np.bitwise_xor.reduceat(neg, cs, axis=1)
        min1_e = min1[:, ec]
        is_min = mag == min1_e
        n_min = np.add.reduceat(is_min.astype(np.int64), cs, axis=1)
        mag2 = np.where(is_min, np.inf, mag)
        min2 = np.minimum.reduceat(mag2, cs, axis=1)
        out_mag = np.where(is_min & (n_min[:, ec] == 1), min2[:, ec], min1_e)
        out_sgn = 1.0 - 2.0 * (sgn_tot[:, ec] ^ neg)
        m_cv = settings.ms_scale * sgn[:, ec] * out_sgn * out_mag

        tot = np.zeros((B, graph.n_vars))
        np.add.at(tot, (slice(None), ev), m_cv)
        out_llr = prior_llr + tot
        hard = (out_llr < 0).astype(np.uint8)
        ok = syndrome_ok(hard) & ~conv
        if ok.any():
            final_llr[ok] = out_llr[ok]
            final_hard[ok] = hard[ok]
            iters[ok] = it
            conv |= ok
            if conv.all():
                break

    done = ~conv
    final_llr[done] = out_llr[done]
    final_hard[done] = hard[done]
    return BpResult(final_llr, final_hard, conv, iters)


# ---------------------------------------------------------------------------
# OSD-0


@njit(cache=True)
def _osd0_kernel(col_words, perm, syn_words, n_checks, red_cols, lead_rows, col_ids, e_out):
    """Order-0 OSD: eliminate columns in reliability order, solve on pivots.

    Returns 0 on success, 1 if the syndrome is outside the column space.
    """
    V = perm.size
    Wc = col_words.shape[1]
    n_piv = 0
    cur = np.zeros(Wc, dtype=np.uint64)
    for idx in range(V):
        if n_piv >= n_checks:
            break
        v = perm[idx]
        for w in range(Wc):
            cur[w] = col_words[v, w]
        for pi in range(n_piv):
            r = lead_rows[pi]
            if (cur[r >> 6] >> np.uint64(r & 63)) & np.uint64(1):
                for w in range(Wc):
                    cur[w] ^= red_cols[pi, w]
        lead = -1
        for w in range(Wc):
            if cur[w] != 0:
                bit = 0
                x = cur[w]
                while (x & np.uint64(1)) == 0:
                    x >>= np.uint64(1)
                    bit += 1
                lead = (w << 6) + bit
                break
        if lead < 0:
            continue
        for w in range(Wc):
            red_cols[n_piv, w] = cur[w]
        lead_rows[n_piv] = lead
        col_ids[n_piv] = v
        n_piv += 1

    for v in range(e_out.size):
        e_out[v] = 0
    for pi in range(n_piv):
        r = lead_rows[pi]
        if (syn_words[r >> 6] >> np.uint64(r & 63)) & np.uint64(1):
            for w in range(syn_words.size):
                syn_words[w] ^= red_cols[pi, w]
            e_out[col_ids[pi]] = 1
    for w in range(syn_words.size):
        if syn_words[w] != 0:
            return 1
    return 0


def osd0(graph: TannerGraph, syndrome: np.ndarray, reliabilities: np.ndarray) -> np.ndarray:
    """Syndrome-exact error estimate on the most-reliable information set.

    ``reliabilities`` are posterior LLRs: columns are processed most
    likely-to-be-in-error first (ties broken by variable index).  Raises if
    the syndrome is not in the column space of the check matrix.
    """
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    order = np.lexsort((np.arange(graph.n_vars), np.asarray(reliabilities, dtype=np.float64)))
    wc = (graph.n_checks + 63) // 64
    syn_words = np.zeros(wc * 8, dtype=np.uint8)
    syn_words[: (graph.n_checks + 7) // 8] = np.packbits(syndrome, bitorder="little")
    syn_words = syn_words.view(np.uint64).copy()
    red_cols = np.zeros((graph.n_checks, wc), dtype=np.uint64)
    lead_rows = np.zeros(graph.n_checks, dtype=np.int64)
    col_ids = np.zeros(graph.n_checks, dtype=np.int64)
    e = np.zeros(graph.n_vars, dtype=np.uint8)
    bad = _osd0_kernel(
        graph.col_words(), order.astype(np.int64), syn_words,
        graph.n_checks, red_cols, lead_rows, col_ids, e,
    )
    if bad:
        raise BpError("syndrome outside the column space of the check matrix")
    return e


def decode_shot(graph: TannerGraph, settings: BpSettings | None, syndrome: np.ndarray,
                soft_q: np.ndarray | None = None) -> np.ndarray:
    """update priors -> BP -> OSD-0 when unconverged -> observable bits."""
    return BpOsdDecoder(graph, settings).decode_batch(
        np.atleast_2d(syndrome), None if soft_q is None else np.atleast_2d(soft_q)
    )[0]


class BpOsdDecoder:
    """BP+OSD-0 over a Tanner graph, batched over shots."""

    def __init__(self, graph: TannerGraph, settings: BpSettings | None = None):
        self.graph = graph
        self.settings = settings or BpSettings()
        self._static_priors: np.ndarray | None = None

    def with_static_soft(self, mean_ps: float) -> "BpOsdDecoder":
        """Hard-information variant: tags folded in at the average rate."""
        p = self.graph.priors.copy()
        for v, tags in enumerate(self.graph.var_tags):
            for _ in tags:
                p[v] = _compose(p[v], mean_ps)
        self._static_priors = p
        return self

    def decode_batch(self, syndromes: np.ndarray, soft_q: np.ndarray | None = None) -> np.ndarray:
        g = self.graph
        syndromes = np.atleast_2d(np.asarray(syndromes, dtype=np.uint8))
        if soft_q is not None:
            priors = update_priors(g, np.atleast_2d(soft_q))
        elif self._static_priors is not None:
            priors = self._static_priors
        else:
            priors = g.priors
        res = bp_decode(g, priors, syndromes, self.settings)
        errors = res.hard.copy()
        for b in np.nonzero(~res.converged)[0]:
            errors[b] = osd0(g, syndromes[b], res.llrs[b])
        return (errors @ g.obs.T) & 1
