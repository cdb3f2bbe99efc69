"""Pauli-frame Monte-Carlo sampling and detector-error-model extraction.

The sampler never simulates full quantum states per shot.  A stabiliser
tableau with symbolic phases runs once per circuit to (a) verify that all
detectors are deterministic and (b) capture the randomness structure of the
ideal measurement record as an affine space: a base record plus one
free bit per non-deterministic collapse.  Each shot then draws the free
bits, XORs sampled Pauli-frame flips on top, and pushes the ideal outcomes
through the soft readout stage.

The detector error model is extracted symbolically: every possible Pauli
outcome of every noise channel is propagated through the Clifford frame as
a packed bit-row, yielding its exact (detectors, observables) signature;
signatures are merged by composing probabilities (q1 ⊕ q2 in the XOR
sense).  Measurement classification channels stay unmerged and keep their
measurement index so decoders can reweight them per shot.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import sparse

from softqec.codes import Circuit, CircuitError
from softqec.noise import (
    NA,
    SC,
    NoiseConfig,
    channels_for,
    compose_flip_probs,
)

__all__ = [
    "DetectorErrorModel",
    "ShotRecord",
    "CircuitSampler",
    "build_dem",
    "sample_shots",
    "propagate_single_error",
    "DemError",
    "write_detector_batch",
    "read_detector_batch",
]

_DETS_MAGIC = b"DETS"
_DETS_VERSION = 1


class DemError(ValueError):
    """Detector-error-model construction or parsing failure."""


# ---------------------------------------------------------------------------
# detector error model


@dataclass
class DetectorErrorModel:
    """Independent error mechanisms with exact probabilities.

    ``meas_tag[i] >= 0`` marks mechanism i as the classification-error
    channel of that measurement; those mechanisms are the per-shot
    reweightable set and are never merged with physical channels even when
    they share a signature.
    """

    probs: np.ndarray
    dets: list[tuple[int, ...]]
    obs: list[tuple[int, ...]]
    meas_tag: np.ndarray
    n_detectors: int
    n_observables: int
    n_meas: int
    detector_basis: list[str] | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.meas_tag = np.asarray(self.meas_tag, dtype=np.int64)
        if not (len(self.dets) == len(self.obs) == self.probs.size == self.meas_tag.size):
            raise DemError("inconsistent mechanism arrays")
        tags = self.meas_tag[self.meas_tag >= 0]
        if np.unique(tags).size != tags.size:
            raise DemError("duplicate measurement tags")

    @property
    def n_mechanisms(self) -> int:
        return int(self.probs.size)

    def to_text(self) -> str:
        lines = [f"# META {self.n_detectors} {self.n_observables} {self.n_meas}"]
        if self.detector_basis is not None:
            lines.append("# DBASIS " + "".join(self.detector_basis))
        for i in range(self.n_mechanisms):
            parts = [f"error({float(self.probs[i])!r})"]
            parts += [f"D{d}" for d in self.dets[i]]
            parts += [f"L{o}" for o in self.obs[i]]
            if self.meas_tag[i] >= 0:
                parts.append(f"M{self.meas_tag[i]}")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DetectorErrorModel":
        probs: list[float] = []
        dets: list[tuple[int, ...]] = []
        obs: list[tuple[int, ...]] = []
        tags: list[int] = []
        meta = None
        basis = None
        pat = re.compile(r"^error\(([^)]+)\)\s*(.*)$")
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "META" and len(parts) == 4:
                    meta = tuple(int(v) for v in parts[1:])
                elif parts and parts[0] == "DBASIS":
                    basis = list(parts[1])
                continue
            m = pat.match(line)
            if not m:
                raise DemError(f"line {lineno}: expected an error(...) line, got {line!r}")
            probs.append(float(m.group(1)))
            d, o, t = [], [], -1
            for tok in m.group(2).split():
                if tok.startswith("D"):
                    d.append(int(tok[1:]))
                elif tok.startswith("L"):
                    o.append(int(tok[1:]))
                elif tok.startswith("M"):
                    t = int(tok[1:])
                else:
                    raise DemError(f"line {lineno}: bad token {tok!r}")
            dets.append(tuple(sorted(d)))
            obs.append(tuple(sorted(o)))
            tags.append(t)
        n_det = max((max(d) + 1 for d in dets if d), default=0)
        n_obs = max((max(o) + 1 for o in obs if o), default=0)
        n_meas = max((t + 1 for t in tags if t >= 0), default=0)
        if meta is not None:
            n_det, n_obs, n_meas = max(n_det, meta[0]), max(n_obs, meta[1]), max(n_meas, meta[2])
        return cls(
            probs=np.array(probs),
            dets=dets,
            obs=obs,
            meas_tag=np.array(tags),
            n_detectors=n_det,
            n_observables=n_obs,
            n_meas=n_meas,
            detector_basis=basis,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "DetectorErrorModel":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass
class ShotRecord:
    detectors: np.ndarray
    observables: np.ndarray
    soft: np.ndarray


# ---------------------------------------------------------------------------
# symbolic stabiliser tableau (reference record + randomness structure)


class _SymbolicTableau:
    """Aaronson-Gottesman tableau whose phases carry GF(2)-affine forms.

    Measurement collapse randomness enters as fresh free variables; every
    measurement outcome is recorded as (constant bit, mask over frees).
    Phase masks are Python ints used as bit sets.
    """

    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.rc = np.zeros(2 * n, dtype=np.uint8)
        self.rm = [0] * (2 * n)
        self.x[np.arange(n), np.arange(n)] = True
        self.z[np.arange(n, 2 * n), np.arange(n)] = True
        self.n_free = 0
        self.outcomes: list[tuple[int, int]] = []  # (const, mask)

    def h(self, q: int) -> None:
        self.rc ^= (self.x[:, q] & self.z[:, q]).astype(np.uint8)
        tmp = self.x[:, q].copy()
        self.x[:, q] = self.z[:, q]
        self.z[:, q] = tmp

    def cx(self, c: int, t: int) -> None:
        self.rc ^= (self.x[:, c] & self.z[:, t] & ~(self.x[:, t] ^ self.z[:, c])).astype(np.uint8)
        self.x[:, t] ^= self.x[:, c]
        self.z[:, c] ^= self.z[:, t]

    def _g_sum(self, xs1, zs1, xs2, zs2) -> int:
        x1 = xs1.astype(np.int8)
        z1 = zs1.astype(np.int8)
        x2 = xs2.astype(np.int8)
        z2 = zs2.astype(np.int8)
        g = np.zeros_like(x1)
        y1 = (x1 == 1) & (z1 == 1)
        xo = (x1 == 1) & (z1 == 0)
        zo = (x1 == 0) & (z1 == 1)
        g[y1] = (z2 - x2)[y1]
        g[xo] = (z2 * (2 * x2 - 1))[xo]
        g[zo] = (x2 * (1 - 2 * z2))[zo]
        return int(g.sum())

    def _rowsum_into(self, xh, zh, ch, mh, i):
        g = self._g_sum(self.x[i], self.z[i], xh, zh)
        total = 2 * int(ch) + 2 * int(self.rc[i]) + g
        assert total % 2 == 0
        return xh ^ self.x[i], zh ^ self.z[i], np.uint8((total % 4) // 2), mh ^ self.rm[i]

    def _rowsum(self, h: int, i: int) -> None:
        self.x[h], self.z[h], self.rc[h], self.rm[h] = self._rowsum_into(
            self.x[h], self.z[h], self.rc[h], self.rm[h], i
        )

    def measure_z(self, q: int) -> tuple[int, int]:
        n = self.n
        stab_hits = np.nonzero(self.x[n:, q])[0]
        if stab_hits.size:
            p = int(stab_hits[0]) + n
            for i in np.nonzero(self.x[:, q])[0]:
                if i != p:
                    self._rowsum(int(i), p)
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.rc[p - n] = self.rc[p]
            self.rm[p - n] = self.rm[p]
            self.x[p] = False
            self.z[p] = False
            self.z[p, q] = True
            f = self.n_free
            self.n_free += 1
            self.rc[p] = 0
            self.rm[p] = 1 << f
            out = (0, 1 << f)
        else:
            xs = np.zeros(self.n, dtype=bool)
            zs = np.zeros(self.n, dtype=bool)
            c, m = np.uint8(0), 0
            for i in np.nonzero(self.x[:n, q])[0]:
                xs, zs, c, m = self._rowsum_into(xs, zs, c, m, int(i) + n)
            out = (int(c), m)
        self.outcomes.append(out)
        return out

    def reset_z(self, q: int) -> None:
        c, m = self.measure_z(q)
        self.outcomes.pop()  # internal collapse, not part of the record
        if c or m:
            # Conditionally flip back to |0>: X^(outcome) phases every row
            # holding a Z on q.
            rows = np.nonzero(self.z[:, q])[0]
            for i in rows:
                self.rc[i] ^= np.uint8(c)
                self.rm[i] ^= m


def _reference_structure(circuit: Circuit):
    """Run the circuit symbolically; return the ideal-record structure.

    Returns (base_record, free_matrix) where ``free_matrix`` is an
    (n_free, n_meas) uint8 matrix: per-shot records are
    base ^ coins @ free_matrix.  Raises if any detector is not
    deterministic, i.e. depends on a free bit or has odd reference parity.
    """
    tab = _SymbolicTableau(circuit.n_qubits)
    for op in circuit.operations:
        kind = op[0]
        if kind == "TICK":
            continue
        if kind == "R":
            for q in op[1]:
                tab.reset_z(q)
        elif kind == "H":
            for q in op[1]:
                tab.h(q)
        elif kind == "CX":
            pairs = op[1]
            for c, t in zip(pairs[::2], pairs[1::2]):
                tab.cx(c, t)
        elif kind == "M":
            for q in op[1]:
                tab.measure_z(q)
        else:
            raise CircuitError(f"unknown operation {kind!r}")
    n_meas = len(tab.outcomes)
    base = np.array([c for c, _ in tab.outcomes], dtype=np.uint8)
    frees = np.zeros((tab.n_free, n_meas), dtype=np.uint8)
    for j, (_, mask) in enumerate(tab.outcomes):
        f = 0
        while mask:
            if mask & 1:
                frees[f, j] = 1
            mask >>= 1
            f += 1
    for di, det in enumerate(circuit.detectors):
        c = int(np.bitwise_xor.reduce(base[list(det)])) if det else 0
        m = np.bitwise_xor.reduce(frees[:, list(det)], axis=1) if det else np.zeros(0)
        if c or np.any(m):
            raise CircuitError(f"detector {di} is not deterministic in the noiseless circuit")
    obs_ref = []
    for oi, obs in enumerate(circuit.observables):
        if obs and np.any(np.bitwise_xor.reduce(frees[:, list(obs)], axis=1)):
            raise CircuitError(f"observable {oi} is random in the noiseless circuit")
        obs_ref.append(int(np.bitwise_xor.reduce(base[list(obs)])) if obs else 0)
    return base, frees, np.array(obs_ref, dtype=np.uint8)


# ---------------------------------------------------------------------------
# compiled event stream (shared by the DEM builder and the frame sampler)


_PAULI_X = {"X": True, "Y": True, "Z": False}
_PAULI_Z = {"X": False, "Y": True, "Z": True}

_DEP1 = tuple("XYZ")
_DEP2 = tuple((a, b) for a in "IXYZ" for b in "IXYZ")[1:]


def _compile_events(circuit: Circuit, cfg: NoiseConfig):
    """Flatten the circuit into gate and noise events in execution order.

    Noise events are batched per layer over the qubits sharing a channel:
    ("flip", qubits, p), ("dep1", qubits, p), ("xyz", qubits, px, py, pz)
    and ("dep2", controls, targets, p).  Each event consumes one uniform
    draw per target per shot; the draw's position inside the hit interval
    selects the mutually-exclusive Pauli outcome.  Soft channels are not
    part of the stream; they act on the measurement record afterwards.
    ("layer", i) markers delimit circuit layers for deterministic injection
    hooks.
    """
    ch = channels_for(cfg)
    events: list[tuple] = []
    meas_counter = 0
    all_qubits = frozenset(range(circuit.n_qubits))

    def dep1(qs, p):
        if p > 0 and len(qs):
            events.append(("dep1", np.asarray(qs, dtype=np.int64), float(p)))

    def dep2(pairs, p):
        if p > 0 and pairs:
            c = np.array([u for u, _ in pairs], dtype=np.int64)
            t = np.array([v for _, v in pairs], dtype=np.int64)
            events.append(("dep2", c, t, float(p)))

    def xyz(qs, probs):
        if sum(probs) > 0 and len(qs):
            px, py, pz = (float(v) for v in probs)
            events.append(("xyz", np.asarray(qs, dtype=np.int64), px, py, pz))

    def flip(qs, p):
        if p > 0 and len(qs):
            events.append(("flip", np.asarray(qs, dtype=np.int64), float(p)))

    def idle(layer_kind, idle_qubits):
        if not idle_qubits:
            return
        if cfg.platform == NA:
            if layer_kind == "M":
                dep1(idle_qubits, ch["idle_meas"].probs[0])
            return
        if not cfg.time_dependent:
            if layer_kind in ("H", "CX"):
                dep1(idle_qubits, ch["idle_gate"].probs[0])
            elif layer_kind == "M":
                dep1(idle_qubits, ch["idle_meas"].probs[0])
            return
        key = {"H": "idle_1q", "CX": "idle_2q", "R": "idle_r", "M": "idle_m"}[layer_kind]
        xyz(idle_qubits, ch[key].probs)

    for layer_index, layer in enumerate(circuit.layers()):
        events.append(("layer", layer_index))
        touched: set[int] = set()
        layer_kind = None
        staged: list[tuple] = []
        for op in layer:
            kind = op[0]
            if kind == "R":
                touched.update(op[1])
                layer_kind = layer_kind or "R"
                staged.append(("r", np.array(op[1], dtype=np.int64)))
                if "reset" in ch:
                    staged.append(("post_reset", op[1]))
            elif kind == "H":
                touched.update(op[1])
                layer_kind = "H" if layer_kind in (None, "R") else layer_kind
                staged.append(("h", np.array(op[1], dtype=np.int64)))
                if "1q" in ch:
                    staged.append(("post_1q", op[1]))
            elif kind == "CX":
                pairs = list(zip(op[1][::2], op[1][1::2]))
                touched.update(op[1])
                layer_kind = "CX"
                staged.append(
                    ("cx", np.array(op[1][::2], dtype=np.int64), np.array(op[1][1::2], dtype=np.int64))
                )
                staged.append(("post_cx", pairs))
            elif kind == "M":
                touched.update(op[1])
                layer_kind = "M"
                if "meas" in ch:
                    flip(op[1], ch["meas"].probs[0])
                midx = np.arange(meas_counter, meas_counter + len(op[1]), dtype=np.int64)
                meas_counter += len(op[1])
                staged.append(("m", np.array(op[1], dtype=np.int64), midx))
            else:
                raise CircuitError(f"unknown operation {kind!r}")
        for st in staged:
            if st[0] == "post_reset":
                flip(st[1], ch["reset"].probs[0])
            elif st[0] == "post_1q":
                dep1(st[1], ch["1q"].probs[0])
            elif st[0] == "post_cx":
                if cfg.platform == NA:
                    # The biased channel acts on each gate qubit independently.
                    xyz([q for pair in st[1] for q in pair], ch["cx"].probs)
                else:
                    dep2(st[1], ch["cx"].probs[0])
            else:
                events.append(st)
        idle(layer_kind, sorted(all_qubits - touched))
    if meas_counter != circuit.n_meas:
        raise CircuitError("measurement count mismatch during compilation")
    return events


# Staged gate events must execute in circuit order relative to noise; the
# compiler above emits measurement bit-flips before their M event and all
# other channels after the op they decorate, then layer idles.


# ---------------------------------------------------------------------------
# DEM construction


def _expand_outcomes(ev) -> list[tuple[float, tuple]]:
    """Per-instance (prob, ((qubit, pauli), ...)) list of one noise event."""
    kind = ev[0]
    out: list[tuple[float, tuple]] = []
    if kind == "flip":
        for q in ev[1]:
            out.append((ev[2], ((int(q), "X"),)))
    elif kind == "dep1":
        for q in ev[1]:
            for pl in _DEP1:
                out.append((ev[2] / 3.0, ((int(q), pl),)))
    elif kind == "xyz":
        for q in ev[1]:
            for pl, pr in zip("XYZ", ev[2:5]):
                if pr > 0:
                    out.append((pr, ((int(q), pl),)))
    elif kind == "dep2":
        for c, t in zip(ev[1], ev[2]):
            for pa, pb in _DEP2:
                ops = tuple((int(q), pl) for q, pl in ((c, pa), (t, pb)) if pl != "I")
                out.append((ev[3] / 15.0, ops))
    else:
        raise DemError(f"not a noise event: {kind}")
    return out


_NOISE_KINDS = ("flip", "dep1", "xyz", "dep2")


def _signature_pass(circuit: Circuit, events):
    """Propagate one packed bit-row per error instance through the circuit.

    Returns (probs, meas_flip_words, n_rows): probs per instance row and a
    (n_meas, words) packed matrix whose column bits mark which instances
    flip each measurement.
    """
    probs: list[float] = []
    injections: list[tuple[int, tuple]] = []  # (row, ((q, pauli), ...))
    order: list[tuple] = []
    for ev in events:
        if ev[0] in _NOISE_KINDS:
            for prob, paulis in _expand_outcomes(ev):
                injections.append((len(probs), paulis))
                probs.append(prob)
            order.append(("inject", len(injections)))
        elif ev[0] == "layer":
            continue
        else:
            order.append(ev)

    n_rows = max(1, len(probs))
    words = max(1, (n_rows + 63) // 64)
    xs = np.zeros((circuit.n_qubits, words), dtype=np.uint64)
    zs = np.zeros((circuit.n_qubits, words), dtype=np.uint64)
    meas = np.zeros((circuit.n_meas, words), dtype=np.uint64)

    def set_bit(arr_row, idx):
        arr_row[idx >> 6] ^= np.uint64(1) << np.uint64(idx & 63)

    next_injection = 0
    for ev in order:
        kind = ev[0]
        if kind == "inject":
            while next_injection < ev[1]:
                row, paulis = injections[next_injection]
                for q, pl in paulis:
                    if _PAULI_X[pl]:
                        set_bit(xs[q], row)
                    if _PAULI_Z[pl]:
                        set_bit(zs[q], row)
                next_injection += 1
        elif kind == "h":
            q = ev[1]
            tmp = xs[q].copy()
            xs[q] = zs[q]
            zs[q] = tmp
        elif kind == "cx":
            cq, tq = ev[1], ev[2]
            xs[tq] ^= xs[cq]
            zs[cq] ^= zs[tq]
        elif kind == "r":
            xs[ev[1]] = 0
            zs[ev[1]] = 0
        elif kind == "m":
            meas[ev[2]] = xs[ev[1]]
    return np.array(probs), meas, n_rows


def _unpack_columns(packed: np.ndarray, n_rows: int) -> np.ndarray:
    """(R, W) uint64 -> (n_rows, R) boolean, row r = column bits of word array."""
    as_bytes = packed.view(np.uint8).reshape(packed.shape[0], -1)
    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")[:, :n_rows]
    return bits.T.astype(bool)


def build_dem(circuit: Circuit, noise: NoiseConfig) -> DetectorErrorModel:
    """Exact detector error model of a noisy circuit.

    Physical channels are propagated symbolically and merged by signature
    with probability composition; the per-measurement soft channels stay
    separate and tagged.  A mechanism flipping more than four detectors in
    one CSS basis is recorded in ``warnings`` (it normally indicates a
    scheduling bug in the circuit builder).
    """
    events = _compile_events(circuit, noise)
    probs, meas_words, n_rows = _signature_pass(circuit, events)

    n_det, n_obs, n_meas = circuit.n_detectors, circuit.n_observables, circuit.n_meas
    det_words = np.zeros((n_det, meas_words.shape[1]), dtype=np.uint64)
    for d, members in enumerate(circuit.detectors):
        for mi in members:
            det_words[d] ^= meas_words[mi]
    obs_words = np.zeros((n_obs, meas_words.shape[1]), dtype=np.uint64)
    for o, members in enumerate(circuit.observables):
        for mi in members:
            obs_words[o] ^= meas_words[mi]

    det_bits = _unpack_columns(det_words, n_rows)
    obs_bits = _unpack_columns(obs_words, n_rows)

    merged: dict[tuple, float] = {}
    warnings: list[str] = []
    basis = circuit.detector_basis
    for i in range(probs.size):
        d = tuple(np.nonzero(det_bits[i])[0].tolist())
        o = tuple(np.nonzero(obs_bits[i])[0].tolist())
        if not d and not o:
            continue
        if not d and o:
            raise DemError(f"channel flips observables {o} without any detector")
        key = (d, o)
        q0 = merged.get(key, 0.0)
        merged[key] = compose_flip_probs(q0, float(probs[i]))

    # Soft classification channels: one tagged mechanism per measurement,
    # flipping exactly the detectors/observables that read that outcome.
    p_soft = noise.soft_flip_target
    meas_dets: list[list[int]] = [[] for _ in range(n_meas)]
    for di, members in enumerate(circuit.detectors):
        for mi in set(members):
            if members.count(mi) % 2 == 1:
                meas_dets[mi].append(di)
    meas_obs: list[list[int]] = [[] for _ in range(n_meas)]
    for oi, members in enumerate(circuit.observables):
        for mi in set(members):
            if members.count(mi) % 2 == 1:
                meas_obs[mi].append(oi)
    soft: list[tuple[tuple, tuple, int]] = []
    for mi in range(n_meas):
        d = tuple(sorted(meas_dets[mi]))
        o = tuple(sorted(meas_obs[mi]))
        if not d and not o:
            continue
        soft.append((d, o, mi))

    out_probs: list[float] = []
    out_dets: list[tuple[int, ...]] = []
    out_obs: list[tuple[int, ...]] = []
    out_tags: list[int] = []
    for (d, o), q in sorted(merged.items()):
        if q <= 0.0:
            continue
        out_probs.append(q)
        out_dets.append(d)
        out_obs.append(o)
        out_tags.append(-1)
    for d, o, mi in soft:
        out_probs.append(p_soft)
        out_dets.append(d)
        out_obs.append(o)
        out_tags.append(mi)

    for d, o in zip(out_dets, out_obs):
        if basis is not None:
            for b in ("X", "Z"):
                cnt = sum(1 for di in d if basis[di] == b)
                if cnt > 4:
                    warnings.append(f"mechanism {d} flips {cnt} {b}-basis detectors")
        elif len(d) > 4:
            warnings.append(f"mechanism {d} flips {len(d)} detectors")

    return DetectorErrorModel(
        probs=np.array(out_probs),
        dets=out_dets,
        obs=out_obs,
        meas_tag=np.array(out_tags, dtype=np.int64),
        n_detectors=n_det,
        n_observables=n_obs,
        n_meas=n_meas,
        detector_basis=basis,
        warnings=warnings,
    )


def propagate_single_error(circuit: Circuit, layer: int, pauli: str, qubit: int):
    """Signature (detectors, observables) of one Pauli injected at a layer start."""
    layers = circuit.layers()
    if not (0 <= layer <= len(layers)):
        raise CircuitError(f"layer {layer} out of range")
    events: list[tuple] = []
    meas_counter = 0
    one = {"X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0), "Z": (0.0, 0.0, 1.0)}[pauli.upper()]
    for li, ops in enumerate(layers):
        if li == layer:
            events.append(("xyz", np.array([qubit], dtype=np.int64), *one))
        for op in ops:
            if op[0] == "R":
                events.append(("r", np.array(op[1], dtype=np.int64)))
            elif op[0] == "H":
                events.append(("h", np.array(op[1], dtype=np.int64)))
            elif op[0] == "CX":
                events.append(("cx", np.array(op[1][::2], dtype=np.int64), np.array(op[1][1::2], dtype=np.int64)))
            elif op[0] == "M":
                midx = np.arange(meas_counter, meas_counter + len(op[1]), dtype=np.int64)
                meas_counter += len(op[1])
                events.append(("m", np.array(op[1], dtype=np.int64), midx))
    probs, meas_words, n_rows = _signature_pass(circuit, events)
    flips = _unpack_columns(meas_words, n_rows)[0]
    dets = tuple(
        di for di, members in enumerate(circuit.detectors)
        if sum(flips[mi] for mi in members) % 2 == 1
    )
    obs = tuple(
        oi for oi, members in enumerate(circuit.observables)
        if sum(flips[mi] for mi in members) % 2 == 1
    )
    return dets, obs


# ---------------------------------------------------------------------------
# frame sampling



_OP_NOISE, _OP_H, _OP_CX, _OP_R, _OP_M, _OP_LAYER = 0, 1, 2, 3, 4, 5


@njit(cache=True)
def _frame_kernel(
    op_kind, op_ptr, op_args, op_aux,
    hit_ptr, hit_shot, hit_q, hit_x, hit_z,
    inj_layer, inj_q, inj_x, inj_z,
    xs, zs, meas_words,
):
    """Propagate per-shot Pauli frames, bit-packed 64 shots per word."""
    W = xs.shape[1]
    for i in range(xs.shape[0]):
        for w in range(W):
            xs[i, w] = 0
            zs[i, w] = 0
    for op in range(op_kind.size):
        kind = op_kind[op]
        a0, a1 = op_ptr[op], op_ptr[op + 1]
        if kind == _OP_NOISE:
            for h in range(hit_ptr[op], hit_ptr[op + 1]):
                wrd = hit_shot[h] >> 6
                bit = np.uint64(hit_shot[h] & 63)
                q = hit_q[h]
                if hit_x[h]:
                    xs[q, wrd] ^= np.uint64(1) << bit
                if hit_z[h]:
                    zs[q, wrd] ^= np.uint64(1) << bit
        elif kind == _OP_H:
            for a in range(a0, a1):
                q = op_args[a]
                for w in range(W):
                    tmp = xs[q, w]
                    xs[q, w] = zs[q, w]
                    zs[q, w] = tmp
        elif kind == _OP_CX:
            a = a0
            while a < a1:
                c = op_args[a]
                t = op_args[a + 1]
                for w in range(W):
                    xs[t, w] ^= xs[c, w]
                    zs[c, w] ^= zs[t, w]
                a += 2
        elif kind == _OP_R:
            for a in range(a0, a1):
                q = op_args[a]
                for w in range(W):
                    xs[q, w] = 0
                    zs[q, w] = 0
        elif kind == _OP_M:
            half = (a1 - a0) // 2
            for j in range(half):
                q = op_args[a0 + j]
                m = op_args[a0 + half + j]
                for w in range(W):
                    meas_words[m, w] = xs[q, w]
        else:  # layer marker: apply matching deterministic injections
            lid = op_aux[op]
            for k in range(inj_layer.size):
                if inj_layer[k] == lid:
                    q = inj_q[k]
                    for w in range(W):
                        if inj_x[k]:
                            xs[q, w] = ~xs[q, w]
                        if inj_z[k]:
                            zs[q, w] = ~zs[q, w]


@njit(cache=True)
def _apply_free_flips(meas_words, free_ptr, free_midx, coin_words):
    for f in range(free_ptr.size - 1):
        for a in range(free_ptr[f], free_ptr[f + 1]):
            m = free_midx[a]
            for w in range(coin_words.shape[1]):
                meas_words[m, w] ^= coin_words[f, w]


@njit(cache=True)
def _q_sample_kernel(ideal, u, stay, alias, q_out):
    B, M = ideal.shape
    for i in range(B):
        for j in range(M):
            s = ideal[i, j]
            x = u[i, j] * 256.0
            b = int(x)
            if b > 255:
                b = 255
            if x - b < stay[s, b]:
                q_out[i, j] = b
            else:
                q_out[i, j] = alias[s, b]


class CircuitSampler:
    """Chunked, vectorised Pauli-frame sampler for one (circuit, noise) pair.

    ``readout_model`` supplies the soft measurement stage (a
    :class:`softqec.readout.QuantizedSampler`); without one, measurements
    harden to their ideal bits and q is reported as confident 0/255.
    Chunks are seeded by (seed, chunk index) counter-based streams, so
    results are bit-identical however the chunks are distributed over
    workers.
    """

    CHUNK = 4096

    def __init__(self, circuit: Circuit, noise: NoiseConfig, readout_sampler=None):
        self.circuit = circuit
        self.noise = noise
        self.readout = readout_sampler
        self.events = _compile_events(circuit, noise)
        self.base_ref, self.free_matrix, self.obs_ref = _reference_structure(circuit)
        self.n_free = self.free_matrix.shape[0]
        self._compile_oplist()
        n_meas = circuit.n_meas
        rows, cols = [], []
        for di, members in enumerate(circuit.detectors):
            for mi in members:
                rows.append(di)
                cols.append(mi)
        self.det_matrix = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.uint8), (rows, cols)),
            shape=(circuit.n_detectors, n_meas),
        )
        rows, cols = [], []
        for oi, members in enumerate(circuit.observables):
            for mi in members:
                rows.append(oi)
                cols.append(mi)
        self.obs_matrix = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.uint8), (rows, cols)),
            shape=(circuit.n_observables, n_meas),
        )

    def _compile_oplist(self):
        """Flatten events into the array form consumed by the frame kernel."""
        kinds: list[int] = []
        ptr: list[int] = [0]
        args: list[int] = []
        aux: list[int] = []
        noise_ops: list[tuple] = []  # (op index, event)
        for ev in self.events:
            kind = ev[0]
            if kind in _NOISE_KINDS:
                noise_ops.append((len(kinds), ev))
                kinds.append(_OP_NOISE)
                aux.append(0)
            elif kind == "h":
                kinds.append(_OP_H)
                args.extend(int(q) for q in ev[1])
                aux.append(0)
            elif kind == "cx":
                kinds.append(_OP_CX)
                for c, t in zip(ev[1], ev[2]):
                    args.append(int(c))
                    args.append(int(t))
                aux.append(0)
            elif kind == "r":
                kinds.append(_OP_R)
                args.extend(int(q) for q in ev[1])
                aux.append(0)
            elif kind == "m":
                kinds.append(_OP_M)
                args.extend(int(q) for q in ev[1])
                args.extend(int(m) for m in ev[2])
                aux.append(0)
            elif kind == "layer":
                kinds.append(_OP_LAYER)
                aux.append(int(ev[1]))
            else:
                raise DemError(f"unknown event {kind!r}")
            ptr.append(len(args))
        self._op_kind = np.array(kinds, dtype=np.int8)
        self._op_ptr = np.array(ptr, dtype=np.int64)
        self._op_args = np.array(args, dtype=np.int64)
        self._op_aux = np.array(aux, dtype=np.int64)
        self._noise_ops = noise_ops
        fptr = [0]
        fmidx: list[int] = []
        for f in range(self.n_free):
            fmidx.extend(np.nonzero(self.free_matrix[f])[0].tolist())
            fptr.append(len(fmidx))
        self._free_ptr = np.array(fptr, dtype=np.int64)
        self._free_midx = np.array(fmidx, dtype=np.int64)

    def _rng(self, seed: int, chunk: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, chunk))))

    @staticmethod
    def _distinct_positions(rng: np.random.Generator, n_sites: int, k: int) -> np.ndarray:
        """k distinct uniform site indices (rejection on collisions)."""
        pos = rng.integers(0, n_sites, size=k)
        while True:
            uniq = np.unique(pos)
            if uniq.size == k:
                return pos
            pos = np.concatenate([uniq, rng.integers(0, n_sites, size=k - uniq.size)])

    def _draw_hits(self, rng: np.random.Generator, B: int):
        """Exact per-channel hits: (per-op pointer, shot, qubit, x, z)."""
        ptr = np.zeros(self._op_kind.size + 1, dtype=np.int64)
        shots: list[np.ndarray] = []
        qubits: list[np.ndarray] = []
        xf: list[np.ndarray] = []
        zf: list[np.ndarray] = []
        counts = np.zeros(self._op_kind.size, dtype=np.int64)
        for op_idx, ev in self._noise_ops:
            kind = ev[0]
            if kind == "dep2":
                qarr, p_total = ev[1], ev[3]
            elif kind == "xyz":
                qarr = ev[1]
                px, py, pz = ev[2], ev[3], ev[4]
                p_total = px + py + pz
            else:
                qarr, p_total = ev[1], ev[2]
            n_sites = B * qarr.size
            k = int(rng.binomial(n_sites, p_total))
            if k == 0:
                continue
            pos = self._distinct_positions(rng, n_sites, k)
            shot = (pos // qarr.size).astype(np.int64)
            col = pos % qarr.size
            q = qarr[col]
            if kind == "flip":
                x = np.ones(k, dtype=np.uint8)
                z = np.zeros(k, dtype=np.uint8)
            elif kind == "dep1":
                code = rng.integers(1, 4, size=k)
                x = (code <= 2).astype(np.uint8)
                z = (code >= 2).astype(np.uint8)
            elif kind == "xyz":
                u = rng.random(k) * p_total
                x = (u < px + py).astype(np.uint8)
                z = (u >= px).astype(np.uint8)
            else:  # dep2: one row per gate qubit
                code = rng.integers(1, 16, size=k)
                pc = code >> 2
                pt = code & 3
                shot = np.concatenate([shot, shot])
                q = np.concatenate([q, ev[2][col]])
                x = np.concatenate([(pc == 1) | (pc == 2), (pt == 1) | (pt == 2)]).astype(np.uint8)
                z = np.concatenate([pc >= 2, pt >= 2]).astype(np.uint8)
            counts[op_idx] = shot.size
            shots.append(shot)
            qubits.append(q)
            xf.append(x)
            zf.append(z)
        np.cumsum(counts, out=ptr[1:])
        if shots:
            return ptr, np.concatenate(shots), np.concatenate(qubits).astype(np.int64), np.concatenate(xf), np.concatenate(zf)
        empty = np.zeros(0, dtype=np.int64)
        return ptr, empty, empty, np.zeros(0, dtype=np.uint8), np.zeros(0, dtype=np.uint8)

    def sample_chunk(self, seed: int, chunk: int, n: int, inject=None) -> dict:
        """Sample ``n`` shots of chunk ``chunk``.

        ``inject`` optionally lists deterministic (layer, qubit, pauli)
        errors applied to every shot at the start of that layer (a test
        hook for cross-checking signatures against the DEM).
        """
        rng = self._rng(seed, chunk)
        B = n
        W = (B + 63) // 64
        nq = self.circuit.n_qubits
        n_meas = self.circuit.n_meas
        hit_ptr, hit_shot, hit_q, hit_x, hit_z = self._draw_hits(rng, B)
        inj = list(inject or [])
        inj_layer = np.array([l for l, _, _ in inj], dtype=np.int64)
        inj_q = np.array([q for _, q, _ in inj], dtype=np.int64)
        inj_x = np.array([1 if _PAULI_X[pl] else 0 for _, _, pl in inj], dtype=np.uint8)
        inj_z = np.array([1 if _PAULI_Z[pl] else 0 for _, _, pl in inj], dtype=np.uint8)

        xs = np.zeros((nq, W), dtype=np.uint64)
        zs = np.zeros((nq, W), dtype=np.uint64)
        meas_words = np.zeros((n_meas, W), dtype=np.uint64)
        _frame_kernel(
            self._op_kind, self._op_ptr, self._op_args, self._op_aux,
            hit_ptr, hit_shot, hit_q, hit_x, hit_z,
            inj_layer, inj_q, inj_x, inj_z,
            xs, zs, meas_words,
        )
        if self.n_free:
            coin_bits = rng.random((self.n_free, B)) < 0.5
            packed = np.packbits(coin_bits, axis=1, bitorder="little")
            buf = np.zeros((self.n_free, W * 8), dtype=np.uint8)
            buf[:, : packed.shape[1]] = packed
            _apply_free_flips(meas_words, self._free_ptr, self._free_midx, buf.view(np.uint64))
        ideal = _unpack_columns(meas_words, B).astype(np.uint8)
        ideal ^= self.base_ref[None, :]

        if self.readout is not None:
            u = rng.random((B, n_meas))
            q = np.empty((B, n_meas), dtype=np.uint8)
            _q_sample_kernel(ideal, u, self.readout._stay, self.readout._alias, q)
        else:
            q = np.where(ideal, 255, 0).astype(np.uint8)
        hardened = (q >= 128).astype(np.uint8)
        detectors = (self.det_matrix @ hardened.T % 2).astype(np.uint8).T
        observables = (self.obs_matrix @ hardened.T % 2).astype(np.uint8).T
        observables ^= self.obs_ref[None, :]
        return {
            "ideal": ideal,
            "q": q,
            "hardened": hardened,
            "detectors": detectors,
            "observables": observables,
        }

    def sample(self, shots: int, seed: int, inject=None) -> dict:
        """Sample ``shots`` shots as stacked arrays (chunked internally)."""
        outs: list[dict] = []
        done = 0
        chunk = 0
        while done < shots:
            n = min(self.CHUNK, shots - done)
            outs.append(self.sample_chunk(seed, chunk, n, inject=inject))
            done += n
            chunk += 1
        return {k: np.concatenate([o[k] for o in outs], axis=0) for k in outs[0]}


def sample_shots(circuit: Circuit, noise: NoiseConfig, readout_sampler, shots: int, seed: int) -> list[ShotRecord]:
    """Sample shot records (detector bits, observable bits, soft values)."""
    sampler = CircuitSampler(circuit, noise, readout_sampler)
    arrs = sampler.sample(shots, seed)
    return [
        ShotRecord(
            detectors=arrs["detectors"][i],
            observables=arrs["observables"][i],
            soft=arrs["q"][i],
        )
        for i in range(shots)
    ]


# ---------------------------------------------------------------------------
# packed detector batch files


def write_detector_batch(path, detectors: np.ndarray, observables: np.ndarray) -> None:
    detectors = np.asarray(detectors, dtype=np.uint8)
    observables = np.asarray(observables, dtype=np.uint8)
    shots, n_det = detectors.shape
    n_obs = observables.shape[1]
    with open(path, "wb") as fh:
        fh.write(_DETS_MAGIC)
        fh.write(struct.pack("<HIII", _DETS_VERSION, shots, n_det, n_obs))
        dp = np.packbits(detectors, axis=1, bitorder="little")
        op = np.packbits(observables, axis=1, bitorder="little") if n_obs else np.zeros((shots, 0), dtype=np.uint8)
        for s in range(shots):
            fh.write(dp[s].tobytes())
            fh.write(op[s].tobytes())


def read_detector_batch(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _DETS_MAGIC:
        raise DemError("not a detector batch file (bad magic)")
    version, shots, n_det, n_obs = struct.unpack("<HIII", raw[4:18])
    if version != _DETS_VERSION:
        raise DemError(f"unsupported detector batch version {version}")
    dw = (n_det + 7) // 8
    ow = (n_obs + 7) // 8
    body = np.frombuffer(raw, dtype=np.uint8, offset=18).reshape(shots, dw + ow)
    dets = np.unpackbits(body[:, :dw], axis=1, bitorder="little")[:, :n_det]
    obs = np.unpackbits(body[:, dw:], axis=1, bitorder="little")[:, :n_obs] if n_obs else np.zeros((shots, 0), dtype=np.uint8)
    return dets, obs
