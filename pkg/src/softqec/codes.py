"""Code constructions: rotated surface-code memory circuits and BB codes.

Circuits are plain Clifford operation lists (reset, Hadamard, CX, measure)
split into layers by TICK markers, with detectors declared as parities of
absolute measurement indices and observables as measurement-index sets.
A line-oriented text round-trip is provided; noise is attached later by
the sampler, never stored in the circuit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from softqec import gf2

__all__ = [
    "Circuit",
    "CircuitError",
    "build_rotated_memory",
    "BbCode",
    "build_bb_code",
    "bb72_code",
    "bb144_code",
    "logical_ops",
    "build_bb_phenom",
    "BbPhenomModel",
    "SectorSpec",
]


class CircuitError(ValueError):
    """Malformed circuit or unsupported construction parameters."""


# ---------------------------------------------------------------------------
# circuit container


@dataclass
class Circuit:
    """Layered Clifford circuit with detector/observable declarations.

    ``operations`` holds tuples: ("R", qubits), ("H", qubits),
    ("CX", pairs) with pairs a flat (control, target, ...) sequence,
    ("M", qubits), and ("TICK",).  Measurement indices are assigned in
    execution order.  ``detector_basis`` optionally labels each detector
    with its CSS basis ("X"/"Z").
    """

    n_qubits: int
    operations: list[tuple] = field(default_factory=list)
    detectors: list[tuple[int, ...]] = field(default_factory=list)
    observables: list[tuple[int, ...]] = field(default_factory=list)
    coords: dict[int, tuple[float, float]] = field(default_factory=dict)
    detector_basis: list[str] | None = None

    def __post_init__(self):
        n_meas = self.n_meas
        for det in self.detectors:
            for m in det:
                if not (0 <= m < n_meas):
                    raise CircuitError(f"detector references missing measurement {m}")
        for obs in self.observables:
            for m in obs:
                if not (0 <= m < n_meas):
                    raise CircuitError(f"observable references missing measurement {m}")
        if self.detector_basis is not None and len(self.detector_basis) != len(self.detectors):
            raise CircuitError("detector_basis length mismatch")

    @property
    def n_meas(self) -> int:
        return sum(len(op[1]) for op in self.operations if op[0] == "M")

    @property
    def n_detectors(self) -> int:
        return len(self.detectors)

    @property
    def n_observables(self) -> int:
        return len(self.observables)

    def layers(self) -> list[list[tuple]]:
        """Operations grouped between TICK markers (empty layers dropped)."""
        out: list[list[tuple]] = [[]]
        for op in self.operations:
            if op[0] == "TICK":
                if out[-1]:
                    out.append([])
            else:
                out[-1].append(op)
        if out and not out[-1]:
            out.pop()
        return out

    # -- text round-trip ----------------------------------------------------

    def to_text(self) -> str:
        lines: list[str] = []
        for op in self.operations:
            if op[0] == "TICK":
                lines.append("TICK")
            elif op[0] == "CX":
                lines.append("CX " + " ".join(str(q) for q in op[1]))
            else:
                lines.append(f"{op[0]} " + " ".join(str(q) for q in op[1]))
        for det in self.detectors:
            lines.append("DETECTOR " + " ".join(str(m) for m in det))
        for obs in self.observables:
            lines.append("OBSERVABLE " + " ".join(str(m) for m in obs))
        if self.detector_basis is not None:
            lines.append("# DBASIS " + "".join(self.detector_basis))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        ops: list[tuple] = []
        dets: list[tuple[int, ...]] = []
        obss: list[tuple[int, ...]] = []
        basis: list[str] | None = None
        max_q = -1
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "DBASIS":
                    basis = list(parts[1])
                continue
            parts = line.split()
            name, args = parts[0].upper(), parts[1:]
            try:
                idx = [int(a) for a in args]
            except ValueError as exc:
                raise CircuitError(f"line {lineno}: bad index in {line!r}") from exc
            if name == "TICK":
                ops.append(("TICK",))
            elif name in ("R", "H", "M"):
                ops.append((name, tuple(idx)))
                max_q = max(max_q, *idx) if idx else max_q
            elif name == "CX":
                if len(idx) % 2:
                    raise CircuitError(f"line {lineno}: CX needs an even qubit count")
                ops.append(("CX", tuple(idx)))
                max_q = max(max_q, *idx)
            elif name == "DETECTOR":
                dets.append(tuple(idx))
            elif name == "OBSERVABLE":
                obss.append(tuple(idx))
            else:
                raise CircuitError(f"line {lineno}: unknown instruction {name!r}")
        return cls(
            n_qubits=max_q + 1,
            operations=ops,
            detectors=dets,
            observables=obss,
            detector_basis=basis,
        )


# ---------------------------------------------------------------------------
# rotated surface code

# CX sweep offsets per layer, chosen so the two middle CNOTs of an X
# plaquette leave a horizontal hook pair and those of a Z plaquette a
# vertical one; with the X logical running vertically and the Z logical
# horizontally neither hook shortens a logical chain.  Offsets of the two
# plaquette types in any layer differ by a diagonal reflection, which lands
# on same-coloured (hence absent) ancilla sites and keeps the layers
# conflict-free.
_X_SWEEP = ((1, 1), (-1, 1), (1, -1), (-1, -1))
_Z_SWEEP = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _rotated_layout(d: int):
    """Qubit indices and plaquette lists for a distance-d rotated code."""
    data_at = {}
    for r in range(d):
        for c in range(d):
            data_at[(2 * c + 1, 2 * r + 1)] = len(data_at)
    ancillas = []  # (x, y, type)
    for a in range(d + 1):
        for b in range(d + 1):
            kind = "X" if (a + b) % 2 == 0 else "Z"
            bulk = 1 <= a <= d - 1 and 1 <= b <= d - 1
            top_bot = b in (0, d) and 1 <= a <= d - 1 and kind == "X"
            left_right = a in (0, d) and 1 <= b <= d - 1 and kind == "Z"
            if bulk or top_bot or left_right:
                ancillas.append((2 * a, 2 * b, kind))
    anc_index = {}
    for x, y, kind in sorted(ancillas):
        anc_index[(x, y)] = len(data_at) + len(anc_index)
    return data_at, ancillas, anc_index


def build_rotated_memory(d: int, rounds: int, basis: str = "Z") -> Circuit:
    """Rotated planar quantum-memory circuit with per-round ancilla resets.

    ``d`` must be odd; the circuit uses d^2 data and d^2-1 ancilla qubits,
    measures every stabiliser for ``rounds`` rounds through the standard
    four-step CX sweep, and closes with a transversal data measurement in
    the memory basis.  Detectors compare consecutive stabiliser outcomes
    (plus the deterministic first round and the final data closure in the
    memory basis); the single observable is a logical string of final data
    measurements.
    """
    if d < 3 or d % 2 == 0:
        raise CircuitError(f"distance must be odd and >= 3, got {d}")
    if rounds < 1:
        raise CircuitError(f"rounds must be >= 1, got {rounds}")
    basis = basis.upper()
    if basis not in ("X", "Z"):
        raise CircuitError(f"basis must be X or Z, got {basis!r}")

    data_at, ancillas, anc_index = _rotated_layout(d)
    n_data = len(data_at)
    anc_list = sorted(anc_index, key=anc_index.get)
    anc_kind = {pos: kind for x, y, kind in ancillas for pos in [(x, y)]}
    x_anc = [anc_index[p] for p in anc_list if anc_kind[p] == "X"]
    all_anc = [anc_index[p] for p in anc_list]

    def supports(pos):
        x, y = pos
        return [data_at[(x + dx, y + dy)] for dx, dy in ((-1, -1), (1, -1), (-1, 1), (1, 1)) if (x + dx, y + dy) in data_at]

    ops: list[tuple] = []
    coords = {idx: (float(x), float(y)) for (x, y), idx in data_at.items()}
    coords.update({idx: (float(x), float(y)) for (x, y), idx in anc_index.items()})

    def cx_layers():
        layers = []
        for step in range(4):
            pairs: list[int] = []
            for pos in anc_list:
                kind = anc_kind[pos]
                dx, dy = (_X_SWEEP if kind == "X" else _Z_SWEEP)[step]
                dq = data_at.get((pos[0] + dx, pos[1] + dy))
                if dq is None:
                    continue
                aq = anc_index[pos]
                pairs += [aq, dq] if kind == "X" else [dq, aq]
            layers.append(("CX", tuple(pairs)))
        return layers

    meas_of_anc_round: dict[tuple[int, int], int] = {}
    n_meas = 0

    # round 0 resets data as well
    ops.append(("R", tuple(range(n_data)) + tuple(all_anc)))
    ops.append(("TICK",))
    for t in range(rounds):
        if t > 0:
            ops.append(("R", tuple(all_anc)))
            ops.append(("TICK",))
        ops.append(("H", tuple(x_anc)))
        ops.append(("TICK",))
        for layer in cx_layers():
            ops.append(layer)
            ops.append(("TICK",))
        ops.append(("H", tuple(x_anc)))
        ops.append(("TICK",))
        ops.append(("M", tuple(all_anc)))
        ops.append(("TICK",))
        for j, aq in enumerate(all_anc):
            meas_of_anc_round[(aq, t)] = n_meas + j
        n_meas += len(all_anc)

    if basis == "X":
        ops.append(("H", tuple(range(n_data))))
        ops.append(("TICK",))
    ops.append(("M", tuple(range(n_data))))
    meas_of_data = {q: n_meas + q for q in range(n_data)}

    detectors: list[tuple[int, ...]] = []
    det_basis: list[str] = []
    for pos in anc_list:
        if anc_kind[pos] == basis:
            detectors.append((meas_of_anc_round[(anc_index[pos], 0)],))
            det_basis.append(basis)
    for t in range(1, rounds):
        for pos in anc_list:
            aq = anc_index[pos]
            detectors.append((meas_of_anc_round[(aq, t)], meas_of_anc_round[(aq, t - 1)]))
            det_basis.append(anc_kind[pos])
    for pos in anc_list:
        if anc_kind[pos] != basis:
            continue
        aq = anc_index[pos]
        members = tuple(meas_of_data[q] for q in supports(pos)) + (meas_of_anc_round[(aq, rounds - 1)],)
        detectors.append(members)
        det_basis.append(basis)

    if basis == "Z":
        logical = [data_at[(2 * c + 1, 1)] for c in range(d)]
    else:
        logical = [data_at[(1, 2 * r + 1)] for r in range(d)]
    observables = [tuple(meas_of_data[q] for q in logical)]

    return Circuit(
        n_qubits=n_data + len(all_anc),
        operations=ops,
        detectors=detectors,
        observables=observables,
        coords=coords,
        detector_basis=det_basis,
    )


# ---------------------------------------------------------------------------
# bivariate bicycle codes


@dataclass(frozen=True)
class BbCode:
    """CSS code built from two bivariate polynomials over Z_l x Z_m."""

    l: int
    m: int
    a_terms: tuple[tuple[int, int], ...]
    b_terms: tuple[tuple[int, int], ...]
    hx: np.ndarray
    hz: np.ndarray

    @property
    def n(self) -> int:
        return 2 * self.l * self.m

    @property
    def k(self) -> int:
        return self.n - gf2.rank(self.hx) - gf2.rank(self.hz)


def _monomial_sum(l: int, m: int, terms) -> np.ndarray:
    """Sum (mod 2) of shift monomials x^i y^j over Z_l x Z_m."""
    lm = l * m
    out = np.zeros((lm, lm), dtype=np.uint8)
    for i, j in terms:
        if not (0 <= i < l and 0 <= j < m):
            raise CircuitError(f"exponent ({i},{j}) outside (l={l}, m={m})")
        rows = ((np.arange(lm) // m + i) % l) * m + (np.arange(lm) % m + j) % m
        out[rows, np.arange(lm)] ^= 1
    return out


def build_bb_code(l: int, m: int, a_terms, b_terms) -> BbCode:
    """hx = [A|B], hz = [B^T|A^T]; raises if the CSS condition fails."""
    a = _monomial_sum(l, m, a_terms)
    b = _monomial_sum(l, m, b_terms)
    hx = np.hstack([a, b])
    hz = np.hstack([b.T, a.T])
    if np.any((hx @ hz.T) % 2):
        raise CircuitError("CSS condition hx @ hz^T = 0 violated")
    return BbCode(l=l, m=m, a_terms=tuple(map(tuple, a_terms)), b_terms=tuple(map(tuple, b_terms)), hx=hx, hz=hz)


def bb72_code() -> BbCode:
    """The [[72, 12, 6]] instance: A = x^3 + y + y^2, B = y^3 + x + x^2."""
    return build_bb_code(6, 6, [(3, 0), (0, 1), (0, 2)], [(0, 3), (1, 0), (2, 0)])


def bb144_code() -> BbCode:
    """The [[144, 12, 12]] instance: same polynomials over Z_12 x Z_6."""
    return build_bb_code(12, 6, [(3, 0), (0, 1), (0, 2)], [(0, 3), (1, 0), (2, 0)])


def logical_ops(h_other: np.ndarray, h_same: np.ndarray) -> np.ndarray:
    """Basis of logicals commuting with ``h_other`` modulo rows of ``h_same``.

    For Z-type logicals pass (hx, hz); for X-type pass (hz, hx).
    """
    kernel = gf2.nullspace(h_other)
    return gf2.quotient_basis(kernel, h_same)


# ---------------------------------------------------------------------------
# phenomenological repeated measurement structure


@dataclass
class SectorSpec:
    """Static description of one CSS sector of a repeated-measurement model.

    Variables are data errors (q, t) for t = 0..T-1 followed by measurement
    errors (c, t) for t = 0..T-2 (the final round is read out perfectly).
    Checks are the consecutive-round syndrome differences (c, t).
    """

    h: np.ndarray            # stabiliser matrix (n_checks x n)
    logicals: np.ndarray     # (k x n) logical supports flipped by this sector's errors
    rounds: int
    data_prior: float
    meas_prior: float

    @property
    def n(self) -> int:
        return self.h.shape[1]

    @property
    def n_checks(self) -> int:
        return self.h.shape[0]

    @property
    def n_vars(self) -> int:
        return self.rounds * self.n + (self.rounds - 1) * self.n_checks

    @property
    def n_detectors(self) -> int:
        return self.rounds * self.n_checks

    @property
    def n_meas(self) -> int:
        """Soft-sampled measurements: every noisy syndrome readout."""
        return (self.rounds - 1) * self.n_checks

    def data_var(self, q: int, t: int) -> int:
        return t * self.n + q

    def meas_var(self, c: int, t: int) -> int:
        return self.rounds * self.n + t * self.n_checks + c

    def detector(self, c: int, t: int) -> int:
        return t * self.n_checks + c

    def check_matrix(self) -> np.ndarray:
        """Dense (n_detectors x n_vars) incidence of errors on detectors."""
        T, nc, n = self.rounds, self.n_checks, self.n
        out = np.zeros((self.n_detectors, self.n_vars), dtype=np.uint8)
        for t in range(T):
            out[t * nc:(t + 1) * nc, t * n:(t + 1) * n] = self.h
        for t in range(T - 1):
            for c in range(nc):
                v = self.meas_var(c, t)
                out[self.detector(c, t), v] ^= 1
                out[self.detector(c, t + 1), v] ^= 1
        return out

    def obs_matrix(self) -> np.ndarray:
        out = np.zeros((self.logicals.shape[0], self.n_vars), dtype=np.uint8)
        for t in range(self.rounds):
            out[:, t * self.n:(t + 1) * self.n] = self.logicals
        return out

    def var_meas_tags(self) -> list[tuple[int, ...]]:
        """Measurement indices whose soft value reweights each variable."""
        tags: list[tuple[int, ...]] = [() for _ in range(self.n_vars)]
        for t in range(self.rounds - 1):
            for c in range(self.n_checks):
                tags[self.meas_var(c, t)] = (t * self.n_checks + c,)
        return tags


class BbPhenomModel:
    """Both CSS sectors of a phenomenological BB-code memory.

    Data qubits flip independently with probability p each round; noisy
    rounds are read out through a soft measurement whose physical bit-flip
    part has probability p, and the final round is perfect.
    """

    def __init__(self, code: BbCode, rounds: int, p: float, p_s: float):
        if rounds < 1:
            raise CircuitError(f"rounds must be >= 1, got {rounds}")
        self.code = code
        self.rounds = rounds
        self.p = p
        self.p_s = p_s
        lz = logical_ops(code.hx, code.hz)
        lx = logical_ops(code.hz, code.hx)
        # X errors are caught by Z-type checks (hz) and flip Z logicals.
        self.sectors = {
            "X": SectorSpec(h=code.hz, logicals=lz, rounds=rounds, data_prior=p, meas_prior=p),
            "Z": SectorSpec(h=code.hx, logicals=lx, rounds=rounds, data_prior=p, meas_prior=p),
        }

    def sample_sector(self, sector: str, shots: int, rng: np.random.Generator, sampler=None):
        """Sample (detectors, q, true logical flips) for one sector.

        ``sampler`` provides quantised soft values for the noisy syndrome
        readouts; when None the measurement is purely the bit-flip channel
        and q is reported as confident 0/255.
        """
        spec = self.sectors[sector]
        T, nc, n = spec.rounds, spec.n_checks, spec.n
        data_err = (rng.random((shots, T, n)) < spec.data_prior).astype(np.uint8)
        cum = np.cumsum(data_err, axis=1) & 1
        syndromes = (cum @ spec.h.T) & 1  # (shots, T, nc)
        bitflips = (rng.random((shots, T - 1, nc)) < spec.meas_prior).astype(np.uint8)
        ideal = syndromes[:, : T - 1] ^ bitflips
        ideal_flat = ideal.reshape(shots, -1)
        if sampler is not None:
            q = sampler.sample_q(ideal_flat, rng)
        else:
            q = np.where(ideal_flat, 255, 0).astype(np.uint8)
        hardened = (q >= 128).astype(np.uint8).reshape(shots, T - 1, nc)
        observed = np.concatenate([hardened, syndromes[:, T - 1:]], axis=1)
        detectors = observed.copy()
        detectors[:, 1:] ^= observed[:, :-1]
        logical_flips = (cum[:, T - 1] @ spec.logicals.T) & 1
        return detectors.reshape(shots, -1), q, logical_flips


def build_bb_phenom(code: BbCode, rounds: int, p: float, p_s: float) -> BbPhenomModel:
    """Phenomenological repeated-measurement model over both CSS sectors."""
    return BbPhenomModel(code, rounds, p, p_s)
