"""Measurement response models, posteriors and 8-bit soft values.

Two platform models are provided:

* :class:`ScReadoutModel` -- dispersive readout of a superconducting qubit.
  The projected signal ``mu`` is Gaussian around +1 for state 0 and around
  -1 for state 1, with an amplitude-damping bridge that smears the state-1
  density towards +1 when the readout window is a non-negligible fraction
  of T1.
* :class:`NaReadoutModel` -- fluorescence readout of a neutral atom through
  a single-photon counter.  ``mu`` is a photon count; the bright state
  scatters at ``eta * r0 + r_bg`` and the dark state at ``r_bg``, with
  bright->dark and dark->bright transitions allowed once per window.

Every measurement is summarised as a :class:`SoftValue`: the posterior
P(1|mu) under flat priors, quantised to an unsigned 8-bit integer ``q``,
plus the hardened bit ``q >= 128``.  The quantisation grid is chosen so
that the hardened bit coincides exactly with the posterior >= 1/2 rule
(ties classify as 1).
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "POSTERIOR_EPS",
    "ScReadoutParams",
    "NaReadoutParams",
    "SoftValue",
    "SoftShotBatch",
    "ScReadoutModel",
    "NaReadoutModel",
    "sc_pdf",
    "sc_soft_flip_prob",
    "snr_for_target_ps",
    "na_pmf",
    "posterior",
    "quantize",
    "sample_soft",
    "p_soft_of_q",
    "na_params_for_target_ps",
]

# Posteriors are clamped away from {0, 1} so that log-likelihood edge
# weights stay finite.
POSTERIOR_EPS = 1e-12

_BATCH_MAGIC = b"SOFT"
_BATCH_VERSION = 1


class ReadoutError(ValueError):
    """Invalid readout-model parameters or out-of-domain evaluation."""


# ---------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True)
class ScReadoutParams:
    """Dispersive-readout parameters.

    ``snr`` is the dimensionless signal-to-noise ratio of the integrated
    signal, ``tau_m`` the readout window and ``t1`` the amplitude-damping
    time (same units as ``tau_m``).  The characteristic fluctuation time of
    the signal is derived, ``tau_f = tau_m / (2 snr)``.
    """

    snr: float
    tau_m: float = 500e-9
    t1: float = 100e-6

    def __post_init__(self):
        if not (self.snr > 0):
            raise ReadoutError(f"snr must be positive, got {self.snr}")
        if not (self.tau_m > 0):
            raise ReadoutError(f"tau_m must be positive, got {self.tau_m}")
        if not (self.t1 > 0):
            raise ReadoutError(f"t1 must be positive, got {self.t1}")

    @property
    def tau_f(self) -> float:
        return self.tau_m / (2.0 * self.snr)

    @property
    def decay_ratio(self) -> float:
        """tau_m / t1; zero for an infinitely long-lived qubit."""
        return 0.0 if math.isinf(self.t1) else self.tau_m / self.t1

    @classmethod
    def from_fluctuation_time(cls, tau_m: float, tau_f: float, t1: float = 100e-6) -> "ScReadoutParams":
        if not (tau_f > 0):
            raise ReadoutError(f"tau_f must be positive, got {tau_f}")
        return cls(snr=tau_m / (2.0 * tau_f), tau_m=tau_m, t1=t1)


@dataclass(frozen=True)
class NaReadoutParams:
    """Photon-counting readout parameters.

    Rates are per second: ``r0`` bright scattering, ``r_bg`` background,
    ``r_bd`` bright->dark, ``r_db`` dark->bright.  ``eta`` is the detection
    efficiency and ``tau_m`` the exposure window in seconds.  ``mu_max``
    truncates the count distribution; the default keeps the truncated mass
    within 1e-9 of unity.
    """

    eta: float = 1e-3
    r0: float = 1e7
    r_bg: float = 1e3
    r_bd: float = 960.0
    r_db: float = 2.0
    tau_m: float = 100e-6
    mu_max: int | None = None

    def __post_init__(self):
        if not (0 < self.eta <= 1):
            raise ReadoutError(f"eta must be in (0, 1], got {self.eta}")
        for name in ("r0", "r_bg", "r_bd", "r_db"):
            if getattr(self, name) < 0:
                raise ReadoutError(f"{name} must be non-negative")
        if not (self.tau_m > 0):
            raise ReadoutError(f"tau_m must be positive, got {self.tau_m}")
        if self.r_db > 0 and math.isclose(self.eta * self.r0, self.r_db, rel_tol=1e-12):
            raise ReadoutError("singular configuration: eta*r0 == r_db")
        if self.mu_max is None:
            lam = self.lambda_bright
            object.__setattr__(self, "mu_max", int(math.ceil(lam + 12.0 * math.sqrt(lam))) + 10)

    @property
    def lambda_bright(self) -> float:
        return (self.eta * self.r0 + self.r_bg) * self.tau_m

    @property
    def lambda_dark(self) -> float:
        return self.r_bg * self.tau_m


# ---------------------------------------------------------------------------
# soft values


@dataclass(frozen=True)
class SoftValue:
    """Quantised posterior ``q`` (0..255) plus the hardened bit."""

    q: int
    hardened: int

    @property
    def p1(self) -> float:
        """Reconstructed posterior P(1|mu)."""
        return self.q / 255.0

    @property
    def p_soft(self) -> float:
        """Probability that the hardened bit misclassifies the state."""
        return min(self.q, 255 - self.q) / 255.0


def quantize(p1: float) -> SoftValue:
    """Quantise a posterior to 8 bits (round half up); ties harden to 1."""
    if not (0.0 <= p1 <= 1.0):
        raise ReadoutError(f"posterior out of range: {p1}")
    q = int(math.floor(p1 * 255.0 + 0.5))
    return SoftValue(q=q, hardened=int(q >= 128))


def _quantize_array(p1: np.ndarray) -> np.ndarray:
    return np.floor(p1 * 255.0 + 0.5).astype(np.uint8)


def p_soft_of_q(q) -> np.ndarray | float:
    """Soft-flip probability min(q, 255-q)/255 implied by a quantised value."""
    q = np.asarray(q, dtype=np.float64)
    out = np.minimum(q, 255.0 - q) / 255.0
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# superconducting model


def _sc_f0(mu: np.ndarray, snr: float) -> np.ndarray:
    return np.sqrt(snr / (4.0 * math.pi)) * np.exp(-0.25 * snr * (mu - 1.0) ** 2)


def _sc_f1(mu: np.ndarray, snr: float, ratio: float) -> np.ndarray:
    gauss = np.sqrt(snr / (4.0 * math.pi)) * np.exp(-0.25 * snr * (mu + 1.0) ** 2 - ratio)
    if ratio == 0.0:
        return gauss
    a = ratio / (2.0 * math.sqrt(snr))
    b = math.sqrt(snr) / 2.0
    g0 = special.erfc(a + b * (mu - 1.0))
    g1 = special.erfc(a + b * (mu + 1.0))
    bridge = (ratio / 4.0) * (g0 - g1) * np.exp(ratio**2 / (4.0 * snr) + 0.5 * ratio * (mu - 1.0))
    return gauss + bridge


def sc_pdf(mu, state: int, params: ScReadoutParams):
    """Density of the projected signal ``mu`` given the ideal outcome.

    State 0 is a Gaussian centred at +1 with variance 2/SNR.  State 1 is
    the same Gaussian at -1, attenuated by exp(-tau_m/t1), plus the
    amplitude-damping bridge expressed through complementary error
    functions so the evaluation stays finite for |mu| up to ~20.
    """
    mu_arr = np.asarray(mu, dtype=np.float64)
    if state == 0:
        out = _sc_f0(mu_arr, params.snr)
    elif state == 1:
        out = _sc_f1(mu_arr, params.snr, params.decay_ratio)
    else:
        raise ReadoutError(f"state must be 0 or 1, got {state}")
    return float(out) if out.ndim == 0 else out


def sc_soft_flip_prob(params: ScReadoutParams) -> float:
    """Average soft-flip probability of the dispersive model.

    Uses the closed form erfc(sqrt(SNR)/2)/2 when tau_m << t1
    (ratio < 0.05); otherwise integrates the overlap of the two densities.
    """
    if params.decay_ratio < 0.05:
        return 0.5 * special.erfc(math.sqrt(params.snr) / 2.0)
    return ScReadoutModel(params).mean_soft_flip_prob()


def snr_for_target_ps(p_s: float) -> float:
    """Invert erfc(sqrt(SNR)/2)/2 = p_s for the SNR."""
    if not (0.0 < p_s < 0.5):
        raise ReadoutError(f"target soft-flip probability must be in (0, 0.5), got {p_s}")
    return float(4.0 * special.erfcinv(2.0 * p_s) ** 2)


class ScReadoutModel:
    """Dispersive readout model with analytic posteriors and exact q-tables.

    The posterior P(1|mu) is strictly decreasing in mu, so the quantised
    value q is a staircase in mu whose cell boundaries are found by
    bisection once per model.  The per-state distributions over q are then
    exact integrals of the densities over those cells, which gives both a
    fast inverse-CDF sampler and exact per-state misclassification
    probabilities.
    """

    n_outcomes = 256

    def __init__(self, params: ScReadoutParams):
        self.params = params
        self._sigma = math.sqrt(2.0 / params.snr)
        self._q_pmf: np.ndarray | None = None  # (2, 256), lazily built

    # -- densities and posteriors -----------------------------------------

    def pdf(self, mu, state: int):
        return sc_pdf(mu, state, self.params)

    def posterior(self, mu):
        """P(1|mu) with flat priors, clamped to [eps, 1-eps]."""
        return self._posterior_impl(mu, graceful=False)

    def _posterior_impl(self, mu, graceful: bool):
        mu_arr = np.asarray(mu, dtype=np.float64)
        f0 = _sc_f0(mu_arr, self.params.snr)
        f1 = _sc_f1(mu_arr, self.params.snr, self.params.decay_ratio)
        tot = f0 + f1
        dead = tot <= 0.0
        if np.any(dead):
            if not graceful:
                raise ReadoutError("both densities underflow to zero at mu")
            # Far tails underflow both densities in double precision; the
            # side of the decision boundary is unambiguous out there.
            f1 = np.where(dead & (mu_arr < 0.0), 1.0, f1)
            tot = np.where(dead, 1.0, tot)
        out = np.clip(f1 / tot, POSTERIOR_EPS, 1.0 - POSTERIOR_EPS)
        return float(out) if out.ndim == 0 else out

    def crossing_mu(self) -> float:
        """Signal value where the two densities (and posteriors) cross."""
        f = lambda m: self._posterior_impl(m, graceful=True) - 0.5
        return float(optimize.brentq(f, -1.0, 1.0 + 40 * self._sigma, xtol=1e-14))

    # -- exact quantised-outcome tables ------------------------------------

    def _mu_window(self) -> tuple[float, float]:
        lo = -1.0 - 45.0 * self._sigma
        hi = 1.0 + 45.0 * self._sigma
        # The bridge tail can keep the posterior above the lowest
        # quantisation boundary well past the Gaussian window.
        b_lo = 0.5 / 255.0
        while self._posterior_impl(hi, graceful=True) >= b_lo:
            hi *= 2.0
        return lo, hi

    def _thresholds(self) -> np.ndarray:
        """mu_k solving posterior(mu_k) = (k - 0.5)/255 for k = 1..255."""
        lo, hi = self._mu_window()
        bounds = (np.arange(1, 256) - 0.5) / 255.0
        lo_v = np.full(255, lo)
        hi_v = np.full(255, hi)
        # Posterior decreases with mu: bisection per boundary, vectorised.
        for _ in range(200):
            mid = 0.5 * (lo_v + hi_v)
            above = self._posterior_impl(mid, graceful=True) >= bounds
            lo_v = np.where(above, mid, lo_v)
            hi_v = np.where(above, hi_v, mid)
        return 0.5 * (lo_v + hi_v)

    def q_pmf(self, state: int) -> np.ndarray:
        """Exact distribution of the quantised value q for an ideal state."""
        if self._q_pmf is None:
            self._q_pmf = self._build_q_pmf()
        return self._q_pmf[state].copy()

    def _build_q_pmf(self) -> np.ndarray:
        thr = self._thresholds()  # decreasing in k
        lo, hi = self._mu_window()
        # Cell for q=k is (thr[k], thr[k-1]]; q=0 is (thr[0], +inf),
        # q=255 is (-inf, thr[254]].
        edges = np.concatenate([[hi], thr, [lo]])  # 257 decreasing edges
        snr = self.params.snr
        ratio = self.params.decay_ratio
        pmf = np.zeros((2, 256))
        # State 0 is a pure Gaussian: closed-form cell masses.
        z = (edges - 1.0) / (self._sigma * math.sqrt(2.0))
        cdf0 = 0.5 * special.erfc(-z)
        pmf[0] = cdf0[:-1] - cdf0[1:]
        if ratio == 0.0:
            z1 = (edges + 1.0) / (self._sigma * math.sqrt(2.0))
            cdf1 = 0.5 * special.erfc(-z1)
            pmf[1] = cdf1[:-1] - cdf1[1:]
        else:
            for k in range(256):
                a, b = edges[k + 1], edges[k]
                pmf[1, k], _ = integrate.quad(lambda m: _sc_f1(m, snr, ratio), a, b, limit=200)
        pmf = np.clip(pmf, 0.0, None)
        pmf /= pmf.sum(axis=1, keepdims=True)
        return pmf

    def p_soft_given(self, state: int) -> float:
        """Misclassification probability conditioned on the ideal state."""
        pmf = self.q_pmf(state)
        hardened = np.arange(256) >= 128
        return float(pmf[hardened != bool(state)].sum())

    def mean_soft_flip_prob(self) -> float:
        return 0.5 * (self.p_soft_given(0) + self.p_soft_given(1))

    # -- sampling -----------------------------------------------------------

    def sample_mu(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw raw signals mu ~ f^(state) elementwise."""
        states = np.asarray(states)
        mu = rng.normal(0.0, self._sigma, size=states.shape)
        if self.params.decay_ratio == 0.0:
            centre = np.where(states == 1, -1.0, 1.0)
            return mu + centre
        # State 1: decay at time t (exponential, T1) maps to an ideal level
        # 1 - 2 t / tau_m; t >= tau_m means no decay inside the window.
        t = rng.exponential(self.params.t1, size=states.shape)
        frac = np.clip(t / self.params.tau_m, None, 1.0)
        centre1 = 1.0 - 2.0 * frac
        centre = np.where(states == 1, centre1, 1.0)
        return mu + centre


# ---------------------------------------------------------------------------
# neutral-atom model


def _log_poisson_terms(log_rate_t: float, n: int) -> np.ndarray:
    """log( (rate*t)^k / k! ) for k = 0..n-1."""
    k = np.arange(n, dtype=np.float64)
    return k * log_rate_t - special.gammaln(k + 1.0)


def _na_log_cumsums(x: float, n: int) -> np.ndarray:
    """log of cumulative sums S(mu) = sum_{k<=mu} x^k / k! for mu = 0..n-1."""
    k = np.arange(n, dtype=np.float64)
    if x <= 0.0:
        log_terms = np.where(k == 0, 0.0, -np.inf)
    else:
        log_terms = k * math.log(x) - special.gammaln(k + 1.0)
    return np.logaddexp.accumulate(log_terms)


def _na_pmf_table(params: NaReadoutParams, state: int) -> np.ndarray:
    """Tabulate the photon-count pmf for mu = 0..mu_max.

    Everything runs in log space with cumulative log-sum-exp inner sums;
    contributions below exp(-700) vanish naturally in the accumulation.
    """
    t = params.tau_m
    s = params.eta * params.r0  # signal rate of a bright atom
    rbg, rbd, rdb = params.r_bg, params.r_bd, params.r_db
    n = params.mu_max + 1
    mu = np.arange(n, dtype=np.float64)

    def log_pois(rate: float) -> np.ndarray:
        if rate * t == 0:
            return np.where(mu == 0, 0.0, -np.inf)
        return mu * math.log(rate * t) - rate * t - special.gammaln(mu + 1.0)

    if state == 1:
        first = log_pois(s + rbg) - rbd * t
        if rbd == 0.0:
            out = np.exp(first)
        else:
            # Bright atom decaying once during the window.
            base = s + rbd
            pref = math.log(rbd / base) - rbg * t + mu * math.log(s / base)
            c = base / s
            sum1 = _na_log_cumsums(c * rbg * t, n)
            sum2 = _na_log_cumsums(c * (s + rbg) * t, n) - base * t
            bracket = _log_diff_exp(sum1, sum2)
            out = np.exp(first) + np.exp(pref + bracket)
    elif state == 0:
        first = log_pois(rbg) - rdb * t
        if rdb == 0.0:
            out = np.exp(first)
        else:
            base = s - rdb
            if base <= 0:
                raise ReadoutError("singular configuration: eta*r0 <= r_db")
            pref = math.log(rdb / base) - rbg * t + mu * math.log(s / base)
            c = base / s
            sum1 = _na_log_cumsums(c * rbg * t, n) - rdb * t
            sum2 = _na_log_cumsums(c * (s + rbg) * t, n) - s * t
            bracket = _log_diff_exp(sum1, sum2)
            out = np.exp(first) + np.exp(pref + bracket)
    else:
        raise ReadoutError(f"state must be 0 or 1, got {state}")
    return np.clip(out, 0.0, None)


def _log_diff_exp(log_a: np.ndarray, log_b: np.ndarray) -> np.ndarray:
    """log(exp(log_a) - exp(log_b)), clamped at -inf when non-positive."""
    out = np.full_like(log_a, -np.inf)
    gt = log_a > log_b
    delta = np.where(gt, log_b - log_a, 0.0)
    with np.errstate(divide="ignore"):
        out[gt] = log_a[gt] + np.log1p(-np.exp(delta[gt]))
    return out


class NaReadoutModel:
    """Photon-count readout model with tabulated pmfs over 0..mu_max."""

    def __init__(self, params: NaReadoutParams):
        self.params = params
        self._pmf = np.stack([_na_pmf_table(params, 0), _na_pmf_table(params, 1)])
        masses = self._pmf.sum(axis=1)
        if np.any(masses < 1.0 - 1e-9):
            raise ReadoutError(
                f"mu_max={params.mu_max} truncates too much mass: {masses}"
            )
        self._posterior = np.clip(
            self._pmf[1] / (self._pmf[0] + self._pmf[1]),
            POSTERIOR_EPS,
            1.0 - POSTERIOR_EPS,
        )
        self._q_of_count = _quantize_array(self._posterior)
        self._cdf = np.cumsum(self._pmf / masses[:, None], axis=1)

    @property
    def n_outcomes(self) -> int:
        return 256

    def pmf(self, mu, state: int):
        mu_arr = np.asarray(mu)
        if np.any(mu_arr < 0) or np.any(mu_arr > self.params.mu_max):
            raise ReadoutError("photon count outside tabulated range")
        out = self._pmf[state][mu_arr]
        return float(out) if out.ndim == 0 else out

    def posterior(self, mu):
        mu_arr = np.asarray(mu)
        if np.any(mu_arr < 0) or np.any(mu_arr > self.params.mu_max):
            raise ReadoutError("photon count outside tabulated range")
        out = self._posterior[mu_arr]
        return float(out) if out.ndim == 0 else out

    def q_pmf(self, state: int) -> np.ndarray:
        out = np.zeros(256)
        np.add.at(out, self._q_of_count, self._pmf[state])
        return out / out.sum()

    def p_soft_given(self, state: int) -> float:
        hardened = self._q_of_count >= 128
        pmf = self._pmf[state] / self._pmf[state].sum()
        return float(pmf[hardened != bool(state)].sum())

    def mean_soft_flip_prob(self) -> float:
        return 0.5 * (self.p_soft_given(0) + self.p_soft_given(1))

    def sample_mu(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        states = np.asarray(states)
        u = rng.random(states.shape)
        top = self.params.mu_max
        dark = np.minimum(np.searchsorted(self._cdf[0], u), top)
        bright = np.minimum(np.searchsorted(self._cdf[1], u), top)
        return np.where(states == 1, bright, dark).astype(np.int64)


def na_pmf(mu, state: int, params: NaReadoutParams):
    """Probability of observing ``mu`` photons from a bright/dark atom."""
    return NaReadoutModel(params).pmf(mu, state)


def na_params_for_target_ps(
    target: float, base: NaReadoutParams | None = None
) -> NaReadoutParams:
    """Pick readout parameters whose average soft-flip probability hits a target.

    The exposure time is the physical knob: the soft-flip probability falls
    with tau_m until bright->dark transitions dominate, then rises again.
    We solve on the falling branch; if the target lies below the floor of
    that curve we raise the detection efficiency (decade steps) until it is
    reachable.  Raises :class:`ReadoutError` for unreachable targets.
    """
    if not (0.0 < target < 0.5):
        raise ReadoutError(f"target soft-flip probability must be in (0, 0.5), got {target}")
    base = base or NaReadoutParams()

    def ps_at(eta: float, tau: float) -> float:
        p = NaReadoutParams(eta=eta, r0=base.r0, r_bg=base.r_bg, r_bd=base.r_bd, r_db=base.r_db, tau_m=tau)
        return NaReadoutModel(p).mean_soft_flip_prob()

    eta = base.eta
    for _attempt in range(6):
        taus = list(np.geomspace(base.tau_m / 256.0, 4.0 * base.tau_m, 25))
        vals = [ps_at(eta, t) for t in taus]
        # Exposures too short to collect signal sit near ps = 0.5; extend
        # the grid down until the left end is above the target.
        extend = 0
        while vals[0] <= target and extend < 8:
            taus.insert(0, taus[0] / 4.0)
            vals.insert(0, ps_at(eta, taus[0]))
            extend += 1
        for j in range(1, len(taus)):
            if vals[j - 1] > target >= vals[j]:
                tau = optimize.brentq(
                    lambda t: ps_at(eta, t) - target, taus[j - 1], taus[j], rtol=1e-9
                )
                return NaReadoutParams(
                    eta=eta, r0=base.r0, r_bg=base.r_bg, r_bd=base.r_bd,
                    r_db=base.r_db, tau_m=float(tau),
                )
        if eta >= 1.0:
            break
        eta = min(1.0, eta * 10.0)
    raise ReadoutError(f"soft-flip target {target} unreachable with rates {base}")


# ---------------------------------------------------------------------------
# generic operations


def posterior(mu, model):
    """P(1|mu) for either platform model (flat priors)."""
    return model.posterior(mu)


@dataclass
class SoftShotBatch:
    """Per-shot quantised soft values plus hidden ideal outcomes.

    ``soft`` is a (shots, n_meas) uint8 matrix of q values; ``ideal`` the
    matching matrix of pre-classification bits.  The ideal bits exist for
    diagnostics only and must never reach a decoder.
    """

    soft: np.ndarray
    ideal: np.ndarray

    def __post_init__(self):
        self.soft = np.ascontiguousarray(self.soft, dtype=np.uint8)
        self.ideal = np.ascontiguousarray(self.ideal, dtype=np.uint8)
        if self.soft.shape != self.ideal.shape or self.soft.ndim != 2:
            raise ReadoutError("soft and ideal matrices must share a 2-D shape")

    @property
    def shots(self) -> int:
        return self.soft.shape[0]

    @property
    def n_meas(self) -> int:
        return self.soft.shape[1]

    @property
    def hardened(self) -> np.ndarray:
        return (self.soft >= 128).astype(np.uint8)

    # -- binary round-trip: little-endian header, then per shot the raw q
    # bytes followed by the ideal bits packed LSB-first.

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(_BATCH_MAGIC)
        buf.write(struct.pack("<HII", _BATCH_VERSION, self.shots, self.n_meas))
        packed = np.packbits(self.ideal, axis=1, bitorder="little")
        for s in range(self.shots):
            buf.write(self.soft[s].tobytes())
            buf.write(packed[s].tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SoftShotBatch":
        if raw[:4] != _BATCH_MAGIC:
            raise ReadoutError("not a soft batch stream (bad magic)")
        version, shots, n_meas = struct.unpack("<HII", raw[4:14])
        if version != _BATCH_VERSION:
            raise ReadoutError(f"unsupported soft batch version {version}")
        n_packed = (n_meas + 7) // 8
        stride = n_meas + n_packed
        body = np.frombuffer(raw, dtype=np.uint8, offset=14)
        if body.size != shots * stride:
            raise ReadoutError("truncated soft batch stream")
        body = body.reshape(shots, stride)
        soft = body[:, :n_meas]
        ideal = np.unpackbits(body[:, n_meas:], axis=1, bitorder="little")[:, :n_meas]
        return cls(soft=soft.copy(), ideal=ideal)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SoftShotBatch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def sample_soft(ideal: np.ndarray, model, seed: int) -> SoftShotBatch:
    """Draw signals mu ~ f^(ideal bit), quantise posteriors, batch them up.

    Deterministic for a fixed seed.
    """
    ideal = np.atleast_2d(np.asarray(ideal, dtype=np.uint8))
    rng = np.random.Generator(np.random.Philox(seed))
    mu = model.sample_mu(ideal, rng)
    q = _quantize_array(model.posterior(mu))
    return SoftShotBatch(soft=q, ideal=ideal)


def _build_alias(pmf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias tables (stay probability, alias index) for a 256-bin pmf."""
    n = pmf.size
    scaled = pmf * n / pmf.sum()
    prob = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    scaled = scaled.copy()
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = scaled[l] - (1.0 - scaled[s])
        (small if scaled[l] < 1.0 else large).append(l)
    return prob, alias


class QuantizedSampler:
    """Alias-method sampler over the 256 quantised outcomes of a model.

    Sampling q directly from the exact per-state q distribution is
    equivalent in law to drawing mu and quantising the posterior, but costs
    a single uniform draw plus O(1) table lookups per measurement.
    """

    def __init__(self, model):
        self.model = model
        pmf0 = model.q_pmf(0)
        pmf1 = model.q_pmf(1)
        self.pmf = np.stack([pmf0, pmf1])
        p0, a0 = _build_alias(pmf0)
        p1, a1 = _build_alias(pmf1)
        self._stay = np.stack([p0, p1])
        self._alias = np.stack([a0, a1]).astype(np.uint8)
        self.p_soft_given = (model.p_soft_given(0), model.p_soft_given(1))
        self.mean_soft_flip = model.mean_soft_flip_prob()

    def sample_q(self, ideal: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ideal = np.asarray(ideal)
        scaled = rng.random(ideal.shape) * 256.0
        bucket = np.minimum(scaled.astype(np.int16), 255)
        frac = scaled - bucket
        stay = self._stay[ideal, bucket]
        aliased = self._alias[ideal, bucket]
        return np.where(frac < stay, bucket, aliased).astype(np.uint8)
