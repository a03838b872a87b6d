"""Long-time propagation, energy traces and growth-exponent estimates.

The propagator over one period is assembled once from midpoint
exponentials ``exp(-i h (H + V(t_j + h/2)))``; afterwards the state is
advanced period by period (stroboscopically) with a single matrix-vector
product, which keeps ``10^4`` periods cheap even at dimension ``~10^3``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np
from scipy import stats

from .checks import BoundCheck
from .errors import BoundVacuous, DegenerateTrace, StepUnstable, ValidationError
from .operator_classes import BlockOperator, ClassParams, class_norm
from .time_periodic import DEFAULT_GRID, family_operator_norm, time_derivative

DEFAULT_STEPS = 64
DRIFT_LIMIT = 1e-6
MIN_TRACE = 100


@dataclass
class EnergyTrace:
    """``<H>`` sampled at ``t = (k + phase) T``, ``k = 0..n_periods``.

    ``times`` are in units of the driving period.
    """

    times: np.ndarray
    values: np.ndarray
    norm_drift: np.ndarray
    psi_norm_drift: float
    unitarity_drift: float
    period: float
    config_ref: dict = field(default_factory=dict)

    def to_csv(self):
        lines = ["t,energy,norm_drift"]
        lines += [f"{t!r},{e!r},{d!r}" for t, e, d in
                  zip(self.times.tolist(), self.values.tolist(), self.norm_drift.tolist())]
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"n_samples": int(self.times.size), "period": self.period,
                "psi_norm_drift": self.psi_norm_drift,
                "unitarity_drift": self.unitarity_drift,
                "final_energy": float(self.values[-1]),
                "config": self.config_ref}


@dataclass(frozen=True)
class ExponentFit:
    sigma_fit: float
    ci_halfwidth: float
    window: tuple
    method: str
    n_points: int

    def to_dict(self):
        return {"sigma_fit": self.sigma_fit, "ci": self.ci_halfwidth,
                "window": list(self.window), "method": self.method,
                "n_points": self.n_points}


# initial states ----------------------------------------------------------------

def initial_state(basis, kind="ground", center=1.0, width=1.0, vector=None, seed=0):
    """Normalized initial vector.

    ``kind="ground"`` puts all weight on the first basis vector,
    ``"gaussian"`` spreads Gaussian weights ``exp(-(n - center)^2 / (4 width^2))``
    over blocks with seeded random phases, ``"vector"`` normalizes ``vector``.
    """
    if kind == "ground":
        psi = np.zeros(basis.dim, dtype=complex)
        psi[0] = 1.0
    elif kind == "gaussian":
        if width <= 0:
            raise ValidationError("width must be positive")
        n = basis.block_of + 1.0
        rng = np.random.default_rng(seed)
        phases = np.exp(2j * math.pi * rng.random(basis.dim))
        psi = np.exp(-((n - center) ** 2) / (4 * width ** 2)) * phases
    elif kind == "vector":
        psi = np.asarray(vector, dtype=complex).ravel()
        if psi.size != basis.dim:
            raise ValidationError(f"vector must have length {basis.dim}")
    else:
        raise ValidationError(f"unknown initial state kind {kind!r}")
    nrm = np.linalg.norm(psi)
    if not nrm > 0:
        raise ValidationError("initial state must be non-zero")
    return psi / nrm


# propagation ----------------------------------------------------------------------

def substep_unitaries(basis, V, steps_per_period=DEFAULT_STEPS):
    """Midpoint exponentials of ``H + V`` for one period, each diagonalized once."""
    if steps_per_period < 1:
        raise ValidationError("steps_per_period must be >= 1")
    h = V.period / steps_per_period
    E = np.diag(basis.energies)
    out = []
    for j in range(steps_per_period):
        Hm = E + V.evaluate_matrix((j + 0.5) * h)
        lam, Q = np.linalg.eigh(0.5 * (Hm + Hm.conj().T))
        out.append((Q * np.exp(-1j * h * lam)) @ Q.conj().T)
    return out


def floquet_operator(basis, V, steps_per_period=DEFAULT_STEPS, unitaries=None):
    """Product of the substep unitaries over one period, latest step on the left."""
    us = unitaries or substep_unitaries(basis, V, steps_per_period)
    Phi = np.eye(basis.dim, dtype=complex)
    for U in us:
        Phi = U @ Phi
    return Phi


def propagate(basis, V, psi0, n_periods, steps_per_period=DEFAULT_STEPS, sample_phase=0,
              config_ref=None):
    """Stroboscopic energy trace of ``H + V(t)``.

    Parameters
    ----------
    basis : SpectralBasis
    V : TimePeriodicOperator
    psi0 : ndarray
        Normalized initial vector.
    n_periods : int
    steps_per_period : int
    sample_phase : int
        Record at ``t = k T + sample_phase h`` instead of ``k T``, with
        ``h = T / steps_per_period``; ``0 <= sample_phase < steps_per_period``.

    Raises
    ------
    StepUnstable
        If the norm of the state drifts by more than ``1e-6``.
    """
    psi = np.asarray(psi0, dtype=complex).ravel()
    if psi.size != basis.dim:
        raise ValidationError(f"psi0 must have length {basis.dim}")
    if abs(np.linalg.norm(psi) - 1) > 1e-12:
        raise ValidationError("psi0 must be normalized")
    if int(n_periods) != n_periods or n_periods < 1:
        raise ValidationError("n_periods must be a positive integer")
    if not 0 <= sample_phase < steps_per_period:
        raise ValidationError("sample_phase must lie in [0, steps_per_period)")
    us = substep_unitaries(basis, V, steps_per_period)
    Phi = floquet_operator(basis, V, unitaries=us)
    unit = float(np.linalg.norm(Phi.conj().T @ Phi - np.eye(basis.dim), 2))
    offset = np.eye(basis.dim, dtype=complex)
    for U in us[:sample_phase]:
        offset = U @ offset
    E = basis.energies
    n = int(n_periods)
    values = np.empty(n + 1)
    drift = np.empty(n + 1)
    for k in range(n + 1):
        phi = offset @ psi if sample_phase else psi
        w = np.abs(phi) ** 2
        values[k] = float(np.dot(E, w))
        drift[k] = abs(math.sqrt(float(w.sum())) - 1.0)
        if drift[k] > DRIFT_LIMIT:
            raise StepUnstable(k, drift[k])
        if k < n:
            psi = Phi @ psi
    times = np.arange(n + 1) + sample_phase / steps_per_period
    return EnergyTrace(times, values, drift, float(drift.max()), unit, V.period,
                       dict(config_ref or {}))


# trivial bound --------------------------------------------------------------------

@dataclass(frozen=True)
class TrivialBound:
    """``e0 + slope * t`` for physical time ``t``; ``slack = sup ||V||``."""

    e0: float
    slope: float
    slack: float
    period: float

    def __call__(self, t):
        return self.e0 + self.slope * np.asarray(t, dtype=float)

    def in_periods(self, k):
        return self(np.asarray(k, dtype=float) * self.period)

    def to_dict(self):
        return {"e0": self.e0, "slope": self.slope, "slack": self.slack}


def trivial_bound(basis, V, psi0, n_grid=DEFAULT_GRID):
    """Linear growth bound that ignores all spectral structure.

    ``|<psi, H(0) psi>| + t sup_s ||V'(s)|| ||psi||^2``, where ``H(0) = H + V(0)``.
    Comparisons against ``<H>`` need the extra ``sup ||V||`` kept in ``slack``.
    """
    psi = np.asarray(psi0, dtype=complex)
    H0 = np.diag(basis.energies) + V.evaluate_matrix(0.0)
    nrm2 = float(np.vdot(psi, psi).real)
    e0 = abs(complex(np.vdot(psi, H0 @ psi)))
    slope = family_operator_norm(time_derivative(V), n_grid) * nrm2
    return TrivialBound(e0, slope, family_operator_norm(V, n_grid), V.period)


def trivial_bound_check(trace, bound):
    """``values(t) <= bound(t) + sup ||V||`` over the whole trace."""
    excess = trace.values - bound.in_periods(trace.times) - bound.slack
    return BoundCheck("trivial_bound", float(excess.max()), 0.0, slack=0.0)


# fitting --------------------------------------------------------------------------

def _window(times, window_fraction):
    if not 0 < window_fraction <= 1:
        raise ValidationError("window_fraction must lie in (0, 1]")
    t = np.asarray(times, dtype=float)
    t_hi = float(t.max())
    t_lo = t_hi - window_fraction * (t_hi - float(t.min()))
    return (t >= t_lo) & (t > 0), (t_lo, t_hi)


def fit_exponent(trace, window_fraction=0.9, method="envelope_lsq", min_samples=MIN_TRACE):
    """Growth exponent of ``<H>`` from a log-log least-squares line.

    Parameters
    ----------
    trace : EnergyTrace or tuple of arrays
        ``(times, values)`` is accepted for synthetic data.
    window_fraction : float
        Fit the last fraction of the time range; ``0.9`` on ``[0, 10^4]``
        is the last decade.
    method : {"envelope_lsq", "tail_lsq"}
        ``envelope_lsq`` replaces the values by their running maxima
        first, since a growth bound constrains an envelope.

    Returns
    -------
    ExponentFit
        The half-width is ``1.96`` standard errors of the slope.
    """
    times, values = (trace.times, trace.values) if isinstance(trace, EnergyTrace) else trace
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.size < min_samples:
        raise DegenerateTrace(f"need at least {min_samples} samples, got {t.size}")
    if method == "envelope_lsq":
        v = np.maximum.accumulate(v)
    elif method != "tail_lsq":
        raise ValidationError(f"unknown fit method {method!r}")
    mask, window = _window(t, window_fraction)
    tw, vw = t[mask], v[mask]
    if tw.size < 3:
        raise DegenerateTrace("fewer than three samples in the fit window")
    if np.any(vw <= 0):
        raise DegenerateTrace("log-log fit needs positive values")
    if np.all(vw == vw[0]):
        return ExponentFit(0.0, 0.0, window, method, int(tw.size))
    res = stats.linregress(np.log(tw), np.log(vw))
    return ExponentFit(float(res.slope), float(1.96 * res.stderr), window, method,
                       int(tw.size))


def linear_slope(trace, window_fraction=0.9):
    """Slope of ``<H>`` per unit physical time over the fit window."""
    mask, _ = _window(trace.times, window_fraction)
    res = stats.linregress(trace.times[mask] * trace.period, trace.values[mask])
    return float(res.slope)


def tail_change(trace_a, trace_b, fraction=0.1):
    """Relative change of the last ``fraction`` of two traces on the same times."""
    n = trace_a.values.size
    if trace_b.values.size != n:
        raise ValidationError("traces must have the same length")
    k = max(1, int(round(fraction * n)))
    a, b = trace_a.values[-k:], trace_b.values[-k:]
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))


# theory ----------------------------------------------------------------------------

def theoretical_sigma(alpha, p):
    """``2 alpha / (2 ceil(p - 1) (1 - alpha) - 1)``.

    Exact for :class:`fractions.Fraction` inputs.

    Raises
    ------
    BoundVacuous
        If ``ceil(p - 1) <= 1 / (2 (1 - alpha))``.
    """
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    L = math.ceil(p - 1)
    den = 2 * L * (1 - alpha) - 1
    if den <= 0:
        raise BoundVacuous(f"ceil(p - 1) = {L} does not exceed 1/(2(1 - alpha))")
    return 2 * alpha / den


def howland_sigma(alpha, k):
    """Exponent for the circle model with a ``C^k`` potential."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    den = 2 * (k - 2) * (1 - alpha) - 1
    if den <= 0:
        raise BoundVacuous(f"k = {k} is too small for alpha = {alpha}")
    return 2 * alpha / den


def as_fraction(x):
    """Exact rational for simple decimal or ``"a/b"`` inputs."""
    return Fraction(x) if isinstance(x, str) else Fraction(x).limit_denominator(10 ** 6)


# off-diagonal decay ------------------------------------------------------------------

def offdiag_row_norms(B, basis=None):
    """``||P_n B (1 - P_n) H^{-1/2}||`` for every block ``n``."""
    basis = basis or B.basis
    if basis.eigenvalues[0] <= 0:
        raise ValidationError("H must be positive")
    M = np.where(basis.same_block, 0, B.matrix) / np.sqrt(basis.energies)[None, :]
    out = np.empty(basis.N)
    for n in range(1, basis.N + 1):
        rows = M[basis.block_slice(n)]
        out[n - 1] = float(np.linalg.norm(rows, 2)) if rows.size else 0.0
    return out


def check_offdiag_decay(B, basis, p, delta, fit_range=(0.125, 0.75)):
    """Measured decay of the row norms against ``n^-(2 delta + alpha/2)``.

    The exponent is fitted on blocks ``fit_range[0] N <= n <= fit_range[1] N``,
    away from both the first few blocks and the truncation edge.  The
    reported constant is the smallest ``c`` with
    ``row(n) <= c ||B||_{p,delta} n^-(2 delta + alpha/2)`` for all ``n``.
    """
    if isinstance(B, BlockOperator):
        rows = offdiag_row_norms(B, basis)
        norm = class_norm(B, ClassParams(p, delta))
    else:
        grid = B.grid(DEFAULT_GRID) if B.K else [0.0]
        ops = [B.evaluate(t) for t in grid]
        rows = np.max([offdiag_row_norms(o, basis) for o in ops], axis=0)
        norm = max(class_norm(o, ClassParams(p, delta)) for o in ops)
    n = np.arange(1, basis.N + 1, dtype=float)
    target = 2 * delta + basis.alpha / 2
    lo, hi = max(2, int(fit_range[0] * basis.N)), max(3, int(fit_range[1] * basis.N))
    sel = (n >= lo) & (n <= hi) & (rows > 0)
    if sel.sum() >= 3:
        exponent = float(-stats.linregress(np.log(n[sel]), np.log(rows[sel])).slope)
    else:
        exponent = math.inf
    c = float(np.max(rows * n ** target) / norm) if norm > 0 else 0.0
    mu = 2 * delta
    return {"row_norms": rows.tolist(), "fitted_exponent": exponent,
            "target_exponent": target, "constant": c, "class_norm": norm,
            "mu": mu, "mu_gt_half": mu > 0.5, "nontrivial": mu > 0.5 + basis.alpha,
            "fit_blocks": [lo, hi]}
