"""Model factories: a fractional Laplacian on the circle and a discrete chain.

Circle model
    ``|p|^alpha + epsilon v(theta, t)`` on ``L^2`` of the circle.  Modes
    ``e^{i n theta}`` with ``|n| = n`` share the eigenvalue ``n^alpha``; the
    concrete basis is ordered ``[0, +1, -1, +2, -2, ...]`` so that each pair
    forms one block.  Multiplication by ``e^{i j theta}`` shifts modes by
    ``j``, hence the perturbation matrix is exact.

Discrete chain
    ``-Delta + lambda a(t) V`` on the half-line with ``V(n) = n^alpha``.
    Dividing by ``lambda a(t)`` and changing time to ``s = b(t)`` with
    ``b' = lambda a`` gives ``V - phi(s) Delta``, periodic in ``s`` with
    period ``lambda kappa``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import PositivityViolated, ValidationError
from .operator_classes import BlockOperator, ClassParams
from .spectral_basis import SpectralBasis
from .time_periodic import DEFAULT_GRID, TimePeriodicOperator, family_class_norm

POSITIVITY_GRID = 1024
PHI_MAX_CUTOFF = 64
PHI_RESIDUAL = 1e-10


def _real_coefficients(coeffs, name):
    """Check ``c_{-key} = conj(c_key)`` for a real-valued Fourier series."""
    for key, val in coeffs.items():
        neg = tuple(-x for x in key) if isinstance(key, tuple) else -key
        if abs(complex(coeffs.get(neg, 0.0)) - complex(val).conjugate()) > 1e-14:
            raise ValidationError(f"{name} must be real: coefficient {neg} is not the "
                                  f"conjugate of {key}")


@dataclass(frozen=True)
class HowlandModel:
    """Parameters of the circle model.

    ``potential`` maps ``(j, k)`` to the coefficient of
    ``e^{i j theta} e^{i k omega t}``.  ``k_smooth`` is the spatial
    smoothness index the decay estimate is compared against; for
    band-limited potentials every index applies.
    """

    alpha: float
    N: int
    epsilon: float
    potential: dict = field(default_factory=dict)
    k_smooth: int = 6
    shift: float = 1.0
    period: float = 2 * math.pi
    zero_average: bool = True

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError("N must be a positive integer")
        if self.shift < 0:
            raise ValidationError("shift must be >= 0")
        if self.period <= 0:
            raise ValidationError("period must be positive")
        if self.k_smooth < 1:
            raise ValidationError("k_smooth must be >= 1")
        pot = {(int(j), int(k)): complex(v) for (j, k), v in dict(self.potential).items()}
        _real_coefficients(pot, "potential")
        if self.zero_average and any(abs(v) > 0 for (j, k), v in pot.items() if k == 0):
            raise ValidationError("potential must have zero time average")
        object.__setattr__(self, "potential", pot)

    @property
    def max_degree(self):
        return max((abs(j) for j, _ in self.potential), default=0)


def howland_modes(N):
    """Fourier mode of each concrete basis vector: ``[0, 1, -1, 2, -2, ...]``."""
    modes = np.zeros(2 * N + 1, dtype=int)
    modes[1::2] = np.arange(1, N + 1)
    modes[2::2] = -np.arange(1, N + 1)
    return modes


def howland_basis(alpha, N, shift=1.0, strict=True):
    """Blocks ``n = 0..N`` (labels ``1..N+1``) with eigenvalues ``n^alpha + shift``."""
    if shift == 0 and strict:
        raise ValidationError("shift = 0 gives a zero eigenvalue; use shift > 0 "
                              "or permissive mode")
    n = np.arange(N + 1, dtype=float)
    mult = np.full(N + 1, 2, dtype=int)
    mult[0] = 1
    return SpectralBasis(n ** alpha + shift, mult, alpha, require_positive=shift > 0)


def multiplication_matrix(modes, coeff_of_shift):
    """``M[a, b] = c(modes[a] - modes[b])`` for a function with coefficients ``c``."""
    diff = modes[:, None] - modes[None, :]
    M = np.zeros(diff.shape, dtype=complex)
    for j, c in coeff_of_shift.items():
        M[diff == j] = c
    return M


def spatial_coefficients(potential):
    """Group ``{(j, k): c}`` by time harmonic: ``{k: {j: c}}``."""
    out = {}
    for (j, k), c in potential.items():
        out.setdefault(k, {})[j] = c
    return out


def build_howland(model, strict=True):
    """Basis and perturbation ``epsilon v`` of the circle model.

    Returns
    -------
    basis : SpectralBasis
    V : TimePeriodicOperator
        Hermitian family with period ``model.period``.
    """
    basis = howland_basis(model.alpha, model.N, model.shift, strict)
    modes = howland_modes(model.N)
    by_k = spatial_coefficients(model.potential)
    harmonics = {k: model.epsilon * multiplication_matrix(modes, cs)
                 for k, cs in by_k.items()}
    if not harmonics:
        harmonics = {0: np.zeros((basis.dim, basis.dim))}
    V = TimePeriodicOperator.from_harmonics(
        basis, model.period, harmonics, hermitian_family=True,
        meta={"model": "howland", "shift": model.shift})
    return basis, V


def potential_derivative_sup(potential, order, period, n_theta=1024, n_t=DEFAULT_GRID):
    """``max |d^order v / d theta^order|`` over a dense ``(theta, t)`` grid."""
    theta = 2 * math.pi * np.arange(n_theta) / n_theta
    ts = period * np.arange(n_t) / n_t
    omega = 2 * math.pi / period
    vals = np.zeros((n_t, n_theta), dtype=complex)
    for (j, k), c in potential.items():
        vals += ((1j * j) ** order * c) * np.exp(1j * k * omega * ts)[:, None] \
            * np.exp(1j * j * theta)[None, :]
    return float(np.max(np.abs(vals.real), initial=0.0))


def verify_ck_decay(model, n_grid=DEFAULT_GRID):
    """Block decay of ``v`` against the integration-by-parts estimate.

    Compares ``sup_t ||v(t)||_{k,0}`` with ``2 sqrt(2 pi) sup |d^k v / d theta^k|``.
    """
    unit = HowlandModel(model.alpha, model.N, 1.0, model.potential, model.k_smooth,
                        model.shift, model.period, model.zero_average)
    basis, v = build_howland(unit, strict=False)
    k = model.k_smooth
    measured = family_class_norm(v, ClassParams.weights_only(k, 0.0), n_grid)
    bound = 2 * math.sqrt(2 * math.pi) * potential_derivative_sup(
        model.potential, k, model.period, n_t=n_grid)
    banded = model.max_degree
    return {"k": k, "measured": measured, "bound": bound,
            "pass": "pass" if measured <= bound * (1 + 1e-12) else "fail",
            "band_width": banded}


# discrete chain -----------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteModel:
    """Parameters of the driven chain ``-Delta + lambda a(t) n^alpha``.

    ``a_coeffs`` maps a time harmonic ``k`` to the coefficient of
    ``e^{i k omega t}`` in ``a``; ``a`` must be real and positive.
    """

    alpha: float
    N: int
    lam: float
    a_coeffs: dict
    T: float = 2 * math.pi

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError("N must be an integer >= 2")
        if not self.lam > 0:
            raise ValidationError("lambda must be positive")
        if not self.T > 0:
            raise ValidationError("period must be positive")
        a = {int(k): complex(v) for k, v in dict(self.a_coeffs).items()}
        _real_coefficients(a, "a")
        object.__setattr__(self, "a_coeffs", a)
        t = self.T * np.arange(POSITIVITY_GRID) / POSITIVITY_GRID
        lo = float(np.min(self.a(t)))
        if not lo > 0:
            raise PositivityViolated(f"a(t) reaches {lo:.3e} <= 0")

    @property
    def omega(self):
        return 2 * math.pi / self.T

    def a(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for k, c in self.a_coeffs.items():
            out += c * np.exp(1j * k * self.omega * t)
        return out.real

    @property
    def kappa(self):
        """``int_0^T a``."""
        return float(self.a_coeffs.get(0, 0).real) * self.T


class TimeReparam:
    """Monotone change of time ``s = b(t) = lambda int_0^t a`` and its inverse."""

    def __init__(self, model):
        self.model = model
        self.lam = model.lam
        self.kappa = model.kappa
        self.s_period = model.lam * model.kappa

    def b(self, t):
        m = self.model
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, m.a_coeffs.get(0, 0).real) * t
        for k, c in m.a_coeffs.items():
            if k:
                out = out + (c * np.expm1(1j * k * m.omega * t) / (1j * k * m.omega)).real
        return self.lam * out

    def b_inv(self, s, rtol=1e-15):
        """Inverse of :meth:`b` by vectorized bisection within one period."""
        s = np.asarray(s, dtype=float)
        n = np.floor(s / self.s_period)
        rem = s - n * self.s_period
        lo = np.zeros(s.shape)
        hi = np.full(s.shape, self.model.T)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.b(mid) < rem
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= rtol * self.model.T):
                break
        return 0.5 * (lo + hi) + n * self.model.T


def _phi_series(reparam, max_cutoff=PHI_MAX_CUTOFF, target=PHI_RESIDUAL, n_samples=1024):
    """Fourier coefficients of ``phi(s) = 1 / (lambda a(b^{-1}(s)))``."""
    S = reparam.s_period
    m = reparam.model
    exact = lambda s: 1.0 / (m.lam * m.a(reparam.b_inv(s)))
    s = S * np.arange(n_samples) / n_samples
    spec = np.fft.fft(exact(s)) / n_samples
    check = S * (np.arange(n_samples) + 0.5) / n_samples
    ref = exact(check)
    omega = 2 * math.pi / S
    for cutoff in range(0, max_cutoff + 1):
        ks = np.arange(-cutoff, cutoff + 1)
        coef = spec[ks % n_samples]
        approx = (coef[None, :] * np.exp(1j * omega * check[:, None] * ks[None, :])).sum(1).real
        resid = float(np.max(np.abs(approx - ref)))
        if resid < target:
            break
    return dict(zip(ks.tolist(), coef)), resid


def laplacian(N):
    """Nearest-neighbour hopping on ``1..N``: ones at ``|m - n| = 1``."""
    return np.eye(N, k=1) + np.eye(N, k=-1)


def build_discrete(model):
    """Basis ``E_n = n^alpha``, perturbation ``-phi(s) Delta`` and the time map.

    The perturbation is a trigonometric polynomial of period
    ``lambda kappa``; its truncation residual is in ``V.meta``.
    """
    n = np.arange(1, model.N + 1, dtype=float)
    basis = SpectralBasis(n ** model.alpha, None, model.alpha)
    rep = TimeReparam(model)
    coeffs, resid = _phi_series(rep)
    D = laplacian(model.N)
    V = TimePeriodicOperator.from_harmonics(
        basis, rep.s_period, {k: -c * D for k, c in coeffs.items()}, hermitian_family=True,
        meta={"model": "discrete", "phi_cutoff": max(coeffs), "phi_residual": resid})
    return basis, V, rep
