"""Periodic operator families stored as trigonometric polynomials in time.

``Z(t) = sum_{k=-K}^{K} Z_k exp(i k omega t)`` with ``omega = 2 pi / T``.
Averages, primitives and derivatives act on the harmonics directly, so the
generator ``-i d/dt`` never has to be assembled.
"""

import math

import numpy as np
from scipy import optimize

from .errors import ValidationError
from .operator_classes import BlockOperator, class_norm

DEFAULT_GRID = 64


class TimePeriodicOperator:
    """Trigonometric polynomial in ``t`` with block-operator coefficients.

    Parameters
    ----------
    basis : SpectralBasis
    period : float
    coefficients : array_like, shape (2K+1, dim, dim)
        ``coefficients[K + k]`` is the harmonic ``Z_k``.
    hermitian_family : bool, optional
        Inferred from ``Z_{-k} = Z_k^dagger`` when omitted.
    meta : dict, optional
        Free-form provenance (for instance a truncation residual).
    """

    HERMITIAN_ATOL = 1e-12

    def __init__(self, basis, period, coefficients, hermitian_family=None, meta=None):
        period = float(period)
        if not period > 0 or not math.isfinite(period):
            raise ValidationError(f"period must be positive, got {period}")
        c = np.array(coefficients, dtype=complex)
        if c.ndim != 3 or c.shape[0] % 2 != 1 or c.shape[1:] != (basis.dim, basis.dim):
            raise ValidationError(
                f"coefficients must have shape (2K+1, {basis.dim}, {basis.dim})")
        c.setflags(write=False)
        self.basis = basis
        self.period = period
        self.coefficients = c
        defect = self.hermitian_defect()
        herm = defect <= self.HERMITIAN_ATOL * max(1.0, float(np.max(np.abs(c), initial=0)))
        if hermitian_family and not herm:
            raise ValidationError(f"family is not Hermitian (defect {defect:.2e})")
        self.hermitian_family = herm if hermitian_family is None else bool(hermitian_family)
        self.meta = dict(meta or {})

    # construction ---------------------------------------------------------

    @classmethod
    def from_harmonics(cls, basis, period, harmonics, **kw):
        """Build from ``{k: matrix or BlockOperator}``."""
        K = max((abs(int(k)) for k in harmonics), default=0)
        c = np.zeros((2 * K + 1, basis.dim, basis.dim), dtype=complex)
        for k, op in harmonics.items():
            c[K + int(k)] += op.matrix if isinstance(op, BlockOperator) else op
        return cls(basis, period, c, **kw)

    @classmethod
    def constant(cls, op, period):
        return cls(op.basis, period, op.matrix[None], hermitian_family=op.hermitian or None)

    @classmethod
    def cosine(cls, op, period, k=1):
        """``op * cos(k omega t)``."""
        return cls.from_harmonics(op.basis, period, {k: 0.5 * op.matrix, -k: 0.5 * op.matrix})

    @classmethod
    def sine(cls, op, period, k=1):
        """``op * sin(k omega t)``."""
        return cls.from_harmonics(op.basis, period,
                                  {k: -0.5j * op.matrix, -k: 0.5j * op.matrix})

    @classmethod
    def from_samples(cls, basis, period, samples, cutoff, hermitian=True):
        """Fourier analysis of equispaced samples ``Z(j T / n)``, ``j < n``.

        Harmonics above ``cutoff`` are dropped; the share of the sampled
        energy they carried is stored in ``meta["discarded_fraction"]``.
        """
        s = np.asarray(samples, dtype=complex)
        n = s.shape[0]
        if 2 * cutoff + 1 > n:
            raise ValidationError("grid too coarse for the requested cutoff")
        spec = np.fft.fft(s, axis=0) / n
        ks = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        total = float(np.sum(np.abs(spec) ** 2))
        c = np.zeros((2 * cutoff + 1, basis.dim, basis.dim), dtype=complex)
        for pos, k in enumerate(ks):
            if abs(k) <= cutoff:
                c[cutoff + k] = spec[pos]
        if hermitian:
            c = 0.5 * (c + np.conj(np.transpose(c[::-1], (0, 2, 1))))
        kept = float(np.sum(np.abs(c) ** 2))
        frac = max(0.0, 1.0 - kept / total) if total > 0 else 0.0
        return cls(basis, period, c, hermitian_family=hermitian or None,
                   meta={"harmonic_cutoff": int(cutoff), "discarded_fraction": frac})

    # properties -----------------------------------------------------------

    @property
    def K(self):
        return (self.coefficients.shape[0] - 1) // 2

    @property
    def omega(self):
        return 2.0 * math.pi / self.period

    @property
    def harmonics(self):
        return np.arange(-self.K, self.K + 1)

    def hermitian_defect(self):
        c = self.coefficients
        mirror = np.conj(np.transpose(c[::-1], (0, 2, 1)))
        return float(np.max(np.abs(c - mirror), initial=0.0))

    def coefficient(self, k):
        if abs(k) > self.K:
            return BlockOperator.zeros(self.basis)
        return BlockOperator(self.basis, self.coefficients[self.K + k])

    def is_zero(self):
        return not np.any(self.coefficients)

    def grid(self, n=DEFAULT_GRID):
        return self.period * np.arange(n) / n

    def _new(self, coefficients, meta=None):
        return TimePeriodicOperator(self.basis, self.period, coefficients,
                                    hermitian_family=None,
                                    meta=self.meta if meta is None else meta)

    # evaluation -----------------------------------------------------------

    def evaluate_matrix(self, t):
        t = math.fmod(float(t), self.period)
        phase = np.exp(1j * self.harmonics * self.omega * t)
        M = np.tensordot(phase, self.coefficients, axes=1)
        if self.hermitian_family:
            M = 0.5 * (M + M.conj().T)
        return M

    def evaluate(self, t):
        return BlockOperator(self.basis, self.evaluate_matrix(t),
                             hermitian=self.hermitian_family or None)

    def samples(self, n=DEFAULT_GRID):
        """Matrices on the grid ``j T / n``, shape ``(n, dim, dim)``."""
        return np.stack([self.evaluate_matrix(t) for t in self.grid(n)])

    def __add__(self, other):
        if not self.basis.compatible(other.basis) or self.period != other.period:
            raise ValidationError("families must share basis and period")
        K = max(self.K, other.K)
        c = np.zeros((2 * K + 1,) + self.coefficients.shape[1:], dtype=complex)
        c[K - self.K:K + self.K + 1] += self.coefficients
        c[K - other.K:K + other.K + 1] += other.coefficients
        return self._new(c)

    def __mul__(self, scalar):
        return self._new(scalar * self.coefficients)

    __rmul__ = __mul__

    def conjugated(self, U):
        """Harmonic-wise ``U Z_k U^dagger`` for a fixed matrix ``U``."""
        U = U.matrix if isinstance(U, BlockOperator) else np.asarray(U)
        c = U[None] @ self.coefficients @ U.conj().T[None]
        return TimePeriodicOperator(self.basis, self.period, c,
                                    hermitian_family=self.hermitian_family or None,
                                    meta=self.meta)

    # serialization --------------------------------------------------------

    def to_dict(self):
        return {"period": self.period,
                "harmonics": [{"k": int(k), "operator": self.coefficient(int(k)).to_dict()}
                              for k in self.harmonics
                              if np.any(self.coefficients[self.K + k])]}

    @classmethod
    def from_dict(cls, d, basis):
        harm = {h["k"]: BlockOperator.from_dict(h["operator"], basis) for h in d["harmonics"]}
        if not harm:
            harm = {0: BlockOperator.zeros(basis)}
        return cls.from_harmonics(basis, d["period"], harm)


def evaluate(Z, t):
    """``Z(t)`` as a :class:`BlockOperator`."""
    return Z.evaluate(t)


def time_average(Z):
    """Mean over one period, which is exactly the zeroth harmonic."""
    return BlockOperator(Z.basis, Z.coefficients[Z.K],
                         hermitian=Z.hermitian_family or None)


def fluctuation(Z):
    c = Z.coefficients.copy()
    c[Z.K] = 0
    return Z._new(c)


def primitive_of_fluctuation(Z):
    """``F(t) = int_0^t (Z(s) - Zbar) ds`` as a trigonometric polynomial.

    ``F_k = Z_k / (i k omega)`` for ``k != 0``; the constant term is chosen so
    that ``F(0) = 0``.
    """
    c = np.zeros_like(Z.coefficients)
    for k in Z.harmonics:
        if k:
            c[Z.K + k] = Z.coefficients[Z.K + k] / (1j * k * Z.omega)
    c[Z.K] = -c.sum(axis=0)
    return Z._new(c)


def time_derivative(Z):
    """Harmonic multiplication by ``i k omega``."""
    factor = 1j * Z.harmonics * Z.omega
    return Z._new(factor[:, None, None] * Z.coefficients)


REFINE_PEAKS = 3


def _sup_over_period(Z, fn, n_grid, refine):
    """``sup_t fn(t)`` from a grid scan, polished around the best grid peaks.

    The function is smooth between the (finitely many) switches of the
    maximizing block, so a bounded Brent search in the two cells around
    each of the highest local grid maxima recovers the supremum to
    roughly ``1e-12`` relative, independently of the grid size.
    """
    n = max(int(n_grid), 4 * Z.K)
    ts = Z.grid(n)
    vals = np.array([fn(t) for t in ts])
    best = float(vals.max())
    if not refine or best == 0.0:
        return best
    h = Z.period / n
    peaks = [j for j in range(n) if vals[j] >= vals[j - 1] and vals[j] >= vals[(j + 1) % n]]
    peaks.sort(key=lambda j: -vals[j])
    for j in peaks[:REFINE_PEAKS]:
        res = optimize.minimize_scalar(lambda t: -fn(t), bounds=(ts[j] - h, ts[j] + h),
                                       method="bounded",
                                       options={"xatol": 1e-12 * Z.period})
        best = max(best, float(-res.fun))
    return best


def family_class_norm(Z, params, n_grid=DEFAULT_GRID, refine=True):
    """``sup_t ||Z(t)||_params`` over one period.

    The supremum is located on ``max(n_grid, 4K)`` equispaced times and then
    refined locally, see :func:`_sup_over_period`.
    """
    if Z.K == 0:
        return class_norm(time_average(Z), params)
    return _sup_over_period(Z, lambda t: class_norm(Z.evaluate(t), params), n_grid, refine)


def family_operator_norm(Z, n_grid=DEFAULT_GRID, refine=True):
    """``sup_t ||Z(t)||`` (assembled 2-norm) over one period."""
    if Z.is_zero():
        return 0.0
    if Z.K == 0:
        return float(np.linalg.norm(Z.coefficients[0], 2))
    return _sup_over_period(Z, lambda t: float(np.linalg.norm(Z.evaluate_matrix(t), 2)),
                            n_grid, refine)
