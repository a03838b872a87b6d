"""Eigenvalue blocks of the unperturbed Hamiltonian and the gap certificate.

A :class:`SpectralBasis` lists distinct eigenvalues ``E_1 < ... < E_N``
together with the dimension of each eigenspace.  Blocks are labelled
``1..N``; concrete vectors are laid out block after block, so block ``n``
occupies the index range ``offsets[n-1]:offsets[n]``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import json

import numpy as np

from .errors import ValidationError

DEFAULT_TRUNCATION = 256


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Truncated spectral data of ``H = sum_n E_n P_n``.

    Parameters
    ----------
    eigenvalues : array_like
        Strictly increasing block eigenvalues.
    multiplicities : array_like of int, optional
        ``dim Ran P_n`` for every block; all ones by default.
    alpha : float
        Growth exponent in ``(0, 1)``; ``gamma = (1 - alpha) / 2``.
    require_positive : bool
        Enforce ``E_1 > 0``.  Only relaxed for explicitly unshifted models.
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray = None
    alpha: float = 0.5
    require_positive: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        e = np.array(self.eigenvalues, dtype=float).ravel()
        if self.multiplicities is None:
            mult = np.ones(e.size, dtype=int)
        else:
            mult = np.array(self.multiplicities, dtype=int).ravel()
        if e.size < 1:
            raise ValidationError("basis needs at least one block")
        if mult.shape != e.shape:
            raise ValidationError("one multiplicity per eigenvalue required")
        if np.any(mult < 1):
            raise ValidationError("multiplicities must be positive integers")
        if not np.all(np.isfinite(e)):
            raise ValidationError("eigenvalues must be finite")
        if np.any(np.diff(e) <= 0):
            raise ValidationError("eigenvalues must be strictly increasing")
        if self.require_positive and e[0] <= 0:
            raise ValidationError("E_1 must be strictly positive")
        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
        e.setflags(write=False)
        mult.setflags(write=False)
        object.__setattr__(self, "eigenvalues", e)
        object.__setattr__(self, "multiplicities", mult)
        object.__setattr__(self, "alpha", alpha)

    @property
    def gamma(self):
        return (1.0 - self.alpha) / 2.0

    @property
    def N(self):
        return self.eigenvalues.size

    @cached_property
    def block_offsets(self):
        off = np.concatenate([[0], np.cumsum(self.multiplicities)])
        off.setflags(write=False)
        return off

    @property
    def dim(self):
        return int(self.block_offsets[-1])

    @property
    def max_multiplicity(self):
        return int(self.multiplicities.max())

    @cached_property
    def block_of(self):
        """0-based block position of every concrete basis vector."""
        b = np.repeat(np.arange(self.N), self.multiplicities)
        b.setflags(write=False)
        return b

    @cached_property
    def slot_of(self):
        """Position of every concrete vector inside its block."""
        s = np.arange(self.dim) - self.block_offsets[self.block_of]
        s.setflags(write=False)
        return s

    @cached_property
    def energies(self):
        """Diagonal of ``H`` in the concrete basis."""
        e = self.eigenvalues[self.block_of]
        e.setflags(write=False)
        return e

    @cached_property
    def same_block(self):
        m = self.block_of[:, None] == self.block_of[None, :]
        m.setflags(write=False)
        return m

    @property
    def labels(self):
        return np.arange(1, self.N + 1)

    def block_slice(self, n):
        """Concrete index range of block ``n`` (1-based label)."""
        if not 1 <= n <= self.N:
            raise IndexError(f"block {n} outside 1..{self.N}")
        return slice(int(self.block_offsets[n - 1]), int(self.block_offsets[n]))

    def compatible(self, other):
        return other is self or (
            self.N == other.N
            and np.array_equal(self.eigenvalues, other.eigenvalues)
            and np.array_equal(self.multiplicities, other.multiplicities))

    @cached_property
    def ref(self):
        """Short content hash used to link serialized operators to a basis."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(payload).hexdigest()[:12]

    def to_dict(self):
        return {"alpha": self.alpha, "gamma": self.gamma,
                "eigenvalues": self.eigenvalues.tolist(),
                "multiplicities": self.multiplicities.tolist()}

    @classmethod
    def from_dict(cls, d, require_positive=True):
        basis = cls(d["eigenvalues"], d.get("multiplicities"), d["alpha"],
                    require_positive=require_positive)
        if "gamma" in d and not np.isclose(d["gamma"], basis.gamma, rtol=0,
                                           atol=1e-15):
            raise ValidationError("gamma must equal (1 - alpha) / 2")
        return basis


@dataclass(frozen=True)
class GapCertificate:
    """Tightest constants of the two-sided shrinking gap condition.

    ``c_H |m-n| / max(m,n)^(2 gamma) <= |E_m - E_n| <= C_H |m-n| / max(m,n)^(2 gamma)``
    for all block pairs ``1 <= n < m <= verified_up_to``.
    """

    c_H: float
    C_H: float
    verified_up_to: int

    def to_dict(self):
        return {"c_H": self.c_H, "C_H": self.C_H,
                "verified_up_to": self.verified_up_to}


def build_power_basis(alpha, N=DEFAULT_TRUNCATION, multiplicity_rule="simple"):
    """Basis with ``E_n = n**alpha`` for ``n = 1..N``.

    ``multiplicity_rule="howland"`` gives multiplicity 1 to the first block
    and 2 to the others, the degeneracy pattern of ``|p|**alpha`` on the
    circle (without the zero mode; see :mod:`shrinkgap.models`).
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if N < 2:
        raise ValidationError("N must be at least 2")
    n = np.arange(1, N + 1, dtype=float)
    if multiplicity_rule == "simple":
        mult = np.ones(N, dtype=int)
    elif multiplicity_rule == "howland":
        mult = np.full(N, 2, dtype=int)
        mult[0] = 1
    else:
        raise ValidationError(f"unknown multiplicity rule {multiplicity_rule!r}")
    return SpectralBasis(n ** alpha, mult, alpha)


def gap_ratios(eigenvalues, gamma):
    """Matrix of ``|E_m - E_n| max(m,n)^(2 gamma) / |m - n|``; NaN on the diagonal."""
    e = np.asarray(eigenvalues, dtype=float)
    idx = np.arange(1, e.size + 1, dtype=float)
    diff = np.abs(e[:, None] - e[None, :])
    sep = np.abs(idx[:, None] - idx[None, :])
    top = np.maximum(idx[:, None], idx[None, :]) ** (2.0 * gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = diff * top / sep
    np.fill_diagonal(r, np.nan)
    return r


def gap_constants(eigenvalues, gamma):
    """Exhaustive scan over all pairs; returns ``(c_H, C_H)``."""
    e = np.asarray(eigenvalues, dtype=float)
    if e.size < 2:
        raise ValidationError("need at least two eigenvalues")
    r = gap_ratios(e, gamma)
    iu = np.triu_indices(e.size, k=1)
    vals = r[iu]
    if np.any(vals == 0):
        raise ValidationError("degenerate eigenvalues: zero gap")
    return float(vals.min()), float(vals.max())


def certify_gaps(basis, gamma=None):
    """Certify the shrinking gap condition of ``basis``.

    The result is cached on the basis when the basis' own ``gamma`` is used.
    """
    own = gamma is None
    g = basis.gamma if own else float(gamma)
    if own and "certificate" in basis._cache:
        return basis._cache["certificate"]
    c, C = gap_constants(basis.eigenvalues, g)
    cert = GapCertificate(c, C, basis.N)
    if own:
        basis._cache["certificate"] = cert
    return cert
