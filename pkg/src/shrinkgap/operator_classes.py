"""Block operators and the weighted classes ``Y(p, delta)``.

An operator is stored as one dense matrix over the concrete basis of a
:class:`~shrinkgap.spectral_basis.SpectralBasis`; blocks ``A_{m,n}`` are
read off through the basis offsets.  The class norm is

    ||A||_{p,delta} = sup_{m,n} <m-n>^p max(m,n)^(2 delta) ||A_{m,n}||

with ``<d> = max(1, |d|)`` and ``||.||`` the operator 2-norm of a block.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .checks import BoundCheck
from .errors import GapConditionViolated, SmallDivisor, ValidationError
from .spectral_basis import certify_gaps

ZETA_TERMS = 10 ** 6
SMALL_DIVISOR_FLOOR = 1e-10


def bracket(d):
    """``<d> = max(1, |d|)``; accepts scalars or arrays."""
    if np.ndim(d):
        return np.maximum(1, np.abs(d))
    return max(1, abs(d))


@lru_cache(maxsize=None)
def zeta(s):
    """Riemann zeta for real ``s > 1``.

    Direct summation of the first ``ZETA_TERMS - 1`` terms (compensated)
    plus the Euler-Maclaurin tail starting at ``n = ZETA_TERMS``; the first
    neglected tail term is of order ``n**(-s-5)``.
    """
    s = float(s)
    if not s > 1.0:
        raise ValidationError(f"zeta needs s > 1, got {s}")
    n = ZETA_TERMS
    k = np.arange(n - 1, 0, -1, dtype=float)
    head = math.fsum(k ** -s)
    tail = (n ** (1.0 - s) / (s - 1.0) + 0.5 * n ** -s
            + s * n ** (-s - 1.0) / 12.0
            - s * (s + 1.0) * (s + 2.0) * n ** (-s - 3.0) / 720.0)
    return head + tail


@dataclass(frozen=True)
class ClassParams:
    """Decay exponents ``(p, delta)`` of a class ``Y(p, delta)``."""

    p: float
    delta: float
    admissible: bool = True

    def __post_init__(self):
        p, d = float(self.p), float(self.delta)
        if math.isnan(p) or math.isnan(d):
            raise ValidationError("class parameters must not be NaN")
        if p < 1.0:
            raise ValidationError(f"p must be >= 1, got {p}")
        if d < 0.0:
            raise ValidationError(f"delta must be >= 0, got {d}")
        if self.admissible and not p + 2.0 * d > 1.0:
            raise ValidationError("class parameters need p + 2 delta > 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "delta", d)

    @classmethod
    def weights_only(cls, p, delta):
        """Parameters used only to evaluate the weighted sup (``p + 2 delta = 1`` allowed)."""
        return cls(p, delta, admissible=False)

    @property
    def infinite(self):
        return math.isinf(self.p)

    def to_dict(self):
        return {"p": "inf" if self.infinite else self.p, "delta": self.delta}


def _params(params):
    if isinstance(params, ClassParams):
        return params
    return ClassParams(*params)


def sh_constant(params):
    """Constant with ``||A||_SH <= sh_constant * ||A||_{p,delta}``."""
    params = _params(params)
    if params.infinite:
        raise ValidationError("sh_constant needs finite p")
    if not params.admissible:
        raise ValidationError("sh_constant needs p + 2 delta > 1")
    s = params.p + 2.0 * params.delta
    return 2.0 + 1.0 / (s - 1.0) + zeta(s)


def cp_constant(p):
    """Product constant ``C_p = 2^(p+1) (1 + 2 zeta(p-1))``, ``p > 2``."""
    p = float(p)
    if not p > 2.0:
        raise ValidationError(f"C_p needs p > 2, got {p}")
    return 2.0 ** (p + 1.0) * (1.0 + 2.0 * zeta(p - 1.0))


def lemma_product_constant(p, excess):
    """``C(p, Delta) = 2^(p + 2 Delta + 1) (1 + 2 zeta(p))`` for general products."""
    return 2.0 ** (p + 2.0 * excess + 1.0) * (1.0 + 2.0 * zeta(p))


def class_weights(basis, params):
    """``<m-n>^p max(m,n)^(2 delta)`` over block pairs; cached per basis."""
    params = _params(params)
    key = ("weights", params.p, params.delta)
    w = basis._cache.get(key)
    if w is None:
        idx = np.arange(1, basis.N + 1, dtype=float)
        top = np.maximum(idx[:, None], idx[None, :]) ** (2.0 * params.delta)
        if params.infinite:
            w = np.where(np.eye(basis.N, dtype=bool), top, np.inf)
        else:
            w = bracket(idx[:, None] - idx[None, :]) ** params.p * top
        w.setflags(write=False)
        basis._cache[key] = w
    return w


def block_norms_of(basis, M):
    """Operator 2-norm of every block of the dense matrix ``M``."""
    if basis.max_multiplicity == 1:
        return np.abs(M)
    nb, mm = basis.N, basis.max_multiplicity
    padded = np.zeros((nb, nb, mm, mm), dtype=M.dtype)
    b, s = basis.block_of, basis.slot_of
    padded[b[:, None], b[None, :], s[:, None], s[None, :]] = M
    if mm == 2:
        # closed form for the largest singular value of a 2x2 matrix
        fro2 = np.sum(np.abs(padded) ** 2, axis=(2, 3))
        det = np.abs(padded[..., 0, 0] * padded[..., 1, 1]
                     - padded[..., 0, 1] * padded[..., 1, 0])
        disc = np.sqrt(np.maximum(fro2 ** 2 - 4.0 * det ** 2, 0.0))
        return np.sqrt(0.5 * (fro2 + disc))
    return np.linalg.norm(padded, ord=2, axis=(2, 3))


def class_norm_dense(basis, M, params, diagonal=None):
    params = _params(params)
    bn = block_norms_of(basis, M)
    if params.infinite:
        if diagonal is None:
            diagonal = not np.any(M[~basis.same_block])
        if not diagonal:
            raise ValidationError("p = inf is only defined for diagonal operators")
        return float(np.max(np.diag(bn) * np.diag(class_weights(basis, params))))
    return float(np.max(bn * class_weights(basis, params)))


class BlockOperator:
    """Truncated operator organised in blocks between eigenspaces.

    The matrix is copied and frozen; every operation returns a new object.
    ``hermitian`` and ``diagonal`` are inferred when not given and are
    verified when asserted.
    """

    HERMITIAN_ATOL = 1e-12

    def __init__(self, basis, matrix, hermitian=None, diagonal=None):
        M = np.array(matrix, dtype=complex)
        if M.shape != (basis.dim, basis.dim):
            raise ValidationError(
                f"matrix shape {M.shape} does not match basis dim {basis.dim}")
        M.setflags(write=False)
        self.basis = basis
        self.matrix = M
        is_diag = not np.any(M[~basis.same_block])
        if diagonal and not is_diag:
            raise ValidationError("operator flagged diagonal has off-diagonal blocks")
        self.diagonal = is_diag if diagonal is None else bool(diagonal)
        herm = self._hermitian_defect() <= self.HERMITIAN_ATOL * max(1.0, self.scale)
        if hermitian and not herm:
            raise ValidationError("operator flagged hermitian is not")
        self.hermitian = herm if hermitian is None else bool(hermitian)
        self._block_norms = None

    # construction helpers -------------------------------------------------

    @classmethod
    def zeros(cls, basis):
        return cls(basis, np.zeros((basis.dim, basis.dim)), True, True)

    @classmethod
    def identity(cls, basis):
        return cls(basis, np.eye(basis.dim), True, True)

    @classmethod
    def energy(cls, basis):
        """The unperturbed Hamiltonian ``H`` itself."""
        return cls(basis, np.diag(basis.energies), True, True)

    @classmethod
    def from_blocks(cls, basis, blocks, **flags):
        """Assemble from ``{(m, n): block}`` with 1-based block labels."""
        M = np.zeros((basis.dim, basis.dim), dtype=complex)
        for (m, n), blk in blocks.items():
            sm, sn = basis.block_slice(m), basis.block_slice(n)
            M[sm, sn] = np.reshape(blk, (sm.stop - sm.start, sn.stop - sn.start))
        return cls(basis, M, **flags)

    # basic queries --------------------------------------------------------

    @property
    def scale(self):
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    def _hermitian_defect(self):
        M = self.matrix
        return float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0

    def block(self, m, n):
        return self.matrix[self.basis.block_slice(m), self.basis.block_slice(n)]

    def block_norms(self):
        if self._block_norms is None:
            bn = block_norms_of(self.basis, self.matrix)
            bn.setflags(write=False)
            self._block_norms = bn
        return self._block_norms

    def norm(self):
        """Operator 2-norm of the assembled matrix."""
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def dagger(self):
        return BlockOperator(self.basis, self.matrix.conj().T,
                             self.hermitian or None, self.diagonal or None)

    def _check(self, other):
        if not self.basis.compatible(other.basis):
            raise ValidationError("operators live on different bases (dimension mismatch)")

    def __add__(self, other):
        self._check(other)
        return BlockOperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return BlockOperator(self.basis, self.matrix - other.matrix)

    def __neg__(self):
        return BlockOperator(self.basis, -self.matrix)

    def __mul__(self, c):
        return BlockOperator(self.basis, c * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return op_product(self, other)

    def __repr__(self):
        flags = [f for f, on in (("hermitian", self.hermitian),
                                 ("diagonal", self.diagonal)) if on]
        return f"BlockOperator(N={self.basis.N}, dim={self.basis.dim}, {', '.join(flags) or 'general'})"

    # serialization --------------------------------------------------------

    def to_dict(self):
        bn = self.block_norms()
        blocks = []
        for m, n in zip(*np.nonzero(bn)):
            blk = self.block(m + 1, n + 1)
            blocks.append({"m": int(m + 1), "n": int(n + 1),
                           "re": blk.real.tolist(), "im": blk.imag.tolist()})
        return {"basis_ref": self.basis.ref, "blocks": blocks,
                "hermitian": self.hermitian, "diagonal": self.diagonal}

    @classmethod
    def from_dict(cls, d, basis):
        if d.get("basis_ref") not in (None, basis.ref):
            raise ValidationError("basis_ref does not match the supplied basis")
        blocks = {(b["m"], b["n"]): np.array(b["re"]) + 1j * np.array(b["im"])
                  for b in d["blocks"]}
        return cls.from_blocks(basis, blocks, hermitian=d.get("hermitian") or None,
                               diagonal=d.get("diagonal") or None)


def class_norm(A, params):
    """Weighted sup norm ``||A||_{p,delta}`` over all truncated block pairs."""
    params = _params(params)
    if params.infinite:
        if not A.diagonal:
            raise ValidationError("p = inf is only defined for diagonal operators")
        w = np.diag(class_weights(A.basis, params))
        return float(np.max(np.diag(A.block_norms()) * w))
    return float(np.max(A.block_norms() * class_weights(A.basis, params)))


def shur_holmgren_norm(A):
    """Max of the largest block-row and block-column sums of block norms."""
    bn = A.block_norms()
    return float(max(bn.sum(axis=1).max(), bn.sum(axis=0).max()))


def diag_part(A):
    M = np.where(A.basis.same_block, A.matrix, 0)
    return BlockOperator(A.basis, M, A.hermitian or None, True)


def offdiag_part(A):
    M = np.where(A.basis.same_block, 0, A.matrix)
    return BlockOperator(A.basis, M, A.hermitian or None)


def commutator_with_H(A):
    """``[A, H]``; block ``(m, n)`` is ``(E_n - E_m) A_{m,n}``."""
    e = A.basis.energies
    return BlockOperator(A.basis, A.matrix * (e[None, :] - e[:, None]))


def op_product(A, B):
    A._check(B)
    return BlockOperator(A.basis, A.matrix @ B.matrix)


def commutator(A, B):
    A._check(B)
    return BlockOperator(A.basis, A.matrix @ B.matrix - B.matrix @ A.matrix)


# checkable inequalities ----------------------------------------------------

def commutator_bound_check(A, params, C_H=None):
    """``||[A,H]||_{p-1,delta+gamma} <= C_H ||A||_{p,delta}``."""
    params = _params(params)
    if C_H is None:
        C_H = certify_gaps(A.basis).C_H
    gamma = A.basis.gamma
    lhs = class_norm(commutator_with_H(A), (params.p - 1.0, params.delta + gamma))
    return BoundCheck("commutator_with_H", lhs, C_H * class_norm(A, params))


_PRODUCT_CLASSES = {
    # kind: (class of A, class of B, class of the product, constant factor)
    1: (lambda p, i: (p, i), lambda p, i: (p, i), lambda p, i: (p - 1, i + 1), 1.0),
    2: (lambda p, i: (p, i - 1), lambda p, i: (p - 1, i), lambda p, i: (p - 1, i), 1.0),
    3: (lambda p, i: (p + 1, i - 1), lambda p, i: (p - 1, i + 1),
        lambda p, i: (p - 1, i + 1), 2.0),
}


def product_classes(kind, p, i, gamma):
    """Class parameters ``(A, B, AB)`` and factor for a product inequality."""
    ca, cb, cab, factor = _PRODUCT_CLASSES[kind]
    mk = lambda t: ClassParams(t[0], t[1] * gamma)
    return mk(ca(p, i)), mk(cb(p, i)), mk(cab(p, i)), factor


def product_bound_check(A, B, kind, p, i, reverse=False):
    """One of the three product inequalities for ``Y`` classes with ``p > 2``.

    ``kind`` 1: ``||AB||_{p-1,(i+1)g} <= C_p ||A||_{p,ig} ||B||_{p,ig}``;
    ``kind`` 2: ``||AB||_{p-1,ig} <= C_p ||A||_{p,(i-1)g} ||B||_{p-1,ig}``;
    ``kind`` 3: ``||AB||_{p-1,(i+1)g} <= 2 C_p ||A||_{p+1,(i-1)g} ||B||_{p-1,(i+1)g}``.
    With ``reverse=True`` the product is taken as ``BA``.
    """
    gamma = A.basis.gamma
    pa, pb, pab, factor = product_classes(kind, p, i, gamma)
    prod = op_product(B, A) if reverse else op_product(A, B)
    lhs = class_norm(prod, pab)
    rhs = factor * cp_constant(p) * class_norm(A, pa) * class_norm(B, pb)
    return BoundCheck(f"product_{kind}{'_reversed' if reverse else ''}", lhs, rhs)


def lemma_product_check(A, B, pa, pb, pab):
    """General product estimate with ``C(p, delta - min(delta_1, delta_2))``."""
    pa, pb, pab = _params(pa), _params(pb), _params(pab)
    if not (1 < pab.p <= min(pa.p, pb.p)
            and max(pa.delta, pb.delta) <= pab.delta <= pa.delta + pb.delta
            and pab.p + 2 * pab.delta <= min(pa.p + 2 * pa.delta, pb.p + 2 * pb.delta)):
        raise ValidationError("class parameters outside the product lemma's range")
    c = lemma_product_constant(pab.p, pab.delta - min(pa.delta, pb.delta))
    lhs = class_norm(op_product(A, B), pab)
    return BoundCheck("product_general", lhs, c * class_norm(A, pa) * class_norm(B, pb))


def index_ratio_check(N):
    """``m / k <= 2 <m - k>`` over all ``1 <= m, k <= N``."""
    idx = np.arange(1, N + 1, dtype=float)
    ratio = (idx[:, None] / idx[None, :]) / (2.0 * bracket(idx[:, None] - idx[None, :]))
    return BoundCheck("index_ratio", float(ratio.max()), 1.0)


def schur_chain_checks(A, params):
    """``||A|| <= ||A||_SH <= sh_constant ||A||_{p,delta}``."""
    sh = shur_holmgren_norm(A)
    return [BoundCheck("operator_norm_le_sh", A.norm(), sh),
            BoundCheck("sh_le_class", sh, sh_constant(params) * class_norm(A, params))]


# block Sylvester solver ----------------------------------------------------

def _diagonal_block_eigh(basis, K):
    """Eigen-decompose the Hermitian diagonal blocks of ``K``.

    Returns ``(lam, Q)`` where ``Q`` is block diagonal, or ``None`` when every
    block is one-dimensional.
    """
    if basis.max_multiplicity == 1:
        return np.real(np.diag(K)).copy(), None
    lam = np.empty(basis.dim)
    Q = np.zeros((basis.dim, basis.dim), dtype=complex)
    off = basis.block_offsets
    for m in np.unique(basis.multiplicities):
        blocks = np.nonzero(basis.multiplicities == m)[0]
        idx = off[blocks][:, None] + np.arange(m)[None, :]
        stack = K[idx[:, :, None], idx[:, None, :]]
        w, v = np.linalg.eigh(stack)
        lam[idx] = w
        Q[idx[:, :, None], idx[:, None, :]] = v
    return lam, Q


def _reduce_blocks(basis, X, ufunc):
    """Reduce a concrete-index matrix to block pairs with ``ufunc.reduceat``."""
    off = basis.block_offsets[:-1]
    return ufunc.reduceat(ufunc.reduceat(X, off, axis=0), off, axis=1)


@dataclass(frozen=True)
class SylvesterInfo:
    min_divisor: float
    guard: BoundCheck
    br_check: BoundCheck
    gap_check: BoundCheck
    divisor_check: BoundCheck
    residual: float


def sylvester_solve(G, V, floor=SMALL_DIVISOR_FLOOR, strict=True,
                    full_output=False, certificate=None):
    """Off-diagonal solution ``W`` of ``[H + G, W] = V``.

    Parameters
    ----------
    G : BlockOperator
        Diagonal Hermitian correction to ``H``.
    V : BlockOperator
        Off-diagonal right-hand side.
    floor : float
        Smallest admitted distance between the spectra of two diagonal
        blocks of ``H + G``.
    strict : bool
        Raise :class:`GapConditionViolated` when ``||G||_{inf,gamma} > c_H / 6``.
    full_output : bool
        Also return a :class:`SylvesterInfo` with the guard and norm checks.

    Each block pair solves ``(E_m + G_mm) W_mn - W_mn (E_n + G_nn) = V_mn``
    exactly after diagonalizing the (tiny) diagonal blocks.
    """
    basis = G.basis
    G._check(V)
    if not G.diagonal:
        raise ValidationError("G must be diagonal")
    if np.any(V.matrix[basis.same_block]):
        raise ValidationError("V must be off-diagonal")
    cert = certificate or certify_gaps(basis)
    gamma = basis.gamma
    g_norm = class_norm(G, (math.inf, gamma))
    guard = BoundCheck("gap_guard", g_norm, cert.c_H / 6.0)
    if strict and not guard.passed:
        raise GapConditionViolated(
            f"||G||_(inf,gamma) = {g_norm:.3e} exceeds c_H/6 = {cert.c_H / 6:.3e}")

    K = np.diag(basis.energies) + G.matrix
    K = 0.5 * (K + K.conj().T)
    lam, Q = _diagonal_block_eigh(basis, K)
    denom = lam[:, None] - lam[None, :]
    off = ~basis.same_block
    absden = np.where(off, np.abs(denom), np.inf)
    min_div = float(absden.min()) if basis.N > 1 else math.inf
    if min_div < floor:
        i, j = np.unravel_index(np.argmin(absden), absden.shape)
        raise SmallDivisor(
            f"spectral distance {min_div:.3e} between blocks "
            f"{basis.block_of[i] + 1} and {basis.block_of[j] + 1} is below {floor:g}")
    Vt = V.matrix if Q is None else Q.conj().T @ V.matrix @ Q
    with np.errstate(divide="ignore", invalid="ignore"):
        Wt = np.where(off, Vt / np.where(off, denom, 1.0), 0.0)
    Wm = Wt if Q is None else Q @ Wt @ Q.conj().T
    Wm = np.where(off, Wm, 0.0)
    W = BlockOperator(basis, Wm)
    if not full_output:
        return W

    dist = _reduce_blocks(basis, absden, np.minimum)
    np.fill_diagonal(dist, 0.0)
    wn, vn = W.block_norms(), V.block_norms()
    nz = vn > 0
    ratio = np.where(nz, wn * dist / np.where(nz, vn, 1.0), 0.0)
    br = BoundCheck("bhatia_rosenthal", float(ratio.max(initial=0.0)), math.pi / 2)
    idx = np.arange(1, basis.N + 1, dtype=float)
    sep = np.abs(idx[:, None] - idx[None, :])
    top = np.maximum(idx[:, None], idx[None, :]) ** (2 * gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        allowed = np.where(sep > 0, math.pi * top / (cert.c_H * sep), np.inf)
        gap_ratio = np.where(nz, wn / (allowed * np.where(nz, vn, 1.0)), 0.0)
        # spectral distances against the lower estimate c_H |m-n| / (2 max^(2 gamma))
        lower = np.where(sep > 0, cert.c_H * sep / (2 * top), 0.0)
        shortfall = np.where(sep > 0, lower / np.where(sep > 0, dist, 1.0), 0.0)
    gap_check = BoundCheck("w_block_estimate", float(gap_ratio.max(initial=0.0)), 1.0)
    divisor_check = BoundCheck("small_divisor_distance", float(shortfall.max(initial=0.0)), 1.0)
    res = K @ Wm - Wm @ K - V.matrix
    residual = float(np.max(block_norms_of(basis, res)))
    return W, SylvesterInfo(min_div, guard, br, gap_check, divisor_check, residual)
