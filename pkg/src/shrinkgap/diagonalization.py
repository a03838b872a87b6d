"""Progressive diagonalization and the composed Floquet reduction.

:func:`progressive_diagonalize` removes the off-diagonal part of
``H + Y + Zbar`` by a sequence of unitary rotations ``exp(W_s)``, each
solving a block Sylvester equation; the off-diagonal remainder converges
quadratically.  :func:`reduce_floquet` alternates the anti-adiabatic
transform with this diagonalization ``q`` times and keeps track of the
accumulated gauge ``J(t)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .antiadiabatic import anti_adiabatic_transform, safe_expm1
from .checks import BoundCheck, settle
from .errors import (NoConvergence, SeriesNotConverged, ShrinkGapError,
                     SmallnessViolated, ValidationError)
from .operator_classes import (BlockOperator, ClassParams, class_norm, cp_constant,
                               diag_part, offdiag_part, sylvester_solve)
from .spectral_basis import certify_gaps
from .time_periodic import DEFAULT_GRID, TimePeriodicOperator, family_class_norm

MAX_STEPS = 60
MAX_TERMS = 40
DEFAULT_TOL = 1e-12
X_FLOOR = 1e-14
KICK_ORDERS = 5


def phi(x):
    """``sum_{k>=1} k x^k / (k+1)! = e^x - (e^x - 1) / x``, with ``phi(0) = 0``."""
    x = float(x)
    if x < 0:
        raise ValidationError("phi is defined for x >= 0")
    if x <= 1e-4:
        return math.fsum(k * x ** k / math.factorial(k + 1) for k in range(1, 21))
    return math.exp(x) - math.expm1(x) / x


def unitary_exp(W):
    """``exp(W)`` for skew-Hermitian ``W`` through the eigenbasis of ``-iW``."""
    K = -1j * W
    K = 0.5 * (K + K.conj().T)
    lam, Q = np.linalg.eigh(K)
    return (Q * np.exp(1j * lam)) @ Q.conj().T


def unitarity_defect(U):
    return float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2))


@dataclass
class DiagonalizationState:
    """Snapshot of the iteration after its last step.

    ``steps`` holds one record per rotation with the norms of ``G_s``,
    ``V_s`` and ``W_s`` and the bound checks evaluated at that step.
    """

    s: int
    G: BlockOperator
    V: BlockOperator
    U: BlockOperator
    x_history: list
    M: float
    steps: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    smallness: BoundCheck = None

    def to_dict(self):
        return {"s": self.s, "M": self.M, "x_history": list(self.x_history),
                "smallness": self.smallness.to_dict() if self.smallness else None,
                "steps": self.steps,
                "bound_checks": {c.name: c.to_dict() for c in self.checks}}


def _status(checks):
    return {c.name: c.status for c in checks}


def _kick_series(W, V, params, basis, rel_tol, max_terms):
    """``Phi(ad_W) V`` and the class norms of ``ad_W^k V``."""
    total = np.zeros_like(V)
    X = V
    kicks = []
    acc = 0.0
    for k in range(1, max_terms + 1):
        X = W @ X - X @ W
        nk = class_norm(BlockOperator(basis, X), params) if k <= KICK_ORDERS else None
        kicks.append(nk)
        term = (k / math.factorial(k + 1)) * X
        total += term
        tn = float(np.max(np.abs(term)))
        acc = float(np.max(np.abs(total)))
        if tn <= rel_tol * acc:
            return total, [n for n in kicks if n is not None]
    raise SeriesNotConverged(f"Phi(ad_W) series not converged after {max_terms} terms")


def progressive_diagonalize(Y, Z_bar, r, i, tol=DEFAULT_TOL, strict=True, debug=False,
                            max_steps=MAX_STEPS, series_tol=DEFAULT_TOL):
    """Unitary ``U`` with ``U (H + Y + Zbar) U^dagger = H + A``, ``A`` diagonal.

    Parameters
    ----------
    Y : BlockOperator
        Diagonal Hermitian operator, measured in ``(inf, gamma)``.
    Z_bar : BlockOperator
        Hermitian operator in the class ``(r, i gamma)``.
    r : float
        Off-diagonal decay index; ``r > 2``.
    i : int
        Diagonal decay index, ``i >= 1``.
    tol : float
        Stop once ``||V_s||_{r, i gamma} < tol``.
    strict : bool
        Refuse inputs outside the smallness condition and raise on failed
        bound checks.  In permissive mode both only produce warnings.
    debug : bool
        Cross-check every update against dense conjugation.

    Returns
    -------
    U : BlockOperator
    A : BlockOperator
    state : DiagonalizationState
    """
    basis = Y.basis
    if not basis.compatible(Z_bar.basis):
        raise ValidationError("Y and Z_bar live on different bases")
    if not (Y.diagonal and Y.hermitian):
        raise ValidationError("Y must be diagonal and Hermitian")
    if not Z_bar.hermitian:
        raise ValidationError("Z_bar must be Hermitian")
    g = basis.gamma
    params = ClassParams(r, i * g)
    w_params = ClassParams(r + 1, (i - 1) * g)
    inf_params = ClassParams(math.inf, g)
    cert = certify_gaps(basis)
    c_H = cert.c_H
    C_next = cp_constant(r + 1)
    M = c_H / (2 * math.pi * C_next)

    ny = class_norm(Y, inf_params)
    nz = class_norm(Z_bar, params)
    smallness = BoundCheck("smallness", ny + nz, c_H / (4 * math.pi * C_next))
    if not smallness.passed:
        if strict:
            raise SmallnessViolated(
                f"||Y||_(inf,gamma) + ||Zbar||_(r,i gamma) = {ny + nz:.3e} exceeds "
                f"c_H/(4 pi C_(r+1)) = {smallness.bound:.3e}", ny + nz, smallness.bound)
        smallness = BoundCheck("smallness", ny + nz, smallness.bound, "warn")
    certified = smallness.passed

    G = (Y + diag_part(Z_bar)).matrix
    V = offdiag_part(Z_bar).matrix
    U = np.eye(basis.dim, dtype=complex)
    xs, steps = [], []
    s = 0
    while True:
        Vop = BlockOperator(basis, V)
        nv = class_norm(Vop, params)
        x = nv / M
        xs.append(x)
        if nv < tol or x < X_FLOOR:
            break
        if s >= max_steps:
            raise NoConvergence(f"off-diagonal norm {nv:.3e} after {max_steps} steps")
        s += 1
        Gop = BlockOperator(basis, G, diagonal=True)
        W, info = sylvester_solve(Gop, Vop, strict=strict, full_output=True,
                                  certificate=cert)
        Wm = W.matrix
        S, kicks = _kick_series(Wm, V, params, basis, series_tol, MAX_TERMS)
        E = unitary_exp(Wm)
        if debug:
            Hs = np.diag(basis.energies) + G + V
            dense = E @ Hs @ E.conj().T
            new = np.diag(basis.energies) + G + S
            err = float(np.max(np.abs(dense - new)))
            if err > 1e-10:
                raise AssertionError(f"series update differs from dense conjugation by {err:.2e}")
        nw = class_norm(W, w_params)
        step_checks = [info.guard, info.br_check, info.gap_check, info.divisor_check,
                       BoundCheck("w_norm", nw, math.pi / c_H * nv)]
        step_checks += [BoundCheck(f"kick_{k}", nk, x ** k * nv)
                        for k, nk in enumerate(kicks, start=1)]
        if not certified:
            step_checks = settle(step_checks, False)
        steps.append({"s": s, "x_s": x, "norm_G": class_norm(Gop, inf_params),
                      "norm_V": nv, "norm_W": nw, "checks": step_checks})
        S = 0.5 * (S + S.conj().T)
        same = basis.same_block
        G = G + np.where(same, S, 0)
        V = np.where(same, 0, S)
        U = E @ U

    A = BlockOperator(basis, 0.5 * (G + G.conj().T), hermitian=True, diagonal=True)
    Uop = BlockOperator(basis, U)
    checks = [c for st in steps for c in st["checks"]]
    # quadratic convergence once x_1 < 1, and the summed bound
    if xs and xs[0] < 1:
        quad = max((xs[k + 1] / xs[k] ** 2 for k in range(len(xs) - 1) if xs[k] > 0),
                   default=0.0)
        checks.append(BoundCheck("x_quadratic", quad, 1.0))
        checks.append(BoundCheck("x_sum", math.fsum(xs), xs[0] / (1 - xs[0])))
    checks.append(BoundCheck("a_norm", class_norm(A, inf_params), 2 * (ny + nz)))
    total = np.diag(basis.energies) + Y.matrix + Z_bar.matrix
    conj = U @ total @ U.conj().T
    resid = float(np.linalg.norm(np.where(basis.same_block, 0, conj), 2))
    checks.append(BoundCheck("offdiag_residual", resid, 10 * tol, slack=0.0))
    checks.append(BoundCheck("unitarity", unitarity_defect(U), 1e-11, slack=0.0))
    checks = settle(checks, strict and certified)
    for st in steps:
        st["bound_checks"] = {c.name: c.to_dict()["pass"] for c in st.pop("checks")}
    state = DiagonalizationState(s, A, BlockOperator(basis, V), Uop, xs, M, steps,
                                 [c for c in checks if not _is_step_check(c.name)] +
                                 _worst_step_checks(checks), smallness)
    return Uop, A, state


_STEP_PREFIXES = ("gap_guard", "bhatia_rosenthal", "w_block_estimate",
                  "small_divisor_distance", "w_norm", "kick_")


def _is_step_check(name):
    return name.startswith(_STEP_PREFIXES)


def _worst_step_checks(checks):
    """Collapse repeated per-step checks to the worst ratio per name."""
    worst = {}
    for c in checks:
        if not _is_step_check(c.name):
            continue
        ratio = c.measured / c.bound if c.bound else (0.0 if c.measured == 0 else math.inf)
        key = c.name
        if key not in worst or ratio > worst[key][0]:
            worst[key] = (ratio, c)
    return [c for _, c in worst.values()]


def conjugate_family(U, X, r, i, strict=True, n_grid=DEFAULT_GRID):
    """``U X(t) U^dagger`` harmonic by harmonic, with its norm estimate.

    Returns the conjugated family and the check of
    ``||U X U^dagger||_{r-1,(i+1)gamma} <= exp(2 C_r / C_{r+1}) ||X||_{r-1,(i+1)gamma}``.
    """
    g = X.basis.gamma
    params = ClassParams(r - 1, (i + 1) * g)
    out = X.conjugated(U)
    before = family_class_norm(X, params, n_grid)
    after = family_class_norm(out, params, n_grid)
    check = BoundCheck("conjugation_norm", after,
                       math.exp(2 * cp_constant(r) / cp_constant(r + 1)) * before)
    check, = settle([check], strict)
    return out, check


# gauge family ----------------------------------------------------------------

class UnitaryFamily:
    """Ordered product of static unitaries and factors ``exp(sign i F(t))``."""

    def __init__(self, basis, factors=()):
        self.basis = basis
        self.factors = list(factors)

    def then_exp(self, F, sign=-1.0):
        return UnitaryFamily(self.basis, self.factors + [("exp", F, sign)])

    def then_static(self, M):
        return UnitaryFamily(self.basis, self.factors + [("static", np.asarray(M), None)])

    def evaluate(self, t):
        J = np.eye(self.basis.dim, dtype=complex)
        for kind, obj, sign in self.factors:
            if kind == "static":
                J = J @ obj
            else:
                J = J @ unitary_exp(sign * 1j * obj.evaluate_matrix(t))
        return J

    @property
    def period(self):
        periods = {obj.period for kind, obj, _ in self.factors if kind == "exp"}
        return periods.pop() if periods else None


@dataclass
class PipelineResult:
    """Outcome of :func:`reduce_floquet`.

    ``H + V(t) = J(t)(H + A + B(t))J(t)^dagger + i J'(t) J(t)^dagger``.
    """

    J: UnitaryFamily
    A: BlockOperator
    B: TimePeriodicOperator
    q: int
    epsilon_used: float
    per_step_norms: list
    checks: list = field(default_factory=list)
    threshold: float = None
    out_params: ClassParams = None

    def to_dict(self):
        return {"q": self.q, "epsilon_used": self.epsilon_used,
                "threshold": self.threshold,
                "out_params": self.out_params.to_dict() if self.out_params else None,
                "per_step": self.per_step_norms,
                "bound_checks": {c.name: c.to_dict() for c in self.checks}}


def default_q(p):
    return max(1, math.ceil(p - 2))


def _validate_q(p, q):
    if int(q) != q or q < 1 or not q < p - 1:
        raise ValidationError(f"q must be a natural number with q < p - 1 (p={p}, q={q})")
    return int(q)


def _phi_step(i, p, T, c_H, C_H):
    C1, C2 = cp_constant(p - i + 1), cp_constant(p - i + 2)
    pre = math.exp(2 * C1 / C2) / (2 * C1)
    const = C_H + c_H / (math.pi * C2)

    def f(y):
        e = safe_expm1(4 * C1 * T * y)
        if math.isinf(e):
            return math.inf
        return pre * e * (const + (2 * C1 - 4) * y)
    return f


def composed_bounds(y, p, q, T, c_H, C_H):
    """``F_i(y)`` for ``i = 1..q`` together with the iterates ``phi_j o ... o phi_1(y)``."""
    phis = [_phi_step(i, p, T, c_H, C_H) for i in range(1, q + 1)]
    iterates = []
    cur = y
    for f in phis[:-1]:
        cur = f(cur)
        iterates.append(cur)
    out = []
    for i in range(1, q + 1):
        val = 2.0 ** (i - 1) * y + math.fsum(2.0 ** (i - 1 - j) * iterates[j - 1]
                                             for j in range(1, i))
        out.append(val)
    return out, iterates


def epsilon_threshold(p, q=None, T=2 * math.pi, c_H=None, C_H=None):
    """Admissible size of ``||V||_{p,gamma}`` for a ``q``-step reduction.

    Each ``F_i`` is continuous and strictly increasing with ``F_i(0) = 0``;
    its preimage of ``c_H / (4 pi C_{p-i+2})`` is found by bisection to full
    double precision, and the smallest preimage is returned.
    """
    p = float(p)
    if not p > 2:
        raise ValidationError("p must exceed 2")
    q = _validate_q(p, default_q(p) if q is None else q)
    if T <= 0 or c_H is None or C_H is None or c_H <= 0 or C_H < c_H:
        raise ValidationError("need T > 0 and 0 < c_H <= C_H")
    best = math.inf
    for i in range(1, q + 1):
        target = c_H / (4 * math.pi * cp_constant(p - i + 2))
        Fi = lambda y: composed_bounds(y, p, i, T, c_H, C_H)[0][-1]
        hi = 1.0
        while Fi(hi) < target:
            hi *= 2.0
        lo = 0.0
        while True:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if Fi(mid) < target:
                lo = mid
            else:
                hi = mid
        best = min(best, hi if Fi(hi) <= target else lo)
    return best


def reduce_floquet(V, p, q=None, tol=DEFAULT_TOL, strict=True, n_grid=DEFAULT_GRID):
    """Compose ``q`` anti-adiabatic transforms and diagonalizations.

    Parameters
    ----------
    V : TimePeriodicOperator
        Hermitian perturbation in the class ``(p, gamma)``.
    p : float
        Off-diagonal decay of ``V``; ``p > 2``.
    q : int, optional
        Number of steps, ``1 <= q < p - 1``; defaults to ``ceil(p - 2)``.
    strict : bool
        Refuse perturbations above :func:`epsilon_threshold` and raise on any
        failed bound; permissive runs record warnings instead.

    Returns
    -------
    PipelineResult
        ``B`` lies in the class ``(p - q, (q + 1) gamma)``.
    """
    basis = V.basis
    p = float(p)
    q = _validate_q(p, default_q(p) if q is None else q)
    g = basis.gamma
    cert = certify_gaps(basis)
    c_H, C_H = cert.c_H, cert.C_H
    T = V.period
    eps = family_class_norm(V, (p, g), n_grid)
    thr = epsilon_threshold(p, q, T, c_H, C_H)
    pre = BoundCheck("epsilon_threshold", eps, thr)
    if not pre.passed:
        if strict:
            raise SmallnessViolated(
                f"||V||_(p,gamma) = {eps:.6e} exceeds the admissible threshold {thr:.6e}",
                eps, thr)
        pre = BoundCheck("epsilon_threshold", eps, thr, "warn")
    certified = pre.passed
    inner_strict = strict and certified

    A = BlockOperator.zeros(basis)
    B = V
    J = UnitaryFamily(basis)
    per_step = []
    checks = [pre]
    inf_params = ClassParams(math.inf, g)
    for i in range(1, q + 1):
        r = p - i + 1
        try:
            nA = class_norm(A, inf_params)
            nB = family_class_norm(B, (r, i * g), n_grid)
            aa = anti_adiabatic_transform(A, B, r, i, tol=tol, strict=inner_strict,
                                          n_grid=n_grid)
            U, A_new, state = progressive_diagonalize(A, aa.Z_bar, r, i, tol=tol,
                                                      strict=inner_strict)
            B_new, conj_check = conjugate_family(U, aa.Z_diamond, r, i,
                                                 strict=inner_strict, n_grid=n_grid)
        except ShrinkGapError as exc:
            exc.step = i
            exc.args = (f"step {i}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        C1, C2 = cp_constant(r), cp_constant(r + 1)
        nA_new = class_norm(A_new, inf_params)
        nB_new = family_class_norm(B_new, (r - 1, (i + 1) * g), n_grid)
        b_rhs = (math.exp(2 * C1 / C2) / (2 * C1) * safe_expm1(4 * C1 * T * nB)
                 * (C_H + 4 * nA + 2 * C1 * nB))
        step_checks = [
            BoundCheck(f"step{i}_condition", nA + nB, c_H / (4 * math.pi * C2)),
            BoundCheck(f"step{i}_norm_A", nA_new, 2 * (nA + nB)),
            BoundCheck(f"step{i}_norm_B", nB_new, b_rhs),
        ]
        step_checks = settle(step_checks, inner_strict)
        sub = aa.checks + state.checks + [state.smallness, conj_check]
        per_step.append({
            "i": i, "r": r, "norm_A_in": nA, "norm_B_in": nB,
            "norm_A": nA_new, "norm_B": nB_new,
            "diagonalization_steps": state.s, "x_history": state.x_history,
            "series_terms": aa.series_terms_used,
            "discarded_fraction": aa.Z_diamond.meta.get("discarded_fraction", 0.0),
            "bound_checks": {c.name: c.to_dict() for c in step_checks + sub},
        })
        checks += step_checks
        checks += [type(c)(f"step{i}_{c.name}", c.measured, c.bound, c.status, c.slack)
                   for c in sub]
        J = J.then_exp(aa.F, -1.0).then_static(U.matrix.conj().T)
        A, B = A_new, B_new
    return PipelineResult(J, A, B, q, eps, per_step, checks, thr,
                          ClassParams(p - q, (q + 1) * g))
