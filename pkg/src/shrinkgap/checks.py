"""Measured-versus-bound records shared by all modules."""

from dataclasses import dataclass
import math

from .errors import BoundViolation

REL_SLACK = 1e-12


@dataclass(frozen=True)
class BoundCheck:
    """One inequality ``measured <= bound`` evaluated numerically.

    ``status`` is ``"pass"`` or ``"fail"``; in permissive runs failing
    checks are downgraded to ``"warn"`` by :func:`settle`.
    """

    name: str
    measured: float
    bound: float
    status: str = ""
    slack: float = REL_SLACK

    def __post_init__(self):
        if not self.status:
            ok = holds(self.measured, self.bound, self.slack)
            object.__setattr__(self, "status", "pass" if ok else "fail")

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {"measured": _num(self.measured), "bound": _num(self.bound),
                "pass": self.status}


def holds(measured, bound, slack=REL_SLACK):
    if math.isnan(measured) or math.isnan(bound):
        return False
    if math.isinf(bound) and bound > 0:
        return True
    return measured <= bound + slack * abs(bound) + 1e-300


def settle(checks, strict):
    """Raise on failures in strict mode, otherwise mark them as warnings."""
    checks = list(checks)
    failed = [c for c in checks if c.status == "fail"]
    if failed and strict:
        raise BoundViolation(failed)
    return [BoundCheck(c.name, c.measured, c.bound, "warn", c.slack)
            if c.status == "fail" else c for c in checks]


def _num(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x
