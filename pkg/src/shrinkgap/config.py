"""Experiment configuration: loading, validation and model construction."""

import copy
import json
import math
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diagonalization import epsilon_threshold
from .errors import ConfigError, ValidationError
from .models import DiscreteModel, HowlandModel, build_discrete, build_howland
from .spectral_basis import certify_gaps
from .time_periodic import family_class_norm

SPEC_VERSION = "1"

DEFAULTS = {
    "spec_version": SPEC_VERSION,
    "model": {"model": "howland", "alpha": 0.5, "N": 256, "k_smooth": 6, "shift": 1.0,
              "period": 2 * math.pi, "potential": [], "a_coeffs": []},
    "pipeline": {"p": 3.5, "q": None, "tol": 1e-12, "strict": True, "t0": 0.0,
                 "commuting": False, "n_grid": 64},
    "evolution": {"n_periods": 1000, "steps_per_period": 64, "sample_phase": 0,
                  "fit_window": 0.9, "fit_method": "envelope_lsq",
                  "psi0": {"kind": "ground", "center": 1.0, "width": 1.0}, "seed": 0},
    "output": {"dir": None, "formats": ["json", "csv"]},
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path):
    """Read a TOML (or ``.json``) file and fill in defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file {path} does not exist")
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from exc
    return ExperimentConfig(raw)


def set_dotted(d, key, value):
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value


def parse_scalar(text):
    """``"64"`` -> 64, ``"0.5"`` -> 0.5, ``"true"`` -> True, otherwise the string."""
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


class ExperimentConfig:
    """Validated configuration with ``model``, ``pipeline``, ``evolution`` and
    ``output`` sections."""

    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be a table")
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        version = str(raw.get("spec_version", SPEC_VERSION))
        if version != SPEC_VERSION:
            raise ConfigError("spec_version", f"unsupported version {version!r}")
        self.raw = raw
        self.data = _merge(DEFAULTS, raw)
        self.validate()

    def __getitem__(self, key):
        return self.data[key]

    def with_override(self, key, value):
        raw = copy.deepcopy(self.raw)
        set_dotted(raw, key, value)
        return ExperimentConfig(raw)

    def to_dict(self):
        return copy.deepcopy(self.data)

    # validation -----------------------------------------------------------

    def validate(self):
        m, p, e = self.data["model"], self.data["pipeline"], self.data["evolution"]
        kind = m.get("model")
        if kind not in ("howland", "discrete"):
            raise ConfigError("model.model", "must be 'howland' or 'discrete'")
        _number(m, "model", "alpha", lo=0, hi=1, open_lo=True, open_hi=True)
        _integer(m, "model", "N", lo=2)
        _number(m, "model", "period", lo=0, open_lo=True)
        if kind == "howland":
            if ("epsilon" in m) == ("epsilon_fraction" in m):
                raise ConfigError("model.epsilon",
                                  "give exactly one of epsilon, epsilon_fraction")
            if "epsilon" in m:
                _number(m, "model", "epsilon")
            else:
                _number(m, "model", "epsilon_fraction", lo=0)
            _number(m, "model", "shift", lo=0)
            _integer(m, "model", "k_smooth", lo=1)
            self._coeff_list(m["potential"], "model.potential", ("j", "k"))
        else:
            _number(m, "model", "lambda", lo=0, open_lo=True)
            if not m["a_coeffs"]:
                raise ConfigError("model.a_coeffs", "drive amplitude a(t) is required")
            self._coeff_list(m["a_coeffs"], "model.a_coeffs", ("k",))
        _number(p, "pipeline", "p", lo=2, open_lo=True)
        if p["q"] is not None:
            _integer(p, "pipeline", "q", lo=1)
            if not p["q"] < p["p"] - 1:
                raise ConfigError("pipeline.q", "must satisfy q < p - 1")
        _number(p, "pipeline", "tol", lo=0, open_lo=True)
        _bool(p, "pipeline", "strict")
        _bool(p, "pipeline", "commuting")
        _integer(p, "pipeline", "n_grid", lo=4)
        _integer(e, "evolution", "n_periods", lo=1)
        _integer(e, "evolution", "steps_per_period", lo=1)
        _integer(e, "evolution", "sample_phase", lo=0)
        if e["sample_phase"] >= e["steps_per_period"]:
            raise ConfigError("evolution.sample_phase", "must be < steps_per_period")
        _number(e, "evolution", "fit_window", lo=0, hi=1, open_lo=True)
        if e["fit_method"] not in ("envelope_lsq", "tail_lsq"):
            raise ConfigError("evolution.fit_method", "must be envelope_lsq or tail_lsq")
        _integer(e, "evolution", "seed", lo=0)
        if e["psi0"].get("kind") not in ("ground", "gaussian", "vector"):
            raise ConfigError("evolution.psi0.kind", "must be ground, gaussian or vector")
        fmts = self.data["output"]["formats"]
        if not set(fmts) <= {"json", "csv"}:
            raise ConfigError("output.formats", "allowed formats are json and csv")

    @staticmethod
    def _coeff_list(items, where, keys):
        if not isinstance(items, list):
            raise ConfigError(where, "must be a list of tables")
        for idx, item in enumerate(items):
            for k in keys + ("re",):
                if k not in item:
                    raise ConfigError(f"{where}[{idx}].{k}", "missing")
            for k in keys:
                if not isinstance(item[k], int) or isinstance(item[k], bool):
                    raise ConfigError(f"{where}[{idx}].{k}", "must be an integer")

    # model construction -----------------------------------------------------

    def coefficients(self, key, index_keys):
        out = {}
        for item in self.data["model"][key]:
            idx = tuple(int(item[k]) for k in index_keys)
            idx = idx[0] if len(idx) == 1 else idx
            out[idx] = out.get(idx, 0) + complex(item["re"], item.get("im", 0.0))
        return out

    def build(self, epsilon=None):
        """Construct ``(basis, V, extra)`` for the configured model.

        For the circle model with ``epsilon_fraction`` the coupling is chosen
        so that ``||epsilon v||_{p, gamma}`` equals that fraction of the
        admissible threshold; ``extra`` records the resolved value.
        """
        m = self.data["model"]
        strict = self.data["pipeline"]["strict"]
        try:
            if m["model"] == "howland":
                pot = self.coefficients("potential", ("j", "k"))
                eps = epsilon if epsilon is not None else m.get("epsilon", 1.0)
                model = HowlandModel(m["alpha"], m["N"], eps, pot, m["k_smooth"],
                                     m["shift"], m["period"])
                basis, V = build_howland(model, strict=strict)
                extra = {"model": "howland", "epsilon": eps, "shift": m["shift"]}
                if epsilon is None and "epsilon_fraction" in m:
                    pp = self.data["pipeline"]
                    cert = certify_gaps(basis)
                    thr = epsilon_threshold(pp["p"], pp["q"], m["period"], cert.c_H, cert.C_H)
                    unit = family_class_norm(V, (pp["p"], basis.gamma), pp["n_grid"])
                    if unit == 0:
                        return basis, V, extra
                    eps = m["epsilon_fraction"] * thr / unit
                    return self.build(epsilon=eps)[:2] + (
                        dict(extra, epsilon=eps, threshold=thr,
                             epsilon_fraction=m["epsilon_fraction"]),)
                return basis, V, extra
            a = self.coefficients("a_coeffs", ("k",))
            model = DiscreteModel(m["alpha"], m["N"], m["lambda"], a, m["period"])
            basis, V, rep = build_discrete(model)
            return basis, V, {"model": "discrete", "reparam": rep, "kappa": rep.kappa,
                              "lambda": m["lambda"], **V.meta}
        except ConfigError:
            raise
        except ValidationError as exc:
            raise ConfigError("model", str(exc)) from exc


def _check(section, name, ok, msg):
    if not ok:
        raise ConfigError(f"{section}.{name}", msg)


def _number(d, section, name, lo=None, hi=None, open_lo=False, open_hi=False):
    v = d.get(name)
    _check(section, name, isinstance(v, (int, float)) and not isinstance(v, bool)
           and math.isfinite(v), "must be a finite number")
    if lo is not None:
        _check(section, name, v > lo if open_lo else v >= lo,
               f"must be {'>' if open_lo else '>='} {lo}, got {v}")
    if hi is not None:
        _check(section, name, v < hi if open_hi else v <= hi,
               f"must be {'<' if open_hi else '<='} {hi}, got {v}")


def _integer(d, section, name, lo=None):
    v = d.get(name)
    _check(section, name, isinstance(v, int) and not isinstance(v, bool), "must be an integer")
    if lo is not None:
        _check(section, name, v >= lo, f"must be >= {lo}, got {v}")


def _bool(d, section, name):
    _check(section, name, isinstance(d.get(name), bool), "must be true or false")
