"""Model configuration: saddle data, forcing profiles, derived constants.

Everything downstream consumes the frozen types defined here.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ConfigError

TWO_PI = 2.0 * np.pi
GRID = 4096


def _as_tuple(seq):
    return tuple(float(v) for v in np.atleast_1d(np.asarray(seq, dtype=float)).ravel()) if len(seq) else ()


@dataclass(frozen=True)
class ForcingProfile:
    """Trigonometric polynomial ``constant + sum_k a_k cos(k t) + b_k sin(k t)``.

    ``cosine_coeffs[k-1]`` and ``sine_coeffs[k-1]`` hold ``a_k`` and ``b_k``.
    Derivatives of any order are exact.
    """

    cosine_coeffs: tuple = ()
    sine_coeffs: tuple = ()
    constant: float = 0.0

    def __post_init__(self):
        a = _as_tuple(self.cosine_coeffs)
        b = _as_tuple(self.sine_coeffs)
        n = max(len(a), len(b))
        a = a + (0.0,) * (n - len(a))
        b = b + (0.0,) * (n - len(b))
        object.__setattr__(self, "cosine_coeffs", a)
        object.__setattr__(self, "sine_coeffs", b)
        object.__setattr__(self, "constant", float(self.constant))
        if not all(map(math.isfinite, a + b + (self.constant,))):
            raise ValueError("profile coefficients must be finite")
        # complex form: f = c + Re sum z_k exp(i k t), z_k = a_k - i b_k
        object.__setattr__(self, "_k", np.arange(1, n + 1, dtype=float))
        object.__setattr__(self, "_z", np.asarray(a) - 1j * np.asarray(b))

    # -- construction helpers
    @classmethod
    def const(cls, c):
        return cls((), (), c)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def fit(cls, theta, values, order):
        """Least-squares Fourier fit; returns (profile, sup residual)."""
        theta = np.asarray(theta, float)
        values = np.asarray(values, float)
        k = np.arange(1, order + 1)
        A = np.column_stack([np.ones_like(theta)] + [np.cos(j * theta) for j in k] + [np.sin(j * theta) for j in k])
        coef, *_ = np.linalg.lstsq(A, values, rcond=None)
        prof = cls(coef[1:order + 1], coef[order + 1:], coef[0])
        resid = float(np.max(np.abs(A @ coef - values))) if len(values) else 0.0
        return prof, resid

    @property
    def order(self):
        return len(self.cosine_coeffs)

    def __call__(self, theta, order=0):
        return self.evaluate(theta, order)

    def evaluate(self, theta, order=0):
        th = np.asarray(theta, dtype=float)
        if self.order == 0:
            out = np.full(th.shape, self.constant if order == 0 else 0.0)
        else:
            w = self._z * (1j * self._k) ** order
            out = (np.exp(1j * th[..., None] * self._k) @ w).real
            if order == 0:
                out = out + self.constant
        return float(out) if np.ndim(theta) == 0 else out

    def evaluate_many(self, theta, orders=(0, 1)):
        """Several derivative orders sharing one exponential table."""
        th = np.asarray(theta, dtype=float)
        if self.order == 0:
            return tuple(np.full(th.shape, self.constant if n == 0 else 0.0) for n in orders)
        E = np.exp(1j * th[..., None] * self._k)
        res = []
        for n in orders:
            v = (E @ (self._z * (1j * self._k) ** n)).real
            res.append(v + self.constant if n == 0 else v)
        return tuple(res)

    def derivative(self, order=1):
        """Exact derivative as a new profile."""
        w = self._z * (1j * self._k) ** order
        return ForcingProfile(w.real, -w.imag, self.constant if order == 0 else 0.0)

    def scaled(self, s):
        return ForcingProfile(np.multiply(self.cosine_coeffs, s), np.multiply(self.sine_coeffs, s), self.constant * s)

    def shifted(self, phase):
        """Profile of ``t -> f(t + phase)``."""
        w = self._z * np.exp(1j * self._k * phase)
        return ForcingProfile(w.real, -w.imag, self.constant)

    def plus_constant(self, c):
        return replace(self, constant=self.constant + c)

    def is_zero(self):
        return self.constant == 0.0 and not np.any(self._z)

    def is_constant(self):
        return not np.any(self._z)

    # -- analysis
    def _grid(self, n=GRID):
        t = np.linspace(0.0, TWO_PI, n, endpoint=False)
        return t, self.evaluate(t)

    def _refine_extremum(self, t0, sign, n=GRID):
        h = TWO_PI / n
        res = minimize_scalar(lambda t: sign * self.evaluate(t), bounds=(t0 - h, t0 + h),
                              method="bounded", options={"xatol": 1e-13})
        return float(res.x % TWO_PI), float(sign * res.fun)

    def minimum(self):
        """(argmin, min) from a 4096-point grid refined by local minimization."""
        t, v = self._grid()
        i = int(np.argmin(v))
        return self._refine_extremum(t[i], 1.0)

    def maximum(self):
        t, v = self._grid()
        i = int(np.argmax(v))
        return self._refine_extremum(t[i], -1.0)

    def is_positive(self):
        return self.minimum()[1] > 0.0

    def zeros(self, n=GRID):
        """Sign-change zeros on [0, 2pi), refined by Brent's method."""
        return _roots(self.evaluate, n)

    def transversal_zeros(self, tol=1e-10):
        return [z for z in self.zeros() if abs(self.evaluate(z, 1)) > tol]

    def is_sign_changing(self):
        return len(self.transversal_zeros()) >= 2

    def critical_points(self):
        return _roots(lambda t: self.evaluate(t, 1), GRID)

    def sup_log_derivative(self):
        """sup of f'/f over the circle (f assumed positive)."""
        ratio = lambda t: self.evaluate(t, 1) / self.evaluate(t)
        t = np.linspace(0.0, TWO_PI, GRID, endpoint=False)
        i = int(np.argmax(ratio(t)))
        h = TWO_PI / GRID
        res = minimize_scalar(lambda s: -ratio(s), bounds=(t[i] - h, t[i] + h), method="bounded",
                              options={"xatol": 1e-13})
        return float(-res.fun)

    def to_dict(self):
        return {"cosine_coeffs": list(self.cosine_coeffs), "sine_coeffs": list(self.sine_coeffs),
                "constant": self.constant}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("cosine_coeffs", ()), d.get("sine_coeffs", ()), d.get("constant", 0.0))

    def __repr__(self):
        return f"ForcingProfile(cos={list(self.cosine_coeffs)}, sin={list(self.sine_coeffs)}, const={self.constant})"


def _roots(f, n):
    t = np.linspace(0.0, TWO_PI, n + 1)
    v = f(t)
    out = []
    for i in range(n):
        if v[i] == 0.0:
            out.append(t[i])
        elif v[i] * v[i + 1] < 0:
            out.append(brentq(f, t[i], t[i + 1], xtol=1e-15, rtol=1e-15))
    return dedupe_circle(out)


def dedupe_circle(points, tol=1e-11):
    """Reduce mod 2pi, sort, and merge points closer than ``tol`` (wrap-aware)."""
    pts = sorted(float(p) % TWO_PI for p in points)
    out = []
    for p in pts:
        if not out or p - out[-1] > tol:
            out.append(p)
    if len(out) > 1 and out[0] + TWO_PI - out[-1] <= tol:
        out.pop()
    return out


@dataclass(frozen=True)
class SaddleData:
    c: float  # contracting rate (eigenvalue -c)
    e: float  # expanding eigenvalue

    def __post_init__(self):
        if not (math.isfinite(self.c) and math.isfinite(self.e)) or self.c <= 0 or self.e <= 0:
            raise ValueError("saddle eigenvalue magnitudes must be positive and finite")
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "e", float(self.e))

    @property
    def dissipative(self):
        return self.c > self.e


def _zero4():
    return tuple(ForcingProfile() for _ in range(4))


@dataclass(frozen=True)
class ModelConfig:
    saddle1: SaddleData = SaddleData(2.0, 1.0)
    saddle2: SaddleData = SaddleData(2.0, 1.0)
    mu1: float = 0.1
    mu2: float = 0.0
    omega: float = 1.0
    xi1: float = 0.0
    xi2: float = 0.0
    b1: float = 1.0
    b2: float = 1.0
    eps0: float = 1.0
    phi1: ForcingProfile = ForcingProfile((), (1.0,), 2.0)
    psi1: ForcingProfile = ForcingProfile()
    phi2: ForcingProfile = ForcingProfile((), (1.0,), 0.0)
    psi2: ForcingProfile = ForcingProfile()
    # (w_1^(1), w_2^(1), w_1^(2), w_2^(2)): corrections to (c_i, e_i) near saddle i
    w_corrections: tuple = field(default_factory=_zero4)

    def __post_init__(self):
        for name in ("mu1", "mu2", "omega", "xi1", "xi2", "b1", "b2", "eps0"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        w = tuple(self.w_corrections)
        if len(w) != 4:
            raise ValueError("w_corrections needs exactly four profiles")
        object.__setattr__(self, "w_corrections", w)

    @classmethod
    def from_rates(cls, c1, e1, c2, e2, **kw):
        return cls(saddle1=SaddleData(c1, e1), saddle2=SaddleData(c2, e2), **kw)

    @property
    def mu_norm(self):
        return max(abs(self.mu1), abs(self.mu2))

    def replace(self, **kw):
        return replace(self, **kw)

    def saddle(self, i):
        return self.saddle1 if i == 1 else self.saddle2

    def corrections(self, i):
        """(w_1, w_2) correction profiles for saddle ``i``."""
        w = self.w_corrections
        return (w[0], w[1]) if i == 1 else (w[2], w[3])

    def has_corrections(self):
        return not all(w.is_zero() for w in self.w_corrections)

    def is_simplified(self):
        return self.b1 == 1.0 and self.b2 == 1.0 and self.eps0 == 1.0 and not self.has_corrections()

    # -- serialization
    def to_dict(self):
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, SaddleData):
                d[f.name] = {"c": v.c, "e": v.e}
            elif isinstance(v, ForcingProfile):
                d[f.name] = v.to_dict()
            elif f.name == "w_corrections":
                d[f.name] = [w.to_dict() for w in v]
            else:
                d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if f.name.startswith("saddle"):
                kw[f.name] = SaddleData(v["c"], v["e"])
            elif f.name in ("phi1", "psi1", "phi2", "psi2"):
                kw[f.name] = ForcingProfile.from_dict(v)
            elif f.name == "w_corrections":
                kw[f.name] = tuple(ForcingProfile.from_dict(w) for w in v)
            else:
                kw[f.name] = float(v)
        return cls(**kw)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_kv(self):
        """Flat key/value mapping in the config-file vocabulary."""
        s1, s2 = self.saddle1, self.saddle2
        kv = {"c1": s1.c, "e1": s1.e, "c2": s2.c, "e2": s2.e}
        for name in ("mu1", "mu2", "omega", "xi1", "xi2", "b1", "b2", "eps0"):
            kv[name] = getattr(self, name)
        profs = {"phi1": self.phi1, "psi1": self.psi1, "phi2": self.phi2, "psi2": self.psi2}
        profs.update({f"w{j}_{i}": self.w_corrections[2 * (i - 1) + j - 1] for i in (1, 2) for j in (1, 2)})
        for name, p in profs.items():
            if name.startswith("w") and p.is_zero():
                continue
            kv[f"{name}.constant"] = p.constant
            kv[f"{name}.cos"] = list(p.cosine_coeffs)
            kv[f"{name}.sin"] = list(p.sine_coeffs)
        return kv

    @classmethod
    def from_kv(cls, kv):
        """Build from a parsed key/value mapping; keys outside the model vocabulary are ignored."""
        base = cls()
        kw = {}
        try:
            rates = {k: float(kv.get(k, d)) for k, d in
                     (("c1", base.saddle1.c), ("e1", base.saddle1.e), ("c2", base.saddle2.c), ("e2", base.saddle2.e))}
            kw["saddle1"] = SaddleData(rates["c1"], rates["e1"])
            kw["saddle2"] = SaddleData(rates["c2"], rates["e2"])
            for name in ("mu1", "mu2", "omega", "xi1", "xi2", "b1", "b2", "eps0"):
                if name in kv:
                    kw[name] = float(kv[name])
            for name in ("phi1", "psi1", "phi2", "psi2"):
                p = _profile_from_kv(kv, name)
                if p is not None:
                    kw[name] = p
            ws = list(base.w_corrections)
            for i in (1, 2):
                for j in (1, 2):
                    p = _profile_from_kv(kv, f"w{j}_{i}")
                    if p is not None:
                        ws[2 * (i - 1) + j - 1] = p
            kw["w_corrections"] = tuple(ws)
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model value: {exc}") from exc


MODEL_KEYS = {"c1", "e1", "c2", "e2", "mu1", "mu2", "omega", "xi1", "xi2", "b1", "b2", "eps0"}
PROFILE_NAMES = ("phi1", "psi1", "phi2", "psi2", "w1_1", "w2_1", "w1_2", "w2_2")


def is_model_key(key):
    if key in MODEL_KEYS:
        return True
    head, _, tail = key.partition(".")
    return head in PROFILE_NAMES and tail in ("constant", "cos", "sin")


def _profile_from_kv(kv, name):
    keys = [f"{name}.constant", f"{name}.cos", f"{name}.sin"]
    if not any(k in kv for k in keys):
        return None
    cos = kv.get(keys[1], [])
    sin = kv.get(keys[2], [])
    cos = [cos] if isinstance(cos, (int, float)) else cos
    sin = [sin] if isinstance(sin, (int, float)) else sin
    return ForcingProfile(cos, sin, float(kv.get(keys[0], 0.0)))


# ---------------------------------------------------------------- key=value files

def _parse_value(raw, lineno):
    raw = raw.strip()
    if raw.startswith("["):
        try:
            val = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {lineno}: bad list {raw!r}") from exc
        if not isinstance(val, list):
            raise ConfigError(f"line {lineno}: bad list {raw!r}")
        return val
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    try:
        return float(raw)
    except ValueError:
        if raw == "":
            raise ConfigError(f"line {lineno}: empty value")
        return raw


def parse_kv(text):
    """Parse ``key = value`` lines with ``#`` comments into a dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key = key.strip()
        if not eq or not key or any(ch.isspace() for ch in key):
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(val, lineno)
    return out


def format_kv(kv):
    lines = []
    for k, v in kv.items():
        if isinstance(v, (list, tuple)):
            v = "[" + ", ".join(repr(float(x)) for x in v) + "]"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def read_config(path):
    """Load a ModelConfig from a key/value file or a ``.json`` file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            return ModelConfig.from_json(text)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return ModelConfig.from_kv(parse_kv(text))


def write_config(cfg, path):
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(cfg.to_json() + "\n", encoding="utf-8")
    else:
        path.write_text(format_kv(cfg.to_kv()), encoding="utf-8")


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.checks]

    def to_dict(self):
        return {"ok": self.ok, "checks": [c.__dict__ for c in self.checks]}

    def __str__(self):
        rows = []
        for c in self.checks:
            mark = "pass" if c.passed else "FAIL"
            wit = "" if c.witness is None else f"  witness={c.witness:.6g}"
            rows.append(f"[{mark}] {c.name}{wit}  {c.detail}".rstrip())
        return "\n".join(rows)


def validate(cfg: ModelConfig) -> ValidationReport:
    """Check the model hypotheses that are numerically decidable.

    The non-resonance condition on the eigenvalues is not checked.
    """
    checks = []
    for i in (1, 2):
        s = cfg.saddle(i)
        checks.append(HypothesisCheck(f"P1 saddle{i} dissipative", s.c > s.e, s.c - s.e, "c - e must be > 0"))
    checks.append(HypothesisCheck("omega positive", cfg.omega > 0, cfg.omega))
    checks.append(HypothesisCheck("eps0 positive", cfg.eps0 > 0, cfg.eps0))
    checks.append(HypothesisCheck("b1,b2 nonzero", cfg.b1 != 0 and cfg.b2 != 0, min(abs(cfg.b1), abs(cfg.b2))))
    checks.append(HypothesisCheck("amplitudes nonnegative", cfg.mu1 >= 0 and cfg.mu2 >= 0, min(cfg.mu1, cfg.mu2)))

    t = np.linspace(0.0, TWO_PI, 512, endpoint=False)
    for i in (1, 2):
        rate = cfg.saddle(i).e + cfg.corrections(i)[1].evaluate(t)
        checks.append(HypothesisCheck(f"corrected expansion rate {i} positive", bool(np.min(rate) > 0),
                                      float(np.min(rate))))

    if cfg.mu1 > 0:
        p = cfg.phi1
        _, mn = p.minimum()
        checks.append(HypothesisCheck("P7a phi1 positive", mn > 0, mn, "min of phi1"))
        if p.is_constant():
            checks.append(HypothesisCheck("P7a phi1 non-constant", False, 0.0))
        else:
            crit = p.critical_points()
            curv = min((abs(p.evaluate(c, 2)) for c in crit), default=0.0)
            checks.append(HypothesisCheck("P7a phi1 nondegenerate critical points", curv > 1e-8, curv,
                                          f"{len(crit)} critical points"))
    if cfg.mu2 > 0:
        z = cfg.phi2.transversal_zeros()
        checks.append(HypothesisCheck("P7b phi2 sign-changing", len(z) >= 2, float(len(z)),
                                      "number of transversal zeros"))
    return ValidationReport(tuple(checks))


@dataclass(frozen=True)
class DerivedConstants:
    delta1: float
    delta2: float
    delta: float
    K_F: float
    K_G: float
    xi: float

    def to_dict(self):
        return dict(self.__dict__)


def derive_constants(cfg: ModelConfig) -> DerivedConstants:
    """Saddle-value ratios and the logarithmic twist constants.

    Correction terms are evaluated at zero argument.
    """
    w11, w21, w12, w22 = (w.evaluate(0.0) for w in cfg.w_corrections)
    r1 = cfg.saddle1.e + w21
    r2 = cfg.saddle2.e + w22
    d1 = (cfg.saddle1.c + w11) / r1
    d2 = (cfg.saddle2.c + w12) / r2
    return DerivedConstants(
        delta1=d1, delta2=d2, delta=d1 * d2,
        K_F=1.0 / r2 + d2 / r1,
        K_G=1.0 / r1 + d1 / r2,
        xi=cfg.xi1 + cfg.xi2,
    )
