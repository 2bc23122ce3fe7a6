"""Melnikov functions along the two connections of a forced planar cycle.

Vector fields are given in a small expression grammar: sums of
``coeff * x**i * y**j * trig(kx*x + ky*y + kt*t)`` with trig in {1, cos, sin}.
Strings are parsed with :mod:`ast`; products of trig factors are expanded
with product-to-sum identities so every expression stays in normal form and
differentiates exactly.
"""
from __future__ import annotations

import ast
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .errors import ConfigError, NoConnection, PoorFit, TruncationTooShort
from .model import ForcingProfile

WEIGHT_TOL = 1e-12
MARGIN = 1.2

# ---------------------------------------------------------------- expressions


def _canon(kind, kx, ky, kt, c):
    """Normalise the sign of the frequency vector; returns (key, coeff) or None."""
    freq = (kx, ky, kt)
    lead = next((f for f in freq if f != 0), 0)
    if lead == 0:
        return (("1", 0.0, 0.0, 0.0), c) if kind == "c" or kind == "1" else None
    if lead < 0:
        kx, ky, kt = -kx, -ky, -kt
        if kind == "s":
            c = -c
    return (kind, float(kx), float(ky), float(kt)), c


class Expr:
    """Polynomial-trigonometric expression in x, y, t."""

    __slots__ = ("terms", "_fn")

    def __init__(self, terms=None):
        # (i, j, kind, kx, ky, kt) -> coeff
        self.terms = {}
        self._fn = None
        for k, c in (terms or {}).items():
            self._add(k[0], k[1], k[2], k[3], k[4], k[5], c)

    def _add(self, i, j, kind, kx, ky, kt, c):
        r = _canon(kind, kx, ky, kt, c)
        if r is None or c == 0:
            return
        (kind, kx, ky, kt), c = r
        key = (i, j, kind, kx, ky, kt)
        self._fn = None
        v = self.terms.get(key, 0.0) + c
        if v == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = v

    @classmethod
    def const(cls, c):
        e = cls()
        e._add(0, 0, "1", 0, 0, 0, float(c))
        return e

    @classmethod
    def var(cls, name):
        e = cls()
        if name == "x":
            e._add(1, 0, "1", 0, 0, 0, 1.0)
        elif name == "y":
            e._add(0, 1, "1", 0, 0, 0, 1.0)
        else:
            raise ConfigError(f"variable {name!r} only allowed inside sin/cos")
        return e

    @classmethod
    def trig(cls, kind, kx, ky, kt, phase=0.0):
        e = cls()
        # trig(u + phase) expanded so no phases are stored
        if kind == "cos":
            e._add(0, 0, "c", kx, ky, kt, math.cos(phase))
            e._add(0, 0, "s", kx, ky, kt, -math.sin(phase))
        else:
            e._add(0, 0, "s", kx, ky, kt, math.cos(phase))
            e._add(0, 0, "c", kx, ky, kt, math.sin(phase))
        return e

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        other = _as_expr(other)
        e = Expr()
        e.terms.update(self.terms)
        for k, c in other.terms.items():
            e._add(*k, c)
        return e

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_as_expr(other))

    def __rsub__(self, other):
        return _as_expr(other) - self

    def __mul__(self, other):
        other = _as_expr(other)
        e = Expr()
        for (i1, j1, k1, a1, b1, t1), c1 in self.terms.items():
            for (i2, j2, k2, a2, b2, t2), c2 in other.terms.items():
                i, j, c = i1 + i2, j1 + j2, c1 * c2
                if k1 == "1" or k2 == "1":
                    kind, f = (k2, (a2, b2, t2)) if k1 == "1" else (k1, (a1, b1, t1))
                    e._add(i, j, kind, *f, c)
                    continue
                p = (a1 + a2, b1 + b2, t1 + t2)
                m = (a1 - a2, b1 - b2, t1 - t2)
                h = 0.5 * c
                if k1 == "c" and k2 == "c":
                    e._add(i, j, "c", *m, h)
                    e._add(i, j, "c", *p, h)
                elif k1 == "s" and k2 == "s":
                    e._add(i, j, "c", *m, h)
                    e._add(i, j, "c", *p, -h)
                elif k1 == "s":
                    e._add(i, j, "s", *p, h)
                    e._add(i, j, "s", *m, h)
                else:
                    e._add(i, j, "s", *p, h)
                    e._add(i, j, "s", *m, -h)
        return e

    __rmul__ = __mul__

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ConfigError("only non-negative integer powers are supported")
        out = Expr.const(1.0)
        for _ in range(n):
            out = out * self
        return out

    def _compile(self):
        parts = []
        for (i, j, kind, kx, ky, kt), c in self.terms.items():
            f = [repr(c)] + ["x"] * i + ["y"] * j
            if kind != "1":
                f.append(f"{'cos' if kind == 'c' else 'sin'}({kx!r}*x + {ky!r}*y + {kt!r}*t)")
            parts.append("*".join(f))
        src = "lambda x, y, t: 0.0 + " + (" + ".join(parts) if parts else "0.0") + " + 0.0*(x + y + t)"
        return eval(src, {"cos": np.cos, "sin": np.sin})

    def __call__(self, x, y, t=0.0):
        if self._fn is None:
            self._fn = self._compile()
        return self._fn(x, y, t)

    def diff(self, var):
        e = Expr()
        for (i, j, kind, kx, ky, kt), c in self.terms.items():
            p = {"x": i, "y": j, "t": 0}[var]
            if p:
                e._add(i - (var == "x"), j - (var == "y"), kind, kx, ky, kt, c * p)
            k = {"x": kx, "y": ky, "t": kt}[var]
            if k and kind != "1":
                if kind == "c":
                    e._add(i, j, "s", kx, ky, kt, -c * k)
                else:
                    e._add(i, j, "c", kx, ky, kt, c * k)
        return e

    def __repr__(self):
        return f"Expr({len(self.terms)} terms)"

    def to_list(self):
        return [[*k, c] for k, c in sorted(self.terms.items())]


def _as_expr(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Expr.const(v)
    raise TypeError(v)


def _linear(node):
    """Evaluate a linear form a*x + b*y + c*t + d inside a trig call."""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return np.array([0, 0, 0, float(node.value)])
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return np.array([0, 0, 0, math.pi])
        idx = {"x": 0, "y": 1, "t": 2}.get(node.id)
        if idx is None:
            raise ConfigError(f"unknown name {node.id!r}")
        v = np.zeros(4)
        v[idx] = 1.0
        return v
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _linear(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        l, r = _linear(node.left), _linear(node.right)
        if isinstance(node.op, ast.Add):
            return l + r
        if isinstance(node.op, ast.Sub):
            return l - r
        if isinstance(node.op, ast.Mult):
            if not l[:3].any():
                return l[3] * r
            if not r[:3].any():
                return r[3] * l
        if isinstance(node.op, ast.Div) and not r[:3].any():
            return l / r[3]
    raise ConfigError("trig arguments must be linear in x, y, t")


def _build(node):
    if isinstance(node, ast.Expression):
        return _build(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return Expr.const(node.value)
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return Expr.const(math.pi)
        return Expr.var(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _build(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp):
        l = _build(node.left)
        if isinstance(node.op, ast.Pow):
            n = node.right
            if isinstance(n, ast.Constant) and isinstance(n.value, int):
                return l ** n.value
            raise ConfigError("exponent must be an integer literal")
        r = _build(node.right)
        if isinstance(node.op, ast.Add):
            return l + r
        if isinstance(node.op, ast.Sub):
            return l - r
        if isinstance(node.op, ast.Mult):
            return l * r
        if isinstance(node.op, ast.Div):
            if set(k[:3] for k in r.terms) <= {(0, 0, "1")} and r.terms:
                return l * (1.0 / r.terms[(0, 0, "1", 0.0, 0.0, 0.0)])
            raise ConfigError("division only by numeric constants")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in ("sin", "cos"):
        if len(node.args) != 1 or node.keywords:
            raise ConfigError(f"{node.func.id} takes one argument")
        a = _linear(node.args[0])
        return Expr.trig(node.func.id, a[0], a[1], a[2], a[3])
    raise ConfigError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse_expr(text) -> Expr:
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float)):
        return Expr.const(text)
    try:
        tree = ast.parse(str(text).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return _build(tree)


# ---------------------------------------------------------------- system


@dataclass(frozen=True)
class Saddle:
    point: np.ndarray
    c: float
    e: float
    u_stable: np.ndarray
    u_unstable: np.ndarray


@dataclass
class PlanarSystem:
    g1: Expr
    g2: Expr
    P1: Expr = field(default_factory=Expr)
    P2: Expr = field(default_factory=Expr)
    Q1: Expr = field(default_factory=Expr)
    Q2: Expr = field(default_factory=Expr)
    T: float = 2 * math.pi
    O1: tuple = (0.0, 0.0)
    O2: tuple = (1.0, 0.0)

    def __post_init__(self):
        for name in ("g1", "g2", "P1", "P2", "Q1", "Q2"):
            setattr(self, name, parse_expr(getattr(self, name)))
        self.O1 = tuple(map(float, self.O1))
        self.O2 = tuple(map(float, self.O2))
        if not self.T > 0:
            raise ConfigError("forcing period must be positive")
        self._d = {n: (getattr(self, n).diff("x"), getattr(self, n).diff("y"))
                   for n in ("g1", "g2")}
        self.saddles = (self._saddle(self.O1), self._saddle(self.O2))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {k: d.pop(k) for k in ("g1", "g2", "P1", "P2", "Q1", "Q2", "T", "O1", "O2") if k in d}
        if d:
            raise ConfigError(f"unknown system keys: {sorted(d)}")
        if "g1" not in kw or "g2" not in kw:
            raise ConfigError("system needs g1 and g2")
        return cls(**kw)

    def field(self, x, y):
        return self.g1(x, y), self.g2(x, y)

    def jac(self, x, y):
        (a, b), (c, d) = self._d["g1"], self._d["g2"]
        return a(x, y), b(x, y), c(x, y), d(x, y)

    def _saddle(self, p):
        x, y = p
        g = np.array([float(self.g1(x, y)), float(self.g2(x, y))])
        if np.abs(g).max() > 1e-10:
            raise ConfigError(f"vector field does not vanish at {p}")
        A = np.array(self.jac(x, y), dtype=float).reshape(2, 2)
        w, V = np.linalg.eig(A)
        if np.iscomplexobj(w) and np.abs(w.imag).max() > 0:
            raise ConfigError(f"equilibrium {p} is not a saddle")
        w, V = w.real, V.real
        if not (w.min() < 0 < w.max()):
            raise ConfigError(f"equilibrium {p} is not a saddle")
        s, u = int(np.argmin(w)), int(np.argmax(w))
        return Saddle(np.array(p, dtype=float), -float(w[s]), float(w[u]), V[:, s], V[:, u])

    def check(self):
        """Hypothesis checks; returns a list of (name, ok) pairs."""
        out = []
        for k, S in enumerate(self.saddles, 1):
            out.append((f"saddle {k} dissipative", S.c > S.e > 0))
        ts = np.linspace(0, self.T, 7)
        for name in ("P1", "P2", "Q1", "Q2"):
            f = getattr(self, name)
            fx, fy = f.diff("x"), f.diff("y")
            ok = all(np.abs(h(S.point[0], S.point[1], ts)).max() < 1e-10
                     for S in self.saddles for h in (f, fx, fy))
            out.append((f"{name} flat at saddles", ok))
        return out

    def forcing(self, which):
        return (self.P1, self.P2) if which == 1 else (self.Q1, self.Q2)

    def scaled(self, s):
        return PlanarSystem(self.g1, self.g2, self.P1 * s, self.P2 * s, self.Q1 * s, self.Q2 * s,
                            self.T, self.O1, self.O2)


# ---------------------------------------------------------------- connections


def _which(which):
    if which in (1, "1", "l1", "ell1"):
        return 1
    if which in (2, "2", "l2", "ell2"):
        return 2
    if isinstance(which, tuple) and len(which) == 2:
        if which[0] == which[1]:
            raise ValueError("source and target saddle must differ")
        return 1 if tuple(which) == (1, 2) else 2
    raise ValueError(f"unknown connection {which!r}")


def _unit_field(sys, x, y):
    g1, g2 = sys.field(x, y)
    n = np.hypot(g1, g2)
    with np.errstate(invalid="ignore", divide="ignore"):
        return g1 / n, g2 / n


def E_rate(sys, x, y, tau=None):
    """tau_perp . Dg . tau_perp with tau the unit field direction."""
    tx, ty = _unit_field(sys, x, y) if tau is None else tau
    px, py = -ty, tx
    a, b, c, d = sys.jac(x, y)
    return px * (a * px + b * py) + py * (c * px + d * py)


@dataclass
class HeteroclinicOrbit:
    which: int
    source: int
    target: int
    T_cut: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    I: np.ndarray  # integral of E from 0 to t
    tx: np.ndarray
    ty: np.ndarray
    miss: float
    _spl: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self._spl = tuple(CubicSpline(self.t, v) for v in (self.x, self.y, self.I, self.tx, self.ty))

    def state(self, t):
        """(x, y, I, tau_x, tau_y) at times t."""
        x, y, I, tx, ty = (s(t) for s in self._spl)
        n = np.hypot(tx, ty)
        return x, y, I, tx / n, ty / n

    def tangent(self, t=None):
        return (self.tx, self.ty) if t is None else self.state(t)[3:]

    @property
    def samples(self):
        return np.column_stack([self.t, self.x, self.y])


def _rhs(sys, sign=1.0):
    def f(t, u):
        g1, g2 = sys.field(u[0], u[1])
        return [sign * float(g1), sign * float(g2), sign * float(E_rate(sys, u[0], u[1]))]
    return f


def _shoot(sys, src, dst, offset, direction, sign, r_end, t_max=400.0):
    """Leave ``src`` along ``direction`` (time sign ``sign``) until within r_end of ``dst``."""
    p0 = src.point + offset * direction
    hit = lambda t, u: np.hypot(u[0] - dst.point[0], u[1] - dst.point[1]) - r_end
    hit.terminal = True
    far = 10.0 * np.hypot(*(dst.point - src.point))
    esc = lambda t, u: np.hypot(u[0] - src.point[0], u[1] - src.point[1]) - far
    esc.terminal = True
    sol = solve_ivp(_rhs(sys, sign), (0, t_max), [p0[0], p0[1], 0.0], method="DOP853", rtol=1e-12,
                    atol=1e-14, events=(hit, esc), dense_output=True)
    return sol


def _extend(sys, S, p, lam, t0, t1, n=2001):
    """Linearised approach to saddle S: p is the join point at time t0, rate lam."""
    ts = np.linspace(t0, t1, n)
    v = p - S.point
    xs = S.point[0] + v[0] * np.exp(lam * (ts - t0))
    ys = S.point[1] + v[1] * np.exp(lam * (ts - t0))
    # the field rounds to zero this close to the saddle: take the direction from the linear part
    A = np.array(sys.jac(*S.point), dtype=float).reshape(2, 2)
    tau = A @ v
    tau = tau / np.hypot(*tau)
    E = E_rate(sys, xs, ys, tau)
    dI = np.concatenate([[0.0], np.cumsum(0.5 * (E[1:] + E[:-1]) * np.diff(ts))])
    return ts, xs, ys, dI, np.full(n, tau[0]), np.full(n, tau[1])


def auto_T_cut(sys, which):
    which = _which(which)
    src, dst = (sys.saddles[0], sys.saddles[1]) if which == 1 else (sys.saddles[1], sys.saddles[0])
    rate = min(src.c, dst.e)
    return MARGIN * math.log(1 / WEIGHT_TOL) / rate


def shoot_heteroclinic(sys: PlanarSystem, which, T_cut=None, r_end=1e-4,
                       offsets=(1e-6, 1e-7)) -> HeteroclinicOrbit:
    """Unperturbed connection O1 -> O2 (which=1) or O2 -> O1 (which=2).

    Time zero is where the orbit is equidistant from both saddles. The orbit
    is continued beyond the integrated stretch by the linearisation at the
    saddles.
    """
    which = _which(which)
    s_id, d_id = (0, 1) if which == 1 else (1, 0)
    src, dst = sys.saddles[s_id], sys.saddles[d_id]
    T_cut = auto_T_cut(sys, which) if T_cut is None else float(T_cut)
    best = None
    for off in offsets:
        for sgn in (1.0, -1.0):
            sol = _shoot(sys, src, dst, off, sgn * src.u_unstable, 1.0, r_end)
            if sol.status != 1 or not len(sol.t_events[0]):
                continue
            # backward shot from the target along its stable direction
            end = sol.y[:2, -1]
            dvec = end - dst.point
            u = dst.u_stable * np.sign(dvec @ dst.u_stable)
            back = _shoot(sys, dst, src, off, u, -1.0, r_end)
            miss = _curve_miss(sol, back) if back.status == 1 else np.inf
            if best is None or miss < best[0]:
                best = (miss, sol, off)
        if best is not None and best[0] < 1e-7:
            break
    if best is None or best[0] > 1e-4:
        raise NoConnection(f"no connection from saddle {s_id + 1} to saddle {d_id + 1} "
                           f"(miss {np.inf if best is None else best[0]:.3g})")
    miss, sol, _ = best
    # equidistance time
    tt = np.linspace(0, sol.t[-1], 20001)
    U = sol.sol(tt)
    gap = np.hypot(U[0] - src.point[0], U[1] - src.point[1]) - np.hypot(U[0] - dst.point[0], U[1] - dst.point[1])
    k = int(np.nonzero(np.diff(np.sign(gap)) != 0)[0][0])
    f = lambda s: float(np.hypot(*(sol.sol(s)[:2] - src.point)) - np.hypot(*(sol.sol(s)[:2] - dst.point)))
    t_eq = brentq(f, tt[k], tt[k + 1], xtol=1e-14)
    I_eq = sol.sol(t_eq)[2]
    a, b = -t_eq, sol.t[-1] - t_eq
    parts = []
    if -T_cut < a:
        ts, xs, ys, dI, tx, ty = _extend(sys, src, sol.y[:2, 0], src.e, a, -T_cut)
        parts.append((ts[::-1], xs[::-1], ys[::-1], (dI - I_eq)[::-1], tx, ty))
    n_mid = max(4001, int(200 * (min(b, T_cut) - max(a, -T_cut))))
    tm = np.linspace(max(a, -T_cut), min(b, T_cut), n_mid)
    Um = sol.sol(tm + t_eq)
    parts.append((tm, Um[0], Um[1], Um[2] - I_eq, *_unit_field(sys, Um[0], Um[1])))
    if b < T_cut:
        ts, xs, ys, dI, tx, ty = _extend(sys, dst, sol.y[:2, -1], -dst.c, b, T_cut)
        parts.append((ts, xs, ys, dI + sol.y[2, -1] - I_eq, tx, ty))
    cols = []
    for j in range(6):
        seq = [parts[0][j]] + [p[j][1:] for p in parts[1:]]
        cols.append(np.concatenate(seq))
    return HeteroclinicOrbit(which, s_id + 1, d_id + 1, T_cut, *cols, miss=float(miss))


def _curve_miss(fwd, back, n=1000, m=16000):
    """Distance from the middle of the forward curve to the backward curve."""
    P = fwd.sol(np.linspace(0, fwd.t[-1], n))[:2].T
    Q = back.sol(np.linspace(0, back.t[-1], m))[:2].T
    # compare away from both saddles, where the two shots overlap
    d0, d1 = np.linalg.norm(P - P[0], axis=1), np.linalg.norm(P - P[-1], axis=1)
    span = np.linalg.norm(P[-1] - P[0])
    mid = P[(d0 > 0.1 * span) & (d1 > 0.1 * span)]
    if not len(mid):
        return np.inf
    return float(_hausdorff_one_sided(mid, Q))


def _hausdorff_one_sided(A, B, chunk=256):
    """max over points of A of the distance to the polyline B."""
    P0, P1 = B[:-1], B[1:]
    D = P1 - P0
    L2 = np.maximum((D ** 2).sum(1), 1e-300)
    out = 0.0
    for i in range(0, len(A), chunk):
        a = A[i:i + chunk, None, :]
        s = np.clip(((a - P0) * D).sum(-1) / L2, 0, 1)
        d = np.linalg.norm(a - (P0 + s[..., None] * D), axis=-1)
        out = max(out, float(d.min(axis=1).max()))
    return out


def shoot_backward(sys, which, r_end=1e-4, offset=1e-7, n=16000):
    """Curve obtained by integrating backward from the target's stable direction."""
    which = _which(which)
    src, dst = (sys.saddles[0], sys.saddles[1]) if which == 1 else (sys.saddles[1], sys.saddles[0])
    best = None
    for sgn in (1.0, -1.0):
        sol = _shoot(sys, dst, src, offset, sgn * dst.u_stable, -1.0, r_end)
        if sol.status == 1 and len(sol.t_events[0]) and (best is None or sol.t[-1] < best.t[-1]):
            best = sol
    if best is None:
        raise NoConnection("backward shot does not reach the source saddle")
    return best.sol(np.linspace(0, best.t[-1], n))[:2].T


# ---------------------------------------------------------------- Melnikov integral


def _integrand(sys, orb, t, theta, dt_order=0):
    x, y, I, tx, ty = orb.state(t)
    F1, F2 = sys.forcing(orb.which)
    if dt_order:
        F1, F2 = F1.diff("t"), F2.diff("t")
    return (F1(x, y, t + theta) * -ty + F2(x, y, t + theta) * tx) * np.exp(-I)


def _check_weight(orb):
    w = np.exp(-orb.I[[0, -1]])
    if w.max() > WEIGHT_TOL * 1.0001:
        raise TruncationTooShort(f"weight at the cut is {w.max():.3g}; increase T_cut")


def melnikov_W(sys, orbit: HeteroclinicOrbit, theta, derivative=False):
    """W(theta) by adaptive quadrature over the truncated orbit."""
    _check_weight(orbit)
    d = int(bool(derivative))
    f = lambda t: float(_integrand(sys, orbit, t, theta, d))
    T = orbit.T_cut
    brk = np.linspace(-T, T, 9)
    total = 0.0
    for lo, hi in zip(brk[:-1], brk[1:]):
        v, _ = quad(f, lo, hi, limit=200, epsabs=1e-15, epsrel=1e-12)
        total += v
    return total


def _gauss_nodes(T, panels=400, order=16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-T, T, panels + 1)
    h = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def melnikov_table(sys, orbit, thetas, derivative=False):
    """W on many phases at once with a composite Gauss-Legendre rule."""
    _check_weight(orbit)
    t, w = _gauss_nodes(orbit.T_cut)
    th = np.atleast_1d(np.asarray(thetas, dtype=float))
    d = int(bool(derivative))
    vals = _integrand(sys, orbit, t[None, :], th[:, None], d)
    return vals @ w


def brute_force_W(sys, orbit, theta, nodes=1_000_000):
    t = np.linspace(-orbit.T_cut, orbit.T_cut, nodes)
    return float(np.trapezoid(_integrand(sys, orbit, t, theta), t))


# ---------------------------------------------------------------- classification


@dataclass
class SignReport:
    which: int
    w_min: float
    w_max: float
    zeros: list
    slopes: list
    pattern: str  # "same-sign", "sign-changing", "zero"
    nongeneric: bool


@dataclass
class Classification:
    case: str | None
    reports: tuple
    nongeneric: bool

    def __str__(self):
        lines = [f"configuration: {self.case or 'NonGeneric'}"]
        for r in self.reports:
            lines.append(f"  W{r.which}: {r.pattern}, min={r.w_min:.6g}, max={r.w_max:.6g}, "
                         f"zeros={len(r.zeros)}" + (" (nongeneric)" if r.nongeneric else ""))
        return "\n".join(lines)


CASES = {("sign-changing", "sign-changing"): "Case1", ("same-sign", "sign-changing"): "Case2",
         ("sign-changing", "same-sign"): "Case3", ("same-sign", "same-sign"): "Case4"}


def _sign_report(sys, orb, grid):
    th = np.linspace(0, sys.T, grid, endpoint=False)
    W = melnikov_table(sys, orb, th)
    scale = float(np.abs(W).max())
    if scale < 1e-12:
        return SignReport(orb.which, 0.0, 0.0, [], [], "zero", True)
    f = lambda s: float(melnikov_table(sys, orb, [s])[0])
    h = th[1] - th[0]
    ext = []
    for i, sgn in ((int(np.argmin(W)), 1.0), (int(np.argmax(W)), -1.0)):
        r = minimize_scalar(lambda s: sgn * f(s), bounds=(th[i] - h, th[i] + h), method="bounded",
                            options={"xatol": 1e-10})
        ext.append(min(sgn * r.fun, W[i]) if sgn > 0 else max(-r.fun, W[i]))
    wmin, wmax = ext
    zeros, slopes = [], []
    nxt = np.roll(W, -1)
    for i in np.nonzero(np.sign(W) != np.sign(nxt))[0]:
        z = brentq(f, th[i], th[i] + h, xtol=1e-13)
        zeros.append(z % sys.T)
        slopes.append(float(melnikov_table(sys, orb, [z], derivative=True)[0]))
    nongen = any(abs(s) < 1e-8 for s in slopes)
    pattern = "same-sign" if wmin * wmax > 0 else "sign-changing"
    if pattern == "same-sign" and min(abs(wmin), abs(wmax)) < 1e-8 * scale:
        nongen = True
    return SignReport(orb.which, wmin, wmax, zeros, slopes, pattern, nongen)


def classify_configuration(sys, grid=512, orbits=None) -> Classification:
    orbits = orbits or (shoot_heteroclinic(sys, 1), shoot_heteroclinic(sys, 2))
    reps = tuple(_sign_report(sys, o, grid) for o in orbits)
    nongen = any(r.nongeneric for r in reps)
    case = None if nongen else CASES[(reps[0].pattern, reps[1].pattern)]
    return Classification(case, reps, nongen)


def profile_from_melnikov(sys, which, order=8, grid=512, orbit=None, rtol=1e-3):
    """Fourier fit of theta -> W(theta), rescaled to a 2pi-periodic profile."""
    orbit = orbit or shoot_heteroclinic(sys, which)
    th = np.linspace(0, sys.T, grid, endpoint=False)
    W = melnikov_table(sys, orbit, th)
    prof, res = ForcingProfile.fit(th * (2 * math.pi / sys.T), W, order)
    if res > rtol * max(float(np.abs(W).max()), 1e-300) and res > 1e-14:
        raise PoorFit(f"Fourier fit residual {res:.3g} exceeds tolerance")
    return prof, res


def write_table_csv(sys, path, grid=512, orbits=None):
    orbits = orbits or (shoot_heteroclinic(sys, 1), shoot_heteroclinic(sys, 2))
    th = np.linspace(0, sys.T, grid, endpoint=False)
    W1 = melnikov_table(sys, orbits[0], th)
    W2 = melnikov_table(sys, orbits[1], th)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "W1", "W2"])
        for row in zip(th, W1, W2):
            w.writerow([repr(float(v)) for v in row])
    return th, W1, W2


# ---------------------------------------------------------------- fixture

def fixture_system(k=1.0, same_sign_amp=1.0, change_amp=1.0, omega=1.0):
    """Cycle made of the x-axis and the parabola y = k x (1 - x).

    Both curves are invariant. O1=(0,0) has rates (c, e) = (2, 1) and
    O2=(1,0) has (2, 1.5). The forcing vanishes to second order at both
    saddles; the first connection gets a same-sign forcing and the second a
    sign-changing one.
    """
    q = f"x*(1-x)"
    l1, l2 = "(1+x)", "(2-x/2)"
    g1 = f"-{l1}*(y-{k}*{q}) - {l2}*y"
    g2 = f"-{l2}*y*{k}*(1-2*x)"
    s = "(x**2+y**2)*((x-1)**2+y**2)"
    P2 = f"{same_sign_amp}*{s}*(1+0.5*cos({omega}*t))"
    Q2 = f"{change_amp}*{s}*cos({omega}*t)"
    return PlanarSystem(g1, g2, 0, P2, 0, Q2, T=2 * math.pi / omega, O1=(0, 0), O2=(1, 0))
