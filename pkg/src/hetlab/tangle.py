"""Tangle geometry for the second forcing alone (mu1 = 0, mu2 > 0).

A segment of the unstable manifold of the second cycle, entering near the
first saddle as the graph ``y = eta_u(s)``, is carried through the first
passage, the transition to the second saddle and the second passage.  Its
image on the outgoing section of the second saddle is a spiral that winds
around the annulus with a single fold.  As ``mu2`` shrinks the fold rotates
and the spiral touches the stable-manifold graph ``y = eta_s(theta)``
tangentially along a geometric sequence of parameters.

Also here: the homoclinic locus ``mu2 = C mu1**delta2`` and the stretching
of thin rectangles near the manifold.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, NoHomoclinicity, NumericallyDegenerate, SplitAtManifold
from .maps import _glob, _loc
from .model import TWO_PI, ForcingProfile, ModelConfig, derive_constants

MAX_SAMPLES = 2 ** 20


def default_eta_u(M=0.5):
    """Bump of height M on (0, pi), vanishing at both ends."""
    return (lambda s: M * np.sin(s)), (0.0, math.pi)


def default_eta_s():
    return ForcingProfile((), (0.3,), 0.0)


def half_return(cfg: ModelConfig, mu2, y, th):
    """In1 -> Out2 with mu1 = 0: first passage, transition, second passage."""
    m = abs(mu2)
    y1, t1, _, _ = _loc(y, th, 1, cfg, m, cfg.omega, jac=False)
    y2, t2, _ = _glob(y1, t1, 1, cfg, 0.0, m, jac=False)
    y3, t3, _, _ = _loc(y2, t2, 2, cfg, m, cfg.omega, jac=False)
    return y3, t3


@dataclass
class SpiralCurve:
    s: np.ndarray
    y: np.ndarray
    theta: np.ndarray  # unreduced lift
    fold: tuple | None  # (s*, y*, theta*)
    max_radius: float
    mu2: float
    degenerate: bool = False

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "y", "theta_lift"])
            for row in zip(self.s, self.y, self.theta):
                w.writerow([repr(float(v)) for v in row])


def _initial_params(lo, hi, n):
    """Uniform samples plus geometric clustering toward both ends."""
    span = hi - lo
    u = np.linspace(lo, hi, n)[1:-1]
    g = span * np.logspace(-12, -1, n // 4)
    return np.unique(np.concatenate([u, lo + g, hi - g]))


def _refine(f, s, max_step=0.05, cap=MAX_SAMPLES):
    y, th = f(s)
    while len(s) < cap:
        jump = np.abs(np.diff(th)) > max_step
        if not jump.any():
            break
        mids = 0.5 * (s[:-1] + s[1:])[jump]
        if len(s) + len(mids) > cap:
            mids = mids[: cap - len(s)]
        s = np.sort(np.concatenate([s, mids]))
        y, th = f(s)
    return s, y, th


def unstable_image_spiral(cfg, consts=None, eta_u=None, domain=None, n_samples=4096, M=0.5,
                          mu2=None, tail_tol=1e-6):
    """Image of the segment ``y = eta_u(s)``, ``s`` in ``domain``, on Out2.

    ``eta_u`` is a callable or a ForcingProfile; without it a bump of height
    ``M`` is used.  A segment that changes sign crosses the stable manifold
    of the first saddle; the pieces are then returned inside
    :class:`SplitAtManifold`.
    """
    mu2 = cfg.mu2 if mu2 is None else mu2
    if cfg.mu1 != 0:
        cfg = cfg.replace(mu1=0.0)
    if not mu2 > 0:
        raise DomainError("the spiral needs mu2 > 0")
    if eta_u is None:
        eta_u, dom = default_eta_u(M)
        domain = domain or dom
    domain = domain or (0.0, TWO_PI)
    f_eta = eta_u if callable(eta_u) else eta_u.evaluate
    lo, hi = map(float, domain)
    grid = np.linspace(lo, hi, 8 * n_samples)
    v = f_eta(grid)
    # values at round-off level (piece endpoints sitting on a root) carry no sign
    sgn = np.sign(np.where(np.abs(v) > 1e-12 * np.abs(v).max(), v, 0.0))
    nz = np.nonzero(sgn)[0]
    cuts = [(i, nz[k + 1]) for k, i in enumerate(nz[:-1]) if sgn[nz[k + 1]] * sgn[i] < 0]
    if len(cuts):
        zs = [brentq(lambda s: float(f_eta(s)), grid[i], grid[j]) for i, j in cuts]
        edges = [lo] + zs + [hi]
        pieces = [unstable_image_spiral(cfg, consts, f_eta, (a, b), n_samples, M, mu2, tail_tol)
                  for a, b in zip(edges[:-1], edges[1:])]
        raise SplitAtManifold(f"segment crosses the stable manifold at s={', '.join(f'{z:.6g}' for z in zs)}",
                              pieces)

    def image(s):
        e = f_eta(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return half_return(cfg, mu2, e, s)

    s = _initial_params(lo, hi, n_samples)
    s = s[np.abs(f_eta(s)) > 0]
    s, y, th = _refine(image, s)
    ok = np.isfinite(y) & np.isfinite(th)
    s, y, th = s[ok], y[ok], th[ok]
    # fold: interior extremum of the theta lift
    k = int(np.argmin(th))
    fold, degenerate = None, True
    if 0 < k < len(s) - 1:
        g = lambda x: float(image(np.array([x]))[1][0])
        r = minimize_scalar(g, bracket=(s[k - 1], s[k], s[k + 1]), method="golden", tol=1e-12)
        sf = float(r.x)
        yf, tf = image(np.array([sf]))
        fold, degenerate = (sf, float(yf[0]), float(tf[0])), False
    j = int(np.argmax(y))
    ymax = float(y[j])
    if 0 < j < len(s) - 1:
        r = minimize_scalar(lambda x: -float(image(np.array([x]))[0][0]),
                            bounds=(s[j - 1], s[j + 1]), method="bounded", options={"xatol": 1e-12})
        ymax = max(ymax, -float(r.fun))
    return SpiralCurve(s, y, th, fold, ymax, float(mu2), degenerate)


def spiral_tails_ok(sp: SpiralCurve, tol=1e-6):
    """Both ends of the spiral decay monotonically below ``tol``."""
    if sp.fold is None:
        return False
    k = int(np.searchsorted(sp.s, sp.fold[0]))
    left, right = sp.y[:k], sp.y[k:]
    jl, jr = int(np.argmax(left)), int(np.argmax(right))
    return (left[0] < tol and right[-1] < tol and np.all(np.diff(left[:jl + 1]) >= 0)
            and np.all(np.diff(right[jr:]) <= 0))


def spiral_exponent(cfg, consts=None, Ms=(0.3, 0.5, 0.7), mu2=None):
    """Log-slope of the maximal radius against the segment height M.

    Returns the overall least-squares slope and the slopes between
    consecutive M values.
    """
    R = [unstable_image_spiral(cfg, consts, M=M, mu2=mu2).max_radius for M in Ms]
    lM, lR = np.log(Ms), np.log(R)
    slope = float(np.polyfit(lM, lR, 1)[0])
    pair = np.diff(lR) / np.diff(lM)
    return slope, pair, np.array(R)


# ---------------------------------------------------------------- tangencies


@dataclass
class Tangency:
    mu2: float
    s: float
    theta: float
    quad_coeff: float
    zero: float  # zero of eta_s whose family this tangency belongs to

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class TangleScan:
    mu2_grid: np.ndarray
    counts: np.ndarray
    tangency_params: list
    hom_samples: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"mu2_grid": list(map(float, self.mu2_grid)), "counts": list(map(int, self.counts)),
                           "tangencies": [t.to_dict() for t in self.tangency_params],
                           "hom_samples": [list(map(float, p)) for p in self.hom_samples]}, indent=2)


class _Arc:
    """The fold neighbourhood of the spiral at a given mu2, with the signed gap to eta_s."""

    def __init__(self, cfg, eta, domain, eta_s, width, n):
        self.cfg, self.eta, self.eta_s, self.width, self.n = cfg, eta, eta_s, width, n
        self.domain = domain

    def image(self, s, mu2):
        with np.errstate(divide="ignore", invalid="ignore"):
            return half_return(self.cfg, mu2, self.eta(s), s)

    def bounds(self, mu2):
        lo, hi = self.domain
        g = lambda x: float(self.image(np.array([x]), mu2)[1][0])
        grid = np.linspace(lo, hi, 2049)[1:-1]
        th = self.image(grid, mu2)[1]
        k = int(np.argmin(th))
        r = minimize_scalar(g, bracket=(grid[max(k - 1, 0)], grid[k], grid[min(k + 1, len(grid) - 1)]),
                            method="golden", tol=1e-12)
        sf, tf = float(r.x), float(r.fun)
        h = lambda x: g(x) - tf - self.width
        a = brentq(h, lo + 1e-12, sf) if h(lo + 1e-12) > 0 else lo + 1e-12
        b = brentq(h, sf, hi - 1e-12) if h(hi - 1e-12) > 0 else hi - 1e-12
        return a, b, sf, tf

    def gap(self, s, mu2):
        y, th = self.image(s, mu2)
        return y - self.eta_s(th), th

    def count(self, mu2, n=None):
        a, b, _, _ = self.bounds(mu2)
        n = n or self.n
        while True:
            s = np.linspace(a, b, n)
            d, _ = self.gap(s, mu2)
            sg = np.sign(d)
            ch = np.nonzero(sg[1:] * sg[:-1] < 0)[0]
            # a sign change resolved by a single sample is suspicious; refine
            tight = np.any(np.diff(ch) <= 1) if len(ch) > 1 else False
            if not tight or n >= MAX_SAMPLES:
                break
            n *= 4
        if tight:
            raise NumericallyDegenerate("intersection count does not stabilise")
        return len(ch), sg[0], sg[-1], s, ch


def tangency_sequence(cfg, consts=None, eta_s=None, mu2_range=(1e-8, 1e-4), count=6, eta_u=None,
                      domain=None, M=0.5, width=1.5, n_arc=4001, family=0):
    """Decreasing list of tangency parameters for one zero of ``eta_s``.

    Parameters are scanned in ``u = -omega*K_G*ln(mu2)``, in which the fold
    rotates at unit speed.  Only the tangencies born where the fold meets
    the zero ``family`` of ``eta_s`` (ordered along the circle) are kept, so
    successive entries differ by one full rotation.
    """
    consts = consts or derive_constants(cfg)
    cfg = cfg.replace(mu1=0.0)
    eta_s = eta_s or default_eta_s()
    if eta_u is None:
        eta_u, dom = default_eta_u(M)
        domain = domain or dom
    domain = domain or (0.0, TWO_PI)
    eta = eta_u if callable(eta_u) else eta_u.evaluate
    L = cfg.omega * consts.K_G
    zeros = eta_s.zeros()
    if not zeros:
        return []
    z0 = zeros[family % len(zeros)]
    arc = _Arc(cfg, eta, domain, eta_s, width, n_arc)
    mu_hi, mu_lo = max(mu2_range), min(mu2_range)
    u0, u1 = -L * math.log(mu_hi), -L * math.log(mu_lo)
    mu_of = lambda u: math.exp(-u / L)
    steps = max(64, int((u1 - u0) / (TWO_PI / 400)))
    us = np.linspace(u0, u1, steps + 1)
    out = []
    prev = arc.count(mu_of(us[0]))
    for u_a, u_b in zip(us[:-1], us[1:]):
        cur = arc.count(mu_of(u_b))
        if abs(cur[0] - prev[0]) == 2 and cur[1] == prev[1] and cur[2] == prev[2]:
            t = _refine_tangency(arc, mu_of, u_a, u_b, prev, cur)
            if t is not None and abs(_circ(t.theta - z0)) < 0.5 * width + 0.5:
                t.zero = z0
                if not out or out[-1].mu2 > t.mu2 * (1 + 1e-9):
                    out.append(t)
                    if len(out) >= count:
                        break
        prev = cur
    return out


def _circ(x):
    return (x + math.pi) % TWO_PI - math.pi


def _refine_tangency(arc, mu_of, u_a, u_b, ca, cb):
    two = cb if cb[0] > ca[0] else ca
    u_two = u_b if two is cb else u_a
    n, _, _, s, ch = two
    # the pair of crossings absent on the other side
    other = ca if two is cb else cb
    s_other = other[3][other[4]] if len(other[4]) else np.array([])
    cand = s[ch]
    if len(s_other):
        dist = np.array([np.min(np.abs(c - s_other)) for c in cand])
        idx = np.argsort(-dist)[:2]
    else:
        idx = np.arange(min(2, len(cand)))
    if len(idx) < 2:
        return None
    p, q = np.sort(cand[idx])
    mid = 0.5 * (p + q)
    d_mid, _ = arc.gap(np.array([mid]), mu_of(u_two))
    sgn = 1.0 if d_mid[0] > 0 else -1.0
    half = max(q - p, 1e-9)
    lo_s, hi_s = p - 2 * half, q + 2 * half

    def ext(u):
        mu = mu_of(u)
        r = minimize_scalar(lambda x: -sgn * float(arc.gap(np.array([x]), mu)[0][0]),
                            bounds=(lo_s, hi_s), method="bounded", options={"xatol": 1e-13})
        return -r.fun, r.x

    fa, fb = ext(u_a)[0], ext(u_b)[0]
    if fa * fb > 0:
        return None
    u_t = brentq(lambda u: ext(u)[0], u_a, u_b, xtol=1e-13, rtol=1e-15)
    mu = mu_of(u_t)
    _, s_t = ext(u_t)
    hs = 1e-4 * max(hi_s - lo_s, 1e-6)
    d = arc.gap(np.array([s_t - hs, s_t, s_t + hs]), mu)[0]
    quad = 0.5 * (d[0] - 2 * d[1] + d[2]) / hs ** 2
    _, th = arc.image(np.array([s_t]), mu)
    return Tangency(mu, float(s_t), float(th[0]), float(quad), float("nan"))


def tangle_scan(cfg, consts=None, mu2_grid=None, **kw):
    consts = consts or derive_constants(cfg)
    mu2_grid = np.sort(np.asarray(mu2_grid if mu2_grid is not None else np.logspace(-4, -8, 200)))[::-1]
    eta_s = kw.get("eta_s") or default_eta_s()
    eta, dom = default_eta_u(kw.get("M", 0.5))
    arc = _Arc(cfg.replace(mu1=0.0), eta, dom, eta_s, kw.get("width", 1.5), kw.get("n_arc", 4001))
    counts = np.array([arc.count(m)[0] for m in mu2_grid])
    tans = tangency_sequence(cfg, consts, mu2_range=(mu2_grid.min(), mu2_grid.max()), **kw)
    return TangleScan(mu2_grid, counts, tans)


# ---------------------------------------------------------------- Hom curve


@dataclass
class HomCurve:
    mu1: np.ndarray
    mu2: np.ndarray
    slope: float
    C: float  # fitted prefactor in mu2 = C mu1**slope
    delta2: float

    def to_dict(self):
        return {"mu1": list(map(float, self.mu1)), "mu2": list(map(float, self.mu2)), "slope": self.slope,
                "C": self.C, "delta2": self.delta2}


def _hom_gap(cfg, mu1, mu2, th):
    """y on In1 of the image of Out1's zero section; zero means W^u(C1) meets W^s(C1)."""
    c = cfg.replace(mu1=mu1, mu2=mu2)
    m = c.mu_norm
    y0 = np.zeros_like(th)
    y1, t1, _ = _glob(y0, th, 1, c, mu1, m, jac=False)
    y2, t2, _, _ = _loc(y1, t1, 2, c, m, c.omega, jac=False)
    y3, _, _ = _glob(y2, t2, 2, c, mu2, m, jac=False)
    return y3 * m  # scale out the normalisation so the gap is continuous in mu2


def hom_point(cfg, mu1, n_theta=4096, mu2_cap=1e3):
    """Smallest mu2 at which the minimum over theta of the gap reaches zero."""
    if not mu1 > 0:
        raise DomainError("the homoclinic locus is defined for mu1 > 0")
    if cfg.phi2.minimum()[1] >= 0:
        raise NoHomoclinicity("phi2 never negative: the gap cannot vanish")
    th = np.linspace(0, TWO_PI, n_theta, endpoint=False)

    def gmin(mu2):
        g = _hom_gap(cfg, mu1, mu2, th)
        k = int(np.argmin(g))
        h = th[1] - th[0]
        r = minimize_scalar(lambda x: float(_hom_gap(cfg, mu1, mu2, np.array([x]))[0]),
                            bounds=(th[k] - h, th[k] + h), method="bounded", options={"xatol": 1e-13})
        return min(float(r.fun), float(g[k]))

    lo = 0.0
    if gmin(lo) <= 0:
        raise NoHomoclinicity("gap already non-positive at mu2 = 0")
    hi = max(mu1, 1e-300)
    while gmin(hi) > 0:
        hi *= 4
        if hi > mu2_cap:
            raise NoHomoclinicity(f"no sign change of the gap for mu2 up to {mu2_cap}")
    return brentq(gmin, lo, hi, xtol=1e-300, rtol=1e-13)


def hom_curve(cfg, consts=None, mu1_grid=None) -> HomCurve:
    consts = consts or derive_constants(cfg)
    mu1_grid = np.asarray(mu1_grid if mu1_grid is not None else np.logspace(-4, -2, 9), dtype=float)
    if np.any(mu1_grid <= 0):
        raise DomainError("the homoclinic locus is defined for mu1 > 0")
    mu2 = np.array([hom_point(cfg, m) for m in mu1_grid])
    slope, icpt = np.polyfit(np.log(mu1_grid), np.log(mu2), 1)
    return HomCurve(mu1_grid, mu2, float(slope), float(np.exp(icpt)), consts.delta2)


def hom_closed_form(cfg, mu1, n_theta=1 << 16):
    """min over theta with phi2 < 0 of b2 eps0^(1-d2) (mu1 phi1)^d2 / (-phi2(theta2)), simplified case."""
    d2 = cfg.saddle2.c / cfg.saddle2.e
    th = np.linspace(0, TWO_PI, n_theta, endpoint=False)
    P1 = cfg.phi1(th)
    t2 = th + cfg.xi1 + mu1 * cfg.psi1(th) - (cfg.omega / cfg.saddle2.e) * np.log(mu1 * P1 / cfg.eps0)
    B = cfg.phi2(t2)
    A = cfg.b2 * cfg.eps0 ** (1 - d2) * (mu1 * P1) ** d2
    neg = B < 0
    return float(np.min(A[neg] / -B[neg]))


def tangle_side_fraction(C, delta2, r):
    """Share of the quarter disk of radius r in (mu1, mu2) with mu2 >= C mu1**delta2."""
    # the curve leaves the disk at x*, where C x*^d = sqrt(r^2 - x*^2)
    x_star = brentq(lambda x: C * x ** delta2 - math.sqrt(max(r * r - x * x, 0.0)), 0.0, r)
    arc = lambda x: 0.5 * (x * math.sqrt(max(r * r - x * x, 0.0)) + r * r * math.asin(min(x / r, 1.0)))
    below = C * x_star ** (delta2 + 1) / (delta2 + 1) + arc(r) - arc(x_star)
    return 1.0 - below / (0.25 * math.pi * r * r)


# ---------------------------------------------------------------- rectangles


@dataclass
class StretchReport:
    theta_variation: float
    wraps: int
    y_contraction: float
    lower_edge: float


def pulse_rectangle_stretch(cfg, consts=None, rect=((0.0, math.pi), (1e-3, 0.1)), n_iterates=1, n=4001,
                            y_lo_cut=None):
    """Image of a thin rectangle ``[th0, th1] x [y0, y1]`` on Out2 under the G-type return.

    The image theta-lift total variation grows like ``omega*K_G*ln(1/y0)``
    as the lower edge approaches the stable manifold.
    """
    consts = consts or derive_constants(cfg)
    cfg = cfg.replace(mu1=0.0)
    (t0, t1), (y0, y1) = rect
    m = cfg.mu2
    if not m > 0:
        raise DomainError("rectangle stretching needs mu2 > 0")
    th = np.linspace(t0, t1, n)
    edges = [np.column_stack([th, np.full(n, y0)]), np.column_stack([np.full(n, t1), np.linspace(y0, y1, n)]),
             np.column_stack([th[::-1], np.full(n, y1)]), np.column_stack([np.full(n, t0), np.linspace(y1, y0, n)])]
    pts = np.concatenate(edges)
    Y, T = pts[:, 1], pts[:, 0]
    for _ in range(n_iterates):
        Y, T, _ = _glob(Y, T, 2, cfg, m, m, jac=False)
        keep = Y > (y_lo_cut or 0.0)
        Y, T = Y[keep], T[keep]
        if not len(Y):
            break
        Y, T = half_return(cfg, m, Y, T)
    if not len(T):
        return StretchReport(0.0, 0, 0.0, y0)
    var = float(np.ptp(T))
    ycon = float(np.ptp(Y) / max(y1 - y0, 1e-300)) if y1 > y0 else 0.0
    return StretchReport(var, int(var // TWO_PI), ycon, y0)


def write_tangencies_json(tans, path):
    with open(path, "w") as fh:
        json.dump([t.to_dict() for t in tans], fh, indent=2)
