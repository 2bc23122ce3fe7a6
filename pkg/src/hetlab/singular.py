"""One-dimensional singular-limit circle maps and their analysis.

The family is ``h_a(t) = t + xi + a - L ln|Phi(t)|`` (optionally plus a
``mu * psi(t)`` term).  ``a`` enters additively, so the critical set does
not depend on it; scans over ``a`` are vectorized.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .errors import ContinuationBroken, DegenerateCritical, UnreliableEstimate
from .maps import ReturnMap, SECTION_SIZE, circle_dist
from .model import TWO_PI, ForcingProfile, ModelConfig, dedupe_circle, derive_constants

CRIT_GRID = 4096
HIT_TOL = 1e-14
ZERO_DERIV = 1e-9  # |h'| below this along an orbit counts as landing on a critical point


@dataclass(frozen=True)
class CircleMap:
    """``t -> t + xi + a - L ln|profile(t)| (+ psi_coeff * psi(t))`` mod 2pi."""

    a: float
    L: float
    xi: float
    profile: ForcingProfile
    psi: ForcingProfile | None = None
    psi_coeff: float = 0.0
    singular: bool = False

    def with_a(self, a):
        return replace(self, a=float(a))

    @property
    def has_psi(self):
        return self.psi is not None and self.psi_coeff != 0.0 and not self.psi.is_zero()

    def lift(self, th, a=None):
        """Unreduced image; ``a`` may be an array overriding the stored phase."""
        a = self.a if a is None else a
        P = self.profile.evaluate(th)
        with np.errstate(divide="ignore"):
            out = th + self.xi + a - self.L * np.log(np.abs(P))
        if self.has_psi:
            out = out + self.psi_coeff * self.psi.evaluate(th)
        return out

    def __call__(self, th, a=None):
        return np.mod(self.lift(th, a), TWO_PI)

    def deriv(self, th):
        P, dP = self.profile.evaluate_many(th, (0, 1))
        out = 1.0 - self.L * dP / P
        if self.has_psi:
            out = out + self.psi_coeff * self.psi.evaluate(th, 1)
        return out

    def deriv2(self, th):
        P, dP, ddP = self.profile.evaluate_many(th, (0, 1, 2))
        out = -self.L * (ddP * P - dP ** 2) / P ** 2
        if self.has_psi:
            out = out + self.psi_coeff * self.psi.evaluate(th, 2)
        return out

    def step(self, th, a=None):
        """(reduced image, log|h'|, wrap count, singular-hit mask) for arrays."""
        P, dP = self.profile.evaluate_many(th, (0, 1))
        hit = np.abs(P) < HIT_TOL
        Ps = np.where(hit, 1.0, P)
        a = self.a if a is None else a
        lift = th + self.xi + a - self.L * np.log(np.abs(Ps))
        d = 1.0 - self.L * dP / Ps
        if self.has_psi:
            q, dq = self.psi.evaluate_many(th, (0, 1))
            lift = lift + self.psi_coeff * q
            d = d + self.psi_coeff * dq
        wraps = np.floor(lift / TWO_PI)
        with np.errstate(divide="ignore"):
            return lift - TWO_PI * wraps, np.log(np.abs(d)), wraps, hit


def singular_limit_from_config(cfg: ModelConfig, consts=None, a=0.0, which="F") -> CircleMap:
    consts = consts or derive_constants(cfg)
    if which == "F":
        return CircleMap(float(a), cfg.omega * consts.K_F, consts.xi, cfg.phi1, singular=False)
    if which == "G":
        return CircleMap(float(a), cfg.omega * consts.K_G, consts.xi, cfg.phi2, singular=True)
    raise ValueError("which must be 'F' or 'G'")


def mu_lattice(cfg, consts, a, n, which="F"):
    """Amplitude on the lattice where ``-omega K ln(mu) = 2 pi n + a``."""
    consts = consts or derive_constants(cfg)
    K = consts.K_F if which == "F" else consts.K_G
    if n < 1:
        raise ValueError("n must be >= 1")
    return float(np.exp(-(TWO_PI * n + a) / (cfg.omega * K)))


def lattice_phase(cfg, consts, mu, which="F"):
    """Inverse of :func:`mu_lattice`: the phase ``-omega K ln(mu)`` mod 2pi."""
    consts = consts or derive_constants(cfg)
    K = consts.K_F if which == "F" else consts.K_G
    return float(np.mod(-cfg.omega * K * np.log(mu), TWO_PI))


def singular_limit_convergence(cfg, consts, a, n_list, grid=(64, 256)):
    """Distance of F at mu1 = mu_(a,n) from the singular limit (0, h_a).

    ``f1_sup`` is sup|F1| over the section grid y in [0, C'], theta in
    [0, 2pi).  ``f2_dist`` is the sup circle distance between F2 and h_a
    over the image band y in [0, min(C', f1_sup)], where returning orbits
    actually live.
    """
    consts = consts or derive_constants(cfg)
    if cfg.mu2 != 0:
        raise ValueError("convergence table is defined on the mu2 = 0 axis")
    ny, nt = grid
    th = np.linspace(0.0, TWO_PI, nt, endpoint=False)
    h = singular_limit_from_config(cfg, consts, a, "F")
    href = h(th)
    rows = []
    for n in n_list:
        mu = mu_lattice(cfg, consts, a, n, "F")
        rm = ReturnMap(cfg.replace(mu1=mu), "F")
        Y, T = np.meshgrid(np.linspace(0.0, SECTION_SIZE, ny), th, indexing="ij")
        f1, _, _, _, _ = rm.step(Y, T)
        f1_sup = float(np.max(np.abs(f1)))
        band = min(SECTION_SIZE, f1_sup)
        Y2, T2 = np.meshgrid(np.linspace(0.0, band, ny), th, indexing="ij")
        _, f2, _, _, _ = rm.step(Y2, T2)
        dist = float(np.max(circle_dist(f2, href[None, :])))
        rows.append({"n": int(n), "mu1": mu, "f1_sup": f1_sup, "f2_dist": dist})
    return rows


def critical_set(m: CircleMap, grid=CRIT_GRID):
    """Zeros of h' on [0, 2pi), refined to 1e-12; poles of a singular map are skipped."""
    t = np.linspace(0.0, TWO_PI, grid + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = m.deriv(t)
    roots = []
    for i in range(grid):
        if not (np.isfinite(d[i]) and np.isfinite(d[i + 1])):
            continue
        if d[i] == 0.0:
            roots.append(t[i])
        elif d[i] * d[i + 1] < 0:
            r = brentq(m.deriv, t[i], t[i + 1], xtol=1e-14, rtol=1e-15)
            # a sign change across a pole is not a critical point
            if abs(m.deriv(r)) < 1e-6:
                roots.append(_newton_polish(m, r))
    roots = dedupe_circle(roots)
    for r in roots:
        if abs(m.deriv2(r)) < 1e-8:
            raise DegenerateCritical(f"h'' = {m.deriv2(r):.3g} at critical point {r:.12g}")
    return roots


def _newton_polish(m, r):
    for _ in range(3):
        d2 = m.deriv2(r)
        if d2 == 0:
            break
        step = m.deriv(r) / d2
        if abs(step) > 1e-8:
            break
        r -= step
    return float(r)


@dataclass(frozen=True)
class DiffeoReport:
    is_diffeomorphism: bool
    margin: float  # min h'
    sup_log_derivative: float  # sup Phi'/Phi
    twist_lhs: float  # L * sup Phi'/Phi, must be < 1

    def __bool__(self):
        return self.is_diffeomorphism


def is_diffeomorphism(m: CircleMap) -> DiffeoReport:
    if m.singular:
        return DiffeoReport(False, float("-inf"), float("inf"), float("inf"))
    sup = m.profile.sup_log_derivative() if not m.profile.is_constant() else 0.0
    t = np.linspace(0.0, TWO_PI, CRIT_GRID, endpoint=False)
    d = m.deriv(t)
    margin = float(np.min(d))
    if not m.has_psi:
        margin = min(margin, 1.0 - m.L * sup)
    return DiffeoReport(margin > 0, margin, sup, m.L * sup)


@dataclass(frozen=True)
class RotationEstimate:
    rho: float
    error_bound: float
    iterates: int
    rational_candidate: tuple | None  # (p, q) with q <= 100 inside the error bound

    def __float__(self):
        return self.rho


def rotation_number(m: CircleMap, iterates=10_000, theta0=0.0) -> RotationEstimate:
    """Birkhoff estimate of the rotation number, error bound 1/n."""
    th = np.float64(theta0 % TWO_PI)
    turns = 0.0
    for _ in range(iterates):
        th, _, w, _ = m.step(th)
        turns += w
    rho_lift = (turns * TWO_PI + th - theta0 % TWO_PI) / (TWO_PI * iterates)
    rho = float(rho_lift % 1.0)
    bound = 1.0 / iterates
    frac = Fraction(rho).limit_denominator(100)
    cand = (frac.numerator, frac.denominator) if abs(float(frac) - rho) <= bound else None
    return RotationEstimate(rho, bound, iterates, cand)


def lyapunov_many(m: CircleMap, a_values, theta0=0.1, burn_in=1000, n=10_000):
    """Vectorized Lyapunov exponents over many phases; returns (values, hits)."""
    a = np.atleast_1d(np.asarray(a_values, float))
    th = np.full(a.shape, float(theta0) % TWO_PI)
    hits = np.zeros(a.shape, int)
    acc = np.zeros(a.shape)
    zero = np.zeros(a.shape, bool)
    for k in range(burn_in + n):
        new, lg, _, hit = m.step(th, a)
        new = np.where(hit, (th + 1e-7) % TWO_PI, new)
        if k >= burn_in:
            hits += hit
            zero |= (lg < np.log(ZERO_DERIV)) & ~hit
            acc += np.where(hit, 0.0, lg)
        th = new
    counted = np.maximum(n - hits, 1)
    lam = acc / counted
    lam[zero] = -np.inf
    return lam, hits


def lyapunov_1d(m: CircleMap, theta0=0.1, burn_in=1000, n=10_000, return_hits=False):
    """Mean of ln|h'| along an orbit; -inf when the orbit lands on a critical point."""
    lam, hits = lyapunov_many(m, [m.a], theta0, burn_in, n)
    if hits[0] > 0.01 * n:
        raise UnreliableEstimate(f"{hits[0]} of {n} iterates hit the singular set")
    return (float(lam[0]), int(hits[0])) if return_hits else float(lam[0])


def classify_1d(lam):
    if lam > 0.02:
        return "chaotic"
    if lam < -0.05:
        return "periodic-sink"
    return "neutral"


def scan_a(m: CircleMap, a_values, theta0=0.1, burn_in=1000, n=10_000):
    """Rows (a, lyapunov, classification, singular_hits)."""
    lam, hits = lyapunov_many(m, a_values, theta0, burn_in, n)
    return [(float(a), float(l), classify_1d(l) if h <= 0.01 * n else "unreliable", int(h))
            for a, l, h in zip(np.atleast_1d(a_values), lam, hits)]


def write_scan_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "lyapunov", "classification", "singular_hits"])
        for a, l, c, h in rows:
            w.writerow([repr(a), repr(l), c, h])


# ---------------------------------------------------------------- Misiurewicz / CE

def dist_to_set(th, pts):
    if not len(pts):
        return np.full(np.shape(th), np.inf)
    return np.min(circle_dist(np.asarray(th)[..., None], np.asarray(pts)), axis=-1)


@dataclass(frozen=True)
class MisiurewiczCertificate:
    delta0: float
    b0: float
    lambda0: float
    horizon: int
    status: str  # certified-to-horizon | refuted | inconclusive
    critical_points: tuple = ()
    witness: dict | None = None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {"delta0": self.delta0, "b0": self.b0, "lambda0": self.lambda0, "horizon": self.horizon,
                "status": self.status, "critical_points": list(self.critical_points),
                "witness": self.witness, "flags": self.flags}


def _growth_fit(m, crit, delta, horizon, n_starts=2000, min_samples=20):
    """Least-squares growth rate of ln|(h^n)'| along orbit segments outside C_delta.

    The fit uses the lower envelope (minimum over sampled segments of each
    length), so a sink anywhere outside C_delta shows up as lambda0 <= 0.
    Returns (lambda0, b0) with b0 the largest constant for which both growth
    inequalities (with the delta factor on every segment, without it on
    segments that land back in C_delta) hold on the envelope.
    """
    t = (np.arange(n_starts) + 0.5) * TWO_PI / n_starts
    th = t[dist_to_set(t, crit) >= delta]
    alive = np.ones(th.shape, bool)
    acc = np.zeros(th.shape)
    ns, logs, ends = [], [], []
    for n in range(1, horizon + 1):
        new, lg, _, _ = m.step(th)
        acc = acc + lg
        d = dist_to_set(new, crit)
        ns.append(np.full(alive.sum(), n))
        logs.append(acc[alive])
        ends.append(d[alive] < delta)
        alive = alive & (d >= delta)
        th = new
        if not alive.any():
            break
    # lower envelope of the log-derivative for each segment length
    env_n, env_l, env_b = [], [], []
    for nn, lg, end in zip(ns, logs, ends):
        if len(lg) < min_samples:
            break
        env_n.append(nn[0])
        env_l.append(np.min(lg))
        env_b.append(np.min(lg[end]) if end.any() else np.inf)
    if len(env_n) < 2:
        return 0.0, 0.0
    env_n, env_l, env_b = map(np.asarray, (env_n, env_l, env_b))
    lam0, _ = np.polyfit(env_n, env_l, 1)
    ln_b0 = min(np.min(env_l - lam0 * env_n) - np.log(delta), np.min(env_b - lam0 * env_n))
    return float(lam0), float(np.exp(ln_b0))


def misiurewicz_check(m: CircleMap, delta0=0.01, horizon=50, n_starts=2000) -> MisiurewiczCertificate:
    """Finite-horizon check of the Misiurewicz conditions for ``m``."""
    crit = critical_set(m)
    if not crit:
        return MisiurewiczCertificate(delta0, 1.0, 0.0, horizon, "certified-to-horizon", (),
                                      None, {"vacuous": True})
    # (1a) no degenerate critical behaviour inside C_delta0
    for c in crit:
        s = np.linspace(c - delta0, c + delta0, 41)
        if np.min(np.abs(m.deriv2(s))) < 1e-8:
            return MisiurewiczCertificate(delta0, 0.0, 0.0, horizon, "refuted", tuple(crit),
                                          {"kind": "flat critical region", "critical_point": c})
    lam0, b0 = _growth_fit(m, crit, delta0, horizon, n_starts)
    flags = {"exp(lambda0) > 1": bool(np.exp(lam0) > 1), "exp(lambda0/3) > 2": bool(np.exp(lam0 / 3) > 2),
             "exp(lambda0) > 2": bool(np.exp(lam0) > 2), "lambda bound (lambda0/5)": lam0 / 5}
    # (1b) critical orbits stay delta0 away from C
    for j, c in enumerate(crit):
        th = np.float64(c)
        for n in range(1, horizon + 1):
            th = m(th)
            d = float(dist_to_set(th, crit))
            if d < delta0:
                return MisiurewiczCertificate(delta0, b0, lam0, horizon, "refuted", tuple(crit),
                                              {"kind": "critical recurrence", "critical_index": j,
                                               "n": n, "point": float(th), "distance": d}, flags)
    if lam0 <= 0:
        return MisiurewiczCertificate(delta0, b0, lam0, horizon, "refuted", tuple(crit),
                                      {"kind": "derivative growth", "lambda0": lam0}, flags)
    # (2a) along the critical orbits themselves, which lie outside C_delta0 by (1b)
    for j, c in enumerate(crit):
        th, acc = m(np.float64(c)), 0.0
        for n in range(1, horizon + 1):
            th, lg, _, _ = m.step(th)
            acc += float(lg)
            if acc < np.log(b0 * delta0) + lam0 * n:
                return MisiurewiczCertificate(delta0, b0, lam0, horizon, "refuted", tuple(crit),
                                              {"kind": "derivative growth on critical orbit",
                                               "critical_index": j, "n": n, "log_derivative": acc}, flags)
    return MisiurewiczCertificate(delta0, b0, lam0, horizon, "certified-to-horizon", tuple(crit), None, flags)


@dataclass(frozen=True)
class CEScan:
    a_grid: np.ndarray
    passed: np.ndarray  # boolean mask over a_grid
    lam: float
    alpha: float
    horizon: int

    @property
    def a_values(self):
        return self.a_grid[self.passed]

    @property
    def fraction(self):
        return float(np.mean(self.passed)) if len(self.passed) else 0.0


def ce_parameter_scan(family: CircleMap, lam, alpha, horizon=30, delta0=0.01, b0=1.0, grid=1024):
    """Grid estimate of the set of phases satisfying both Collet-Eckmann conditions.

    Every critical point must satisfy, for n = 1..horizon,
    dist(h^n(c), C) >= min(delta0/2, exp(-alpha n)) and
    |(h^n)'(h(c))| >= 2 b0 delta0 exp(lam n).
    """
    a = np.arange(grid) * TWO_PI / grid
    crit = critical_set(family)
    ok = np.ones(grid, bool)
    if not crit:
        return CEScan(a, ok, lam, alpha, horizon)
    floor = np.log(2 * b0 * delta0)
    for c in crit:
        th, _, _, _ = family.step(np.full(grid, c), a)  # h(c)
        acc = np.zeros(grid)
        for n in range(1, horizon + 1):
            ok &= dist_to_set(th, crit) >= min(delta0 / 2, np.exp(-alpha * n))
            th, lg, _, _ = family.step(th, a)
            acc += lg
            ok &= acc >= floor + lam * n
    return CEScan(a, ok, lam, alpha, horizon)


# ---------------------------------------------------------------- transversality

def monotone_interval(crit, th):
    """Lift interval (lo, hi) between consecutive critical points containing ``th``."""
    c = np.sort(np.asarray(crit) % TWO_PI)
    x = th % TWO_PI
    k = np.searchsorted(c, x, side="right")
    lo = c[k - 1] if k > 0 else c[-1] - TWO_PI
    hi = c[k] if k < len(c) else c[0] + TWO_PI
    base = th - x
    return base + lo, base + hi, int((k - 1) % len(c))


def _itinerary(m, c, depth):
    """Orbit of h(c): reduced points, monotone-interval indices and wrap counts."""
    crit = critical_set(m)
    pts, idx, wraps = [], [], []
    x = float(m(c))
    for _ in range(depth + 1):
        pts.append(x)
        idx.append(monotone_interval(crit, x)[2])
        lift = float(m.lift(x))
        wraps.append(np.floor(lift / TWO_PI))
        x = lift - TWO_PI * wraps[-1]
    return crit, pts, idx, wraps


def _beta(m, a, crit, pts, idx, wraps):
    """Point with the same itinerary as the reference orbit, for phase ``a``."""
    ma = m.with_a(a)
    depth = len(pts) - 1
    y = pts[depth]
    for k in range(depth - 1, -1, -1):
        lo, hi, j = monotone_interval(crit, pts[k])
        if j != idx[k]:
            raise ContinuationBroken(f"itinerary mismatch at depth {k}")
        target = y + TWO_PI * wraps[k]
        f = lambda s: float(ma.lift(s)) - target
        eps = 1e-13
        flo, fhi = f(lo + eps), f(hi - eps)
        if flo * fhi > 0:
            raise ContinuationBroken(f"preimage left monotone branch at depth {k}")
        y = brentq(f, lo + eps, hi - eps, xtol=1e-15, rtol=1e-15)
        if monotone_interval(crit, y)[2] != idx[k]:
            raise ContinuationBroken(f"itinerary mismatch at depth {k}")
    return y


@dataclass(frozen=True)
class TransversalityRecord:
    critical_point: float
    direct_term: float  # d/da h_a(c(a))
    beta_derivative: float  # d/da beta_c(a)
    xi: float
    passed: bool


def admissibility_transversality(family: CircleMap, a_star, h_step=1e-6, depth=20, tol=1e-6):
    """Central-difference parameter transversality for each critical point."""
    m = family.with_a(a_star)
    crit = critical_set(m)
    out = []
    for c in crit:
        crit_, pts, idx, wraps = _itinerary(m, c, depth)
        b_plus = _beta(m, a_star + h_step, crit_, pts, idx, wraps)
        b_minus = _beta(m, a_star - h_step, crit_, pts, idx, wraps)
        # beta shares the lift sheet of h_a*(c), so compare lifts directly
        dbeta = (b_plus - b_minus) / (2 * h_step)
        cp = critical_set(m.with_a(a_star + h_step))
        cm = critical_set(m.with_a(a_star - h_step))
        c_plus = min(cp, key=lambda x: float(circle_dist(x, c)))
        c_minus = min(cm, key=lambda x: float(circle_dist(x, c)))
        direct = (float(m.lift(c_plus, a_star + h_step)) - float(m.lift(c_minus, a_star - h_step))) / (2 * h_step)
        xi = direct - dbeta
        out.append(TransversalityRecord(float(c), float(direct), float(dbeta), float(xi), abs(xi) >= tol))
    return out
