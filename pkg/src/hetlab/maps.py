"""Local passage maps, global transitions and the first-return maps F and G.

Angles are handled as unreduced lifts internally; public point-valued
functions reduce them to [0, 2pi).  The vectorized :class:`ReturnMap`
also supplies analytic Jacobians for Lyapunov computations.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OutOfSection, SingularHit, StableManifoldHit
from .model import TWO_PI, ModelConfig, derive_constants

SECTION_SIZE = 10.0
SINGULAR_TOL = 1e-14


@dataclass(frozen=True)
class CrossSection:
    id: str
    y_bounds: tuple

    def __post_init__(self):
        lo, hi = self.y_bounds
        if not lo <= hi:
            raise ValueError("empty section bounds")
        if self.id.startswith("Out") and not lo <= 0.0 <= hi:
            raise ValueError("Out sections must contain y=0")

    def contains(self, y):
        lo, hi = self.y_bounds
        return lo <= y <= hi


def default_sections(size=SECTION_SIZE):
    """In/Out sections with symmetric bounds (Out1 only has y >= 0)."""
    return {
        "In1": CrossSection("In1", (-size, size)),
        "In2": CrossSection("In2", (-size, size)),
        "Out1": CrossSection("Out1", (0.0, size)),
        "Out2": CrossSection("Out2", (-size, size)),
    }


SECTIONS = default_sections()


@dataclass(frozen=True)
class ReturnMapPoint:
    y: float
    theta: float
    section: str = "Out1"

    def __post_init__(self):
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @property
    def below_manifold(self):
        """True for points of an In section on the far side of the stable manifold."""
        return self.section.startswith("In") and self.y < 0


def circle_dist(a, b):
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi
    return np.abs(d)


# ---------------------------------------------------------------- vectorized factors
# Each factor returns (y, theta_lift, (j11, j12, j21, j22)).

def _loc(y, th, i, cfg, mnorm, omega, jac=True):
    """Local passage near saddle i; negative y handled by odd extension."""
    s = cfg.saddle(i)
    w1, w2 = cfg.corrections(i)
    if w1.is_zero() and w2.is_zero():
        c, r, dd, dr = s.c, s.e, 0.0, 0.0
    else:
        v1, d1 = w1.evaluate_many(th, (0, 1))
        v2, d2 = w2.evaluate_many(th, (0, 1))
        c, r = s.c + v1, s.e + v2
        dd = (d1 * r - c * d2) / r ** 2
        dr = d2
    d = c / r
    ay = np.abs(y)
    lnR = np.log(cfg.eps0 / mnorm) - np.log(ay)
    ybar = np.sign(y) * np.exp(np.log(cfg.eps0 / mnorm) - d * lnR)
    thbar = th + omega * lnR / r
    T = lnR / r
    J = None
    if jac:
        J = (ybar * d / y, -ybar * dd * lnR, -omega / (r * y), 1.0 - omega * lnR * dr / r ** 2)
    return ybar, thbar, T, J


def _glob(y, th, i, cfg, mu_i, mnorm, jac=True):
    """Global transition Out_i -> In_j."""
    if i == 1:
        b, phi, psi, xi = cfg.b1, cfg.phi1, cfg.psi1, cfg.xi1
    else:
        b, phi, psi, xi = cfg.b2, cfg.phi2, cfg.psi2, cfg.xi2
    ratio = mu_i / mnorm
    P, dP = phi.evaluate_many(th, (0, 1))
    yn = b * y + ratio * P
    if psi.is_zero():
        thn = th + xi
        dq = 0.0
    else:
        q, dq = psi.evaluate_many(th, (0, 1))
        thn = th + xi + mu_i * q
        dq = mu_i * dq
    J = (np.broadcast_to(b, np.shape(yn)), ratio * dP, 0.0, 1.0 + dq) if jac else None
    return yn, thn, J


def _mul(A, B):
    """2x2 product A @ B on tuples of arrays."""
    a11, a12, a21, a22 = A
    b11, b12, b21, b22 = B
    return (a11 * b11 + a12 * b21, a11 * b12 + a12 * b22, a21 * b11 + a22 * b21, a21 * b12 + a22 * b22)


class ReturnMap:
    """Vectorized first-return map.

    ``which='F'`` returns to Out1 (Loc1 . Psi21 . Loc2 . Psi12), ``which='G'``
    returns to Out2 (Loc2 . Psi12 . Loc1 . Psi21).  ``mu1``, ``mu2`` and
    ``omega`` may be arrays broadcasting against the point arrays, which
    lets one call advance many parameter cells at once.
    """

    def __init__(self, cfg: ModelConfig, which="F", mu1=None, mu2=None, omega=None, closed_form=None):
        if which not in ("F", "G"):
            raise ValueError("which must be 'F' or 'G'")
        self.cfg = cfg
        self.which = which
        self.mu1 = np.asarray(cfg.mu1 if mu1 is None else mu1, float)
        self.mu2 = np.asarray(cfg.mu2 if mu2 is None else mu2, float)
        self.omega = np.asarray(cfg.omega if omega is None else omega, float)
        self.mnorm = np.maximum(np.abs(self.mu1), np.abs(self.mu2))
        self.consts = derive_constants(cfg)
        own = self.mu1 if which == "F" else self.mu2
        other = self.mu2 if which == "F" else self.mu1
        if np.any(own <= 0):
            raise DomainError(f"return map {which} needs a positive amplitude on its own branch")
        can_close = cfg.is_simplified() and not np.any(other)
        self.closed = can_close if closed_form is None else (closed_form and can_close)

    @property
    def K(self):
        return self.consts.K_F if self.which == "F" else self.consts.K_G

    def step(self, y, th, jac=False):
        """Advance points; returns (y, theta_lift, ok, J, flight_time).

        ``ok`` is False where the orbit hits a stable manifold or the
        singular set; values there are meaningless.
        """
        y = np.asarray(y, float)
        th = np.asarray(th, float)
        if self.closed:
            return self._closed(y, th, jac)
        return self._composed(y, th, jac)

    def _closed(self, y, th, jac):
        cfg, k = self.cfg, self.consts
        if self.which == "F":
            mu, phi, psi = self.mu1, cfg.phi1, cfg.psi1
        else:
            mu, phi, psi = self.mu2, cfg.phi2, cfg.psi2
        P, dP = phi.evaluate_many(th, (0, 1))
        Y = y + P
        aY = np.abs(Y)
        if self.which == "F":
            ok = Y > 0
        else:
            ok = aY >= SINGULAR_TOL
        L = self.omega * self.K
        with np.errstate(divide="ignore", invalid="ignore"):
            y1 = np.sign(Y) * np.exp((k.delta - 1.0) * np.log(mu) + k.delta * np.log(aY))
            th1 = th + k.xi - L * np.log(mu) - L * np.log(aY)
            dq = 0.0
            if not psi.is_zero():
                q, dq = psi.evaluate_many(th, (0, 1))
                th1 = th1 + mu * q
                dq = mu * dq
            J = None
            if jac:
                g = k.delta * y1 / Y
                J = (g, g * dP, -L / Y, 1.0 + dq - L * dP / Y)
            # flight time through the two saddle passages
            r1, r2 = cfg.saddle1.e, cfg.saddle2.e
            lnR = -np.log(mu * aY)
            if self.which == "F":
                T = lnR / r2 + k.delta2 * lnR / r1
            else:
                T = lnR / r1 + k.delta1 * lnR / r2
        return y1, th1, ok, J, T

    def _composed(self, y, th, jac):
        cfg, m, om = self.cfg, self.mnorm, self.omega
        first, second = (1, 2) if self.which == "F" else (2, 1)
        mus = {1: self.mu1, 2: self.mu2}
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y1, t1, J1 = _glob(y, th, first, cfg, mus[first], m, jac)
            ok = y1 > 0 if self.which == "F" else np.abs(y1) >= SINGULAR_TOL
            y2, t2, T1, J2 = _loc(y1, t1, second, cfg, m, om, jac)
            y3, t3, J3 = _glob(y2, t2, second, cfg, mus[second], m, jac)
            if self.which == "F":
                ok &= y3 > 0
            else:
                ok &= np.abs(y3) >= SINGULAR_TOL
            y4, t4, T2, J4 = _loc(y3, t3, first, cfg, m, om, jac)
        J = None
        if jac:
            J = _mul(J4, _mul(J3, _mul(J2, J1)))
        ok &= np.isfinite(y4) & np.isfinite(t4)
        return y4, t4, ok, J, T1 + T2


# ---------------------------------------------------------------- point-valued API

def _check_in(p, sec):
    s = SECTIONS[sec]
    if not s.contains(p.y):
        raise OutOfSection(f"y={p.y:.6g} outside {sec} bounds {s.y_bounds}")


def local_map(i, p: ReturnMapPoint, cfg: ModelConfig, consts=None, signed=False):
    """Passage In_i -> Out_i near saddle i; returns (point, flight time).

    ``signed=True`` applies the odd extension to points below the stable
    manifold (used by the G return map).
    """
    if p.y == 0 or (p.y < 0 and not signed):
        raise StableManifoldHit(f"y={p.y:.6g} is not above the stable manifold of saddle {i}")
    _check_in(p, f"In{i}")
    m = cfg.mu_norm
    if m <= 0:
        raise DomainError("local map needs a nonzero forcing amplitude")
    yb, tb, T, _ = _loc(np.float64(p.y), np.float64(p.theta), i, cfg, m, cfg.omega, jac=False)
    return ReturnMapPoint(float(yb), float(tb), f"Out{i}"), float(T)


def _global(i, p, cfg):
    m = cfg.mu_norm
    if m <= 0:
        raise DomainError("global map needs a nonzero forcing amplitude")
    mu_i = cfg.mu1 if i == 1 else cfg.mu2
    yn, tn, _ = _glob(np.float64(p.y), np.float64(p.theta), i, cfg, mu_i, m, jac=False)
    j = 2 if i == 1 else 1
    q = ReturnMapPoint(float(yn), float(tn), f"In{j}")
    _check_in(q, q.section)
    return q


def global_map_12(p: ReturnMapPoint, cfg: ModelConfig) -> ReturnMapPoint:
    return _global(1, p, cfg)


def global_map_21(p: ReturnMapPoint, cfg: ModelConfig) -> ReturnMapPoint:
    return _global(2, p, cfg)


def compose_F(p, cfg, consts=None):
    """F evaluated factor by factor through the four maps."""
    q, _ = local_map(2, global_map_12(p, cfg), cfg, consts)
    r, _ = local_map(1, global_map_21(q, cfg), cfg, consts)
    return r


def compose_G(p, cfg, consts=None):
    q, _ = local_map(1, global_map_21(p, cfg), cfg, consts, signed=True)
    r, _ = local_map(2, global_map_12(q, cfg), cfg, consts, signed=True)
    return r


def _single(which, p, cfg, consts):
    if consts is None:
        consts = derive_constants(cfg)
    rm = ReturnMap(cfg, which)
    if not rm.closed:
        return compose_F(p, cfg, consts) if which == "F" else compose_G(p, cfg, consts)
    phi = cfg.phi1 if which == "F" else cfg.phi2
    Y = p.y + phi.evaluate(p.theta)
    if which == "F":
        if Y < 0:
            raise DomainError(f"negative base y + phi1 = {Y:.6g} for a fractional power")
        if Y == 0:
            raise StableManifoldHit("orbit enters the stable manifold of saddle 2")
    elif abs(Y) < SINGULAR_TOL:
        raise SingularHit(f"|y + phi2| = {abs(Y):.3g} at theta={p.theta:.12g}")
    y1, t1, ok, _, _ = rm.step(np.float64(p.y), np.float64(p.theta))
    return ReturnMapPoint(float(y1), float(t1), "Out1" if which == "F" else "Out2")


def return_map_F(p: ReturnMapPoint, cfg: ModelConfig, consts=None) -> ReturnMapPoint:
    """First return to Out1."""
    if cfg.mu1 <= 0:
        raise DomainError("F needs mu1 > 0")
    return _single("F", p, cfg, consts)


def return_map_G(p: ReturnMapPoint, cfg: ModelConfig, consts=None) -> ReturnMapPoint:
    """First return to Out2 (odd extension below the stable manifold)."""
    if cfg.mu2 <= 0:
        raise DomainError("G needs mu2 > 0")
    return _single("G", p, cfg, consts)


def jacobian(which, p: ReturnMapPoint, cfg: ModelConfig):
    """Analytic 2x2 Jacobian of F or G at ``p``."""
    _, _, ok, J, _ = ReturnMap(cfg, which).step(np.float64(p.y), np.float64(p.theta), jac=True)
    if not ok:
        raise StableManifoldHit("Jacobian requested on the stable manifold / singular set")
    return np.array([[J[0], J[1]], [J[2], J[3]]], dtype=float)


# ---------------------------------------------------------------- orbits

def iterate_orbit(cfg, which, p0: ReturnMapPoint, n):
    """Rows (n, y, theta, flight_time); flight time is that of the step into the point."""
    rm = ReturnMap(cfg, which)
    y, th = np.float64(p0.y), np.float64(p0.theta)
    rows = [(0, float(y), float(th % TWO_PI), 0.0)]
    for k in range(1, n + 1):
        y, th, ok, _, T = rm.step(y, th)
        if not ok:
            exc = StableManifoldHit if which == "F" else SingularHit
            raise exc(f"orbit left the return domain at iterate {k}")
        th = th % TWO_PI
        rows.append((k, float(y), float(th), float(T)))
    return rows


def write_orbit_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "y", "theta", "flight_time"])
        for n, y, th, T in rows:
            w.writerow([n, repr(y), repr(th), repr(T)])
