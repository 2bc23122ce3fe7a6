"""Symbolic combinatorics of the singular-limit map.

Monotonicity intervals and their transition matrix, the J_delta graph of
returns to the critical neighbourhood, complete accessibility, and the
location of superstable sinks near a chosen phase.

Intervals are lifts ``(lo, hi)`` with ``lo < hi``; arcs longer than 2pi
cover the whole circle.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NoIntersectionWithinCap
from .model import TWO_PI
from .singular import (CircleMap, _growth_fit, critical_set, mu_lattice, singular_limit_from_config)

EPS = 1e-12


def arc_contains(outer, inner, tol=EPS):
    """Is the circle arc ``inner`` inside the arc ``outer`` (both lifts)?"""
    u, v = outer
    s, t = inner
    if v - u >= TWO_PI - tol:
        return True
    if t - s > v - u + tol:
        return False
    k = math.ceil((u - s - tol) / TWO_PI)
    return t + TWO_PI * k <= v + tol


def arcs_intersect(A, B):
    u, v = A
    s, t = B
    if v - u >= TWO_PI or t - s >= TWO_PI:
        return True
    k = math.floor((u - s) / TWO_PI)
    for kk in (k - 1, k, k + 1):
        if s + TWO_PI * kk <= v and t + TWO_PI * kk >= u:
            return True
    return False


def image_interval(m: CircleMap, iv):
    a, b = float(m.lift(iv[0])), float(m.lift(iv[1]))
    return (a, b) if a <= b else (b, a)


def monotone_intervals(crit):
    c = sorted(crit)
    return [(c[i], c[i + 1] if i + 1 < len(c) else c[0] + TWO_PI) for i in range(len(c))]


@dataclass
class TransitionGraph:
    intervals: list
    Q: np.ndarray
    mixing_N: int | None
    lambda0: float | None = None
    h7a: bool | None = None  # exp(lambda0/3) > 2

    def to_dict(self):
        return {"intervals": [list(iv) for iv in self.intervals], "Q": self.Q.tolist(),
                "mixing_N": self.mixing_N, "lambda0": self.lambda0, "exp(lambda0/3) > 2": self.h7a}


def mixing_index(Q, cap=32):
    if Q.size == 0:
        return None
    P = Q.astype(bool)
    B = Q.astype(bool)
    for N in range(1, cap + 1):
        if P.all():
            return N
        P = (P.astype(int) @ B.astype(int)) > 0
    return None


def transition_matrix(m: CircleMap, lambda0=None, delta=0.01, horizon=30) -> TransitionGraph:
    """q_im = 1 iff J_m is inside h(J_i)."""
    crit = critical_set(m)
    J = monotone_intervals(crit)
    r = len(J)
    Q = np.zeros((r, r), dtype=int)
    for i, Ji in enumerate(J):
        img = image_interval(m, Ji)
        for k, Jm in enumerate(J):
            Q[i, k] = int(arc_contains(img, Jm))
    if r and lambda0 is None:
        lambda0, _ = _growth_fit(m, crit, delta, horizon)
    h7a = None if lambda0 is None or not r else bool(np.exp(lambda0 / 3) > 2)
    return TransitionGraph(J, Q, mixing_index(Q), lambda0 if r else None, h7a)


# ---------------------------------------------------------------- J_delta graph

@dataclass
class JDeltaEntry:
    vertex: int
    side: int  # -1 left of the critical point, +1 right
    n: int | None
    j: int | None
    case: int | None  # which construction case produced it
    options: list  # every admissible (n, j) found
    J: tuple | None  # subinterval of the one-sided component with h^n(J) = C_delta^(j)
    diameters: list  # |h^k(S)| along the tracked trajectory
    error: str | None = None


@dataclass
class JDeltaGraph:
    delta: float
    critical_points: list
    entries: list
    edges: list  # (i, j) pairs, one per vertex
    accessible: list = field(default_factory=list)

    @property
    def q(self):
        return len(self.critical_points)

    def to_dict(self):
        return {"delta": self.delta, "critical_points": self.critical_points,
                "edges": [list(e) for e in self.edges], "accessible": self.accessible,
                "entries": [{"vertex": e.vertex, "side": e.side, "n": e.n, "j": e.j, "case": e.case,
                             "options": [list(o) for o in e.options],
                             "J": None if e.J is None else list(e.J), "error": e.error} for e in self.entries]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def adjacency_text(self):
        lines = [f"# J_delta graph, delta={self.delta!r}, q={self.q}"]
        for v in range(self.q):
            outs = sorted({j for i, j in self.edges if i == v})
            mark = "*" if self.accessible and self.accessible[v] else " "
            lines.append(f"{v}{mark}: " + " ".join(map(str, outs)))
        return "\n".join(lines) + "\n"


def _pullback(m, chain, target):
    """Preimage of the lift arc ``target`` through monotone branches ``chain``."""
    u, v = target
    for iv in reversed(chain):
        lo, hi = iv
        f_lo, f_hi = float(m.lift(lo)), float(m.lift(hi))
        inc = f_hi >= f_lo
        # shift target onto the sheet covered by this branch's image
        base = min(f_lo, f_hi)
        k = math.floor((base - u) / TWO_PI)
        if u + TWO_PI * k < base - EPS:
            k += 1
        u2, v2 = u + TWO_PI * k, v + TWO_PI * k
        pre = [brentq(lambda s, y=y: float(m.lift(s)) - y, lo, hi, xtol=1e-15, rtol=1e-15) for y in (u2, v2)]
        u, v = (pre[0], pre[1]) if inc else (pre[1], pre[0])
    return (u, v)


def _track(m, crit, comps, J, S, crit_end, step_cap, depth_cap=20):
    """Iterate ``S`` until it meets C_delta; returns (n, options, case, chain, diam, error)."""
    chain = []
    I = S
    diam = [S[1] - S[0]]
    n = 0
    depth = 0
    while n < step_cap:
        chain.append(I)
        img = image_interval(m, I)
        f_end = float(m.lift(crit_end))
        n += 1
        diam.append(img[1] - img[0])
        hits = [k for k, C in enumerate(comps) if arcs_intersect(img, C)]
        if not hits:
            I, crit_end = img, f_end
            continue
        opts = [(n, k, None) for k, C in enumerate(comps) if arc_contains(img, C)]
        if opts:
            return n, opts, 1, chain, diam, None
        opts = []
        for l, Jl in enumerate(J):
            if arc_contains(img, Jl):
                himg = image_interval(m, Jl)
                for k, C in enumerate(comps):
                    if arc_contains(himg, C):
                        opts.append((n + 1, k, Jl))
        if opts:
            return n + 1, opts, 2, chain, diam, None
        # case 3: keep the piece of the image adjacent to the critical-value end, outside C_delta
        depth += 1
        if depth > depth_cap:
            return None, [], 3, chain, diam, "subdivision depth cap reached"
        lo, hi = img
        cut = []
        for C in comps:
            for kk in range(-1, 2):
                s, t = C[0] + TWO_PI * (math.floor((f_end - C[0]) / TWO_PI) + kk), None
                t = s + (C[1] - C[0])
                if lo <= t and s <= hi:
                    cut.append((s, t))
        if abs(f_end - lo) <= abs(f_end - hi):
            right = min([s for s, t in cut if s > f_end] + [hi])
            I = (f_end, right)
        else:
            left = max([t for s, t in cut if t < f_end] + [lo])
            I = (left, f_end)
        crit_end = f_end
        if I[1] - I[0] <= 0:
            return None, [], 3, chain, diam, "empty subdivision piece"
    return None, [], None, chain, diam, f"no return to C_delta within {step_cap} steps"


def build_jdelta(m: CircleMap, delta=1e-3, step_cap=50, raise_on_cap=False) -> JDeltaGraph:
    """Returns of the one-sided critical neighbourhoods to C_delta, as a graph."""
    crit = critical_set(m)
    q = len(crit)
    if q == 0:
        return JDeltaGraph(delta, [], [], [], [])
    gaps = np.diff(crit + [crit[0] + TWO_PI])
    if delta <= 0 or delta >= 0.5 * float(np.min(gaps)):
        raise ValueError(f"delta={delta} must be positive and below half the smallest critical gap")
    comps = [(c - delta, c + delta) for c in crit]
    J = monotone_intervals(crit)
    entries = []
    for i, c in enumerate(crit):
        for side in (-1, 1):
            S = (c, c + delta) if side > 0 else (c - delta, c)
            n, opts, case, chain, diam, err = _track(m, crit, comps, J, S, c, step_cap)
            Jsub = None
            if opts:
                nn, j, Jl = opts[0]
                ch = chain + ([Jl] if Jl is not None else [])
                try:
                    Jsub = _pullback(m, ch, comps[j])
                except ValueError:
                    Jsub = None
            entries.append(JDeltaEntry(i, side, n, opts[0][1] if opts else None, case,
                                       [(o[0], o[1]) for o in opts], Jsub, diam, err))
            if err and raise_on_cap:
                raise NoIntersectionWithinCap(f"vertex {i} side {side}: {err}")
    # one edge per vertex: choose among admissible options to maximise accessibility
    per_vertex = []
    for i in range(q):
        o = sorted({(e.n, e.j) for e in entries if e.vertex == i for _ in [0] if e.n} |
                   {opt for e in entries if e.vertex == i for opt in e.options})
        per_vertex.append([j for _, j in o] or [None])
    per_vertex = [sorted(set(v), key=lambda x: (x is None, x)) for v in per_vertex]
    best_edges, best_score = None, -1
    combos = itertools.product(*per_vertex) if math.prod(len(v) for v in per_vertex) <= 4096 else \
        [tuple(v[0] for v in per_vertex)]
    for choice in combos:
        edges = [(i, j) for i, j in enumerate(choice) if j is not None]
        acc = _accessible(q, edges)
        score = sum(acc)
        if score > best_score:
            best_edges, best_score = edges, score
    g = JDeltaGraph(delta, list(crit), entries, best_edges)
    g.accessible = _accessible(q, best_edges)
    return g


def _accessible(q, edges):
    adj = [[] for _ in range(q)]
    for i, j in edges:
        adj[i].append(j)
    reach = []
    for s in range(q):
        seen = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        reach.append(seen)
    return [all(v in reach[s] for s in range(q)) for v in range(q)]


def accessible_vertices(g: JDeltaGraph):
    """Vertices reachable from every vertex (a vertex trivially reaches itself)."""
    return {v for v, ok in enumerate(_accessible(g.q, g.edges)) if ok}


# ---------------------------------------------------------------- superstable sinks

@dataclass(frozen=True)
class SinkHit:
    a: float
    period: int
    orbit: tuple
    critical_point: float
    multiplier: float
    n: int
    mu: float

    def to_dict(self):
        return dict(self.__dict__, orbit=list(self.orbit))


def _orbit_lift(m, c, a, p):
    x = np.full(np.shape(a), float(c))
    for _ in range(p):
        x = m.lift(x, a)
    return x


def find_superstable_sinks(cfg, consts=None, a_hat=0.0, search_radius=0.5, period_cap=8, grid=4096,
                           per_period=4, mu_max=1e-4):
    """Phases near ``a_hat`` whose critical orbit is periodic, with lattice amplitudes.

    Hits are ordered by decreasing distance to ``a_hat`` and assigned
    consecutive lattice indices n, so the returned amplitudes decrease
    strictly while the phases approach ``a_hat``.
    """
    m = singular_limit_from_config(cfg, consts, a_hat, "F")
    crit = critical_set(m)
    if not crit:
        return []
    a = np.linspace(a_hat - search_radius, a_hat + search_radius, grid + 1)
    found = []
    for p in range(1, period_cap + 1):
        for c in crit:
            G = _orbit_lift(m, c, a, p) - c
            k = np.floor(G / TWO_PI)
            cells = np.nonzero(k[1:] != k[:-1])[0]
            cells = sorted(cells, key=lambda i: abs(a[i] - a_hat))
            taken = 0
            for i in cells:
                target = TWO_PI * max(k[i], k[i + 1])
                f = lambda s: float(_orbit_lift(m, c, s, p)) - c - target
                if f(a[i]) * f(a[i + 1]) > 0:
                    continue
                root = brentq(f, a[i], a[i + 1], xtol=1e-15, rtol=1e-15)
                mr = m.with_a(root)
                orbit = [float(c)]
                x = float(c)
                for _ in range(p - 1):
                    x = float(mr(x))
                    orbit.append(x)
                # minimal period only
                if any(min(abs(o - c) % TWO_PI, TWO_PI - abs(o - c) % TWO_PI) < 1e-8 for o in orbit[1:]):
                    continue
                mult = float(np.prod(np.abs(mr.deriv(np.array(orbit)))))
                if any(abs(root - f0[0]) < 1e-9 and abs(c - f0[2]) < 1e-9 for f0 in found):
                    continue
                found.append((root, p, c, tuple(orbit), mult))
                taken += 1
                if taken >= per_period:
                    break
    found.sort(key=lambda t: -abs(t[0] - a_hat))
    L = m.L
    n0 = max(1, math.ceil(-L * math.log(mu_max) / TWO_PI))
    out = []
    for idx, (root, p, c, orbit, mult) in enumerate(found):
        a_n = float(root % TWO_PI)
        n = n0 + idx
        out.append(SinkHit(a_n, p, orbit, float(c), mult, n, mu_lattice(cfg, consts, a_n, n, "F")))
    return out
