"""Attractor classification of the two-dimensional return maps and parameter sweeps.

Everything runs vectorized over (cells x seeds): a single ReturnMap with
array-valued amplitudes advances all lanes together. Each lane owns its
initial condition, drawn from a generator keyed by (seed, cell index), so
results do not depend on how cells are batched or threaded.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NoHomoclinicity, NotAGraph, UnreliableEstimate
from .maps import ReturnMap
from .model import TWO_PI, ForcingProfile, ModelConfig, derive_constants

LABELS = ("invariant-curve", "periodic-sink", "chaotic", "singular-dominated", "undetermined")
EPS_CURVE, EPS_SINK, EPS_CHAOS = 0.02, 0.05, 0.02
PERIOD_CAP = 64
PERIOD_TOL = 1e-6
TAIL = 1000
SKIP_LIMIT = 0.1
GOLD = 0.5 * (math.sqrt(5) - 1)


@dataclass
class AttractorClass:
    label: str
    lyapunov_max: float
    lyapunov_2: float = float("nan")
    winding: int = 0
    period: int | None = None
    skip_fraction: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class LaneRun:
    lam1: np.ndarray
    lam2: np.ndarray
    skips: np.ndarray
    tail_y: np.ndarray  # (TAIL, lanes)
    tail_th: np.ndarray  # (TAIL, lanes) unreduced lifts


def run_lanes(rmap: ReturnMap, y0, th0, burn_in=2000, n=20_000, tail=TAIL):
    """Iterate all lanes, accumulating both Lyapunov exponents by 2x2 QR."""
    y, th = np.array(y0, float), np.array(th0, float)
    shape = np.broadcast_shapes(y.shape, th.shape, rmap.mu1.shape, rmap.mu2.shape, rmap.omega.shape)
    y, th = np.broadcast_to(y, shape).copy(), np.broadcast_to(th, shape).copy()
    vx, vy = np.ones(shape), np.zeros(shape)
    s1 = np.zeros(shape)
    sdet = np.zeros(shape)
    skips = np.zeros(shape, dtype=int)
    kept = np.zeros(shape, dtype=int)
    tail = min(tail, n)
    ty = np.empty((tail,) + shape)
    tt = np.empty((tail,) + shape)
    total = burn_in + n
    for k in range(total):
        y1, t1, ok, J, _ = rmap.step(y, th, jac=k >= burn_in)
        bad = ~ok
        if bad.any():
            # restart the lane next to where it was; the step is not counted
            y1 = np.where(bad, y, y1)
            t1 = np.where(bad, th + 1e-7 * (1 + GOLD * (k % 7)), t1)
            if k >= burn_in:
                skips += bad
        if k >= burn_in:
            a, b, c, d = (np.broadcast_to(x, shape) for x in J)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                wx, wy = a * vx + b * vy, c * vx + d * vy
                nrm = np.hypot(wx, wy)
                good = ok & np.isfinite(nrm) & (nrm > 0)
                s1 += np.where(good, np.log(np.where(good, nrm, 1.0)), 0.0)
                det = np.abs(a * d - b * c)
                sdet += np.where(good, np.log(np.where(good & (det > 0), det, 1.0)), 0.0)
                vx = np.where(good, wx / np.where(good, nrm, 1.0), vx)
                vy = np.where(good, wy / np.where(good, nrm, 1.0), vy)
            kept += good
            j = k - (total - tail)
            if j >= 0:
                ty[j], tt[j] = y1, t1
        y, th = y1, t1
        # keep lifts bounded without losing the displacement record
        if k < total - tail - 1:
            th = np.mod(th, TWO_PI)
    kept = np.maximum(kept, 1)
    lam1 = s1 / kept
    lam2 = sdet / kept - lam1
    return LaneRun(lam1, lam2, skips, ty, tt)


def lyapunov_2d(rmap: ReturnMap, p0=(0.5, 0.1), burn_in=2000, n=20_000):
    """(Lambda1, Lambda2) for one orbit; raises if more than 10% of steps were skipped."""
    r = run_lanes(rmap, p0[0], p0[1], burn_in, n)
    frac = float(np.max(r.skips)) / n
    if frac > SKIP_LIMIT:
        raise UnreliableEstimate(f"{frac:.1%} of iterates hit a stable manifold or the singular set")
    return float(np.ravel(r.lam1)[0]), float(np.ravel(r.lam2)[0])


def detect_period(ty, tt, cap=PERIOD_CAP, tol=PERIOD_TOL):
    """Smallest p <= cap with the tail repeating after p steps (theta mod 2pi)."""
    scale = max(float(np.max(np.abs(ty))), 1e-300)
    Y = ty / scale
    T = np.mod(tt, TWO_PI)
    m = len(Y)
    for p in range(1, min(cap, m // 3) + 1):
        dy = np.abs(Y[p:] - Y[:-p])
        dt = np.abs(T[p:] - T[:-p])
        dt = np.minimum(dt, TWO_PI - dt)
        if np.max(dy[-2 * p:]) < tol and np.max(dt[-2 * p:]) < tol:
            return p
    return None


def winding_number(tt, coverage=0.9):
    """1 when the tail's angles fill the circle (largest circular gap < 10%)."""
    th = np.sort(np.mod(tt, TWO_PI))
    if len(th) < 2:
        return 0
    gaps = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
    return int(TWO_PI - gaps.max() >= coverage * TWO_PI)


def _label(lam, lam2, skip, ty, tt, which, eps):
    e_curve, e_sink, e_chaos = eps
    if skip > SKIP_LIMIT:
        return AttractorClass("singular-dominated" if which == "G" else "undetermined", lam, lam2, 0, None, skip)
    per = detect_period(ty, tt)
    wind = winding_number(tt) if per is None else 0
    if lam > e_chaos:
        lab = "chaotic"
    elif lam < -e_sink and per is not None:
        lab = "periodic-sink"
    elif abs(lam) <= e_curve and wind == 1:
        lab = "invariant-curve"
    else:
        lab = "undetermined"
    return AttractorClass(lab, lam, lam2, wind, per if lab == "periodic-sink" else None, skip)


def _initial(seed, cell, seeds):
    g = np.random.default_rng([int(seed), int(cell)])
    return g.uniform(0.05, 1.0, seeds), g.uniform(0.0, TWO_PI, seeds)


def classify_cells(cfg: ModelConfig, which, mu1, mu2, omega=None, seeds=8, burn_in=2000, n=20_000,
                   seed=0, eps=(EPS_CURVE, EPS_SINK, EPS_CHAOS), cell_ids=None):
    """Classify a batch of parameter cells for one return map."""
    mu1 = np.atleast_1d(np.asarray(mu1, float))
    mu2 = np.atleast_1d(np.asarray(mu2, float))
    om = np.atleast_1d(np.asarray(cfg.omega if omega is None else omega, float))
    C = max(len(mu1), len(mu2), len(om))
    mu1, mu2, om = (np.broadcast_to(v, (C,)) for v in (mu1, mu2, om))
    ids = np.arange(C) if cell_ids is None else np.asarray(cell_ids)
    Y0 = np.empty((C, seeds))
    T0 = np.empty((C, seeds))
    for c in range(C):
        Y0[c], T0[c] = _initial(seed, ids[c], seeds)
    if which == "G":
        Y0 = Y0 - 0.5  # Out2 carries both signs
    rmap = ReturnMap(cfg, which, mu1=mu1[:, None], mu2=mu2[:, None], omega=om[:, None])
    r = run_lanes(rmap, Y0, T0, burn_in, n)
    out = []
    for c in range(C):
        per_seed = [_label(float(r.lam1[c, s]), float(r.lam2[c, s]), r.skips[c, s] / n,
                           r.tail_y[:, c, s], r.tail_th[:, c, s], which, eps) for s in range(seeds)]
        labs = {p.label for p in per_seed}
        lam = float(np.mean([p.lyapunov_max for p in per_seed]))
        lam2 = float(np.mean([p.lyapunov_2 for p in per_seed]))
        skip = float(np.max([p.skip_fraction for p in per_seed]))
        if len(labs) == 1:
            lab = labs.pop()
            pers = [p.period for p in per_seed if p.period]
            per = min(pers) if pers else None
            wind = per_seed[0].winding
        else:
            lab, per, wind = "undetermined", None, 0
        out.append(AttractorClass(lab, lam, lam2, wind, per, skip))
    return out


def classify_cell(cfg: ModelConfig, which="F", seeds=8, burn_in=2000, n=20_000, seed=0,
                  eps=(EPS_CURVE, EPS_SINK, EPS_CHAOS)) -> AttractorClass:
    return classify_cells(cfg, which, cfg.mu1, cfg.mu2, cfg.omega, seeds, burn_in, n, seed, eps)[0]


# ---------------------------------------------------------------- invariant curve


@dataclass
class InvariantCurve:
    profile: ForcingProfile
    residual: float  # sup |y - c(theta)| / sup |y|
    winding: int
    y_sup: float


def invariant_curve_extract(cfg, which="F", fit_order=16, burn_in=5000, n=20_000, seed=0, tol=1e-3):
    """Fit the attracting closed curve as a Fourier graph y = c(theta)."""
    rmap = ReturnMap(cfg, which)
    y0, t0 = _initial(seed, 0, 1)
    y, th = y0, t0
    with np.errstate(all="ignore"):
        for _ in range(burn_in):
            y, th, ok, _, _ = rmap.step(y, th)
            th = np.mod(th, TWO_PI)
        ys, ts = np.empty(n), np.empty(n)
        for k in range(n):
            y, th, ok, _, _ = rmap.step(y, th)
            ys[k], ts[k] = y[0], th[0]
    if not (np.all(np.isfinite(ys)) and np.all(np.isfinite(ts))):
        raise NotAGraph("orbit left the domain of the return map")
    wind = winding_number(ts)
    theta = np.mod(ts, TWO_PI)
    scale = float(np.max(np.abs(ys)))
    prof, res = ForcingProfile.fit(theta, ys / scale, fit_order)
    prof = prof.scaled(scale)
    if wind != 1:
        raise NotAGraph("orbit does not wind around the annulus")
    if res > tol:
        raise NotAGraph(f"orbit is not a graph over theta (relative residual {res:.3g})")
    return InvariantCurve(prof, float(res), wind, scale)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepCell:
    mu1: float
    mu2: float
    omega: float
    a: float
    cls: AttractorClass
    which: str

    def row(self):
        c = self.cls
        return [repr(float(self.mu1)), repr(float(self.mu2)), repr(float(self.omega)), repr(float(self.a)),
                c.label, repr(float(c.lyapunov_max)), repr(float(c.lyapunov_2)), str(c.winding),
                "" if c.period is None else str(c.period)]


@dataclass
class SweepResult:
    mu1: np.ndarray
    mu2: np.ndarray
    cells: list  # row-major over (mu2, mu1)
    seed: int
    burn_in: int
    n: int
    seeds: int
    hom: tuple | None = None  # (C, delta2)
    meta: dict = field(default_factory=dict)

    HEADER = ["mu1", "mu2", "omega", "a", "label", "lyap1", "lyap2", "winding", "period"]

    def labels(self):
        return np.array([c.cls.label for c in self.cells]).reshape(len(self.mu2), len(self.mu1))

    def counts(self):
        out = {k: 0 for k in LABELS}
        for c in self.cells:
            out[c.cls.label] += 1
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.HEADER)
            for c in self.cells:
                w.writerow(c.row())

    def write_dat(self, path):
        """gnuplot matrix blocks: mu1 mu2 label-index lyap1, blank line between mu2 rows."""
        idx = {k: i for i, k in enumerate(LABELS)}
        nx = len(self.mu1)
        with open(path, "w") as fh:
            fh.write("# mu1 mu2 label_index lyap1\n")
            for k, c in enumerate(self.cells):
                fh.write(f"{c.mu1!r} {c.mu2!r} {idx[c.cls.label]} {c.cls.lyapunov_max!r}\n")
                if (k + 1) % nx == 0:
                    fh.write("\n")

    def write_svg(self, path, cell=12):
        colors = {"invariant-curve": "#4c78a8", "periodic-sink": "#54a24b", "chaotic": "#e45756",
                  "singular-dominated": "#b279a2", "undetermined": "#bab0ac"}
        nx, ny = len(self.mu1), len(self.mu2)
        W, H = nx * cell, ny * cell
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 160}" height="{H}">']
        for k, c in enumerate(self.cells):
            i, j = k % nx, k // nx
            parts.append(f'<rect x="{i * cell}" y="{H - (j + 1) * cell}" width="{cell}" height="{cell}" '
                         f'fill="{colors[c.cls.label]}"/>')
        for r, (lab, col) in enumerate(colors.items()):
            parts.append(f'<rect x="{W + 8}" y="{8 + 18 * r}" width="12" height="12" fill="{col}"/>')
            parts.append(f'<text x="{W + 26}" y="{18 + 18 * r}" font-size="11">{lab}</text>')
        parts.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")


def _phase(mu, L):
    return float(np.mod(-L * np.log(mu), TWO_PI)) if mu > 0 else float("nan")


def _run_groups(cfg, groups, seeds, burn_in, n, seed, threads, chunk=64):
    """groups: {which: [(cell_index, mu1, mu2, omega)]}; returns {cell_index: AttractorClass}."""
    jobs = []
    for which, items in groups.items():
        for s in range(0, len(items), chunk):
            jobs.append((which, items[s:s + chunk]))

    def work(job):
        which, items = job
        ids, m1, m2, om = (np.array(v) for v in zip(*items))
        res = classify_cells(cfg, which, m1, m2, om, seeds, burn_in, n, seed, cell_ids=ids)
        return dict(zip(ids.tolist(), res))

    out = {}
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            for d in ex.map(work, jobs):
                out.update(d)
    else:
        for job in jobs:
            out.update(work(job))
    return out


def tangle_side(mu1, mu2, hom):
    """True where mu2 >= C mu1**delta2, i.e. past the homoclinic locus."""
    if hom is None:
        return np.zeros(np.broadcast(mu1, mu2).shape, dtype=bool)
    return np.asarray(mu2) >= hom[0] * np.asarray(mu1) ** hom[1]


def bifurcation_diagram(cfg: ModelConfig, mu1_range, mu2_range, resolution=(10, 10), seeds=8,
                        burn_in=2000, n=20_000, seed=0, threads=1, hom=None) -> SweepResult:
    """Classify every (mu1, mu2) cell of a rectangular grid.

    Cells on the tangle side of the homoclinic locus (mu2 >= C mu1**delta2)
    and the mu1 = 0 column use the return map to Out2; the rest, including
    the mu2 = 0 row, use the return map to Out1.
    """
    nx, ny = (resolution, resolution) if isinstance(resolution, int) else resolution
    m1 = np.linspace(*mu1_range, nx) if nx > 1 else np.array([float(mu1_range[0])])
    m2 = np.linspace(*mu2_range, ny) if ny > 1 else np.array([float(mu2_range[0])])
    consts = derive_constants(cfg)
    if hom is None and np.any(m1 > 0) and np.any(m2 > 0):
        from .tangle import hom_curve
        try:
            # fit over at least a decade so a narrow or single-column grid stays well posed
            hi = m1.max()
            grid = np.geomspace(min(m1[m1 > 0].min(), hi / 10), hi, 5)
            h = hom_curve(cfg, consts, grid)
            hom = (h.C, h.slope)
        except NoHomoclinicity:
            hom = None
    groups = {"F": [], "G": []}
    which_of, a_of = {}, {}
    k = 0
    for b in m2:
        for a in m1:
            if a == 0 and b == 0:
                which = None
            elif b == 0:
                which = "F"
            elif a == 0:
                which = "G"
            elif tangle_side(a, b, hom):
                which = "G"
            else:
                which = "F"
            which_of[k] = which
            if which is not None:
                L = cfg.omega * (consts.K_F if which == "F" else consts.K_G)
                a_of[k] = _phase(a if which == "F" else b, L)
                groups[which].append((k, a, b, cfg.omega))
            k += 1
    res = _run_groups(cfg, {w: g for w, g in groups.items() if g}, seeds, burn_in, n, seed, threads)
    cells = []
    k = 0
    for b in m2:
        for a in m1:
            w = which_of[k]
            cls = res.get(k, AttractorClass("undetermined", float("nan")))
            cells.append(SweepCell(float(a), float(b), cfg.omega, a_of.get(k, float("nan")), cls, w or ""))
            k += 1
    return SweepResult(m1, m2, cells, seed, burn_in, n, seeds, hom)


def a_scan(cfg: ModelConfig, a_values, n_lattice=None, which="F", mu_max=1e-3, seeds=8, burn_in=2000,
           n=20_000, seed=0, threads=1):
    """Classify the cells mu = mu_(a, n) along the lattice for a set of phases a."""
    from .singular import mu_lattice
    consts = derive_constants(cfg)
    L = cfg.omega * (consts.K_F if which == "F" else consts.K_G)
    if n_lattice is None:
        n_lattice = max(1, math.ceil(-L * math.log(mu_max) / TWO_PI))
    mus = np.array([mu_lattice(cfg, consts, float(a), n_lattice, which) for a in a_values])
    items = [(i, m, 0.0, cfg.omega) if which == "F" else (i, 0.0, m, cfg.omega) for i, m in enumerate(mus)]
    res = _run_groups(cfg, {which: items}, seeds, burn_in, n, seed, threads)
    cells = [SweepCell(it[1], it[2], cfg.omega, float(a), res[i], which)
             for i, (a, it) in enumerate(zip(a_values, items))]
    return SweepResult(np.asarray(a_values, float), np.array([0.0]), cells, seed, burn_in, n, seeds)


def tangle_fraction(hom, r):
    from .tangle import tangle_side_fraction
    return tangle_side_fraction(hom[0], hom[1], r)
