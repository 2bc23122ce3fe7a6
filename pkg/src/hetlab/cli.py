"""Command-line entry point: ``hetlab validate | run <what> | report``.

Exit codes: 0 success, 1 domain failure, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HetlabError
from .model import ModelConfig, derive_constants, parse_kv, read_config, validate

RUN_TARGETS = ("orbit", "singular", "scan-a", "sinks", "melnikov", "tangle", "hom", "sweep")


# ---------------------------------------------------------------- helpers


def _load(path):
    if path is None:
        return ModelConfig(), {}
    cfg = read_config(path)
    p = Path(path)
    if p.suffix == ".json":
        raw = json.loads(p.read_text())
    else:
        raw = parse_kv(p.read_text())
    return cfg, raw


def _pair(text, typ=float):
    try:
        a, b = (typ(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}") from None
    return a, b


def _grid(text):
    try:
        nx, ny = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid must look like 10x10, got {text!r}") from None
    if nx < 1 or ny < 1:
        raise ConfigError("grid sizes must be positive")
    return nx, ny


def _dump(obj, path):
    def conv(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, float) and not math.isfinite(o):
            return None
        raise TypeError(type(o))

    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=conv) + "\n")


def config_hash(cfg, args):
    blob = json.dumps({"config": cfg.to_dict(), "args": args}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def diffeo_margin(cfg):
    k = derive_constants(cfg)
    return 1.0 - cfg.omega * k.K_F * cfg.phi1.sup_log_derivative()


# ---------------------------------------------------------------- run targets


def run_orbit(cfg, raw, a, out):
    from .maps import ReturnMapPoint, iterate_orbit, write_orbit_csv
    rows = iterate_orbit(cfg, a.which, ReturnMapPoint(a.y0, a.theta0, "Out1" if a.which == "F" else "Out2"), a.n)
    write_orbit_csv(rows, out / "orbit.csv")
    return ["orbit.csv"]


def run_singular(cfg, raw, a, out):
    from .singular import (critical_set, is_diffeomorphism, lyapunov_1d, misiurewicz_check, rotation_number,
                           singular_limit_from_config)
    k = derive_constants(cfg)
    m = singular_limit_from_config(cfg, k, a.a, a.which)
    rep = is_diffeomorphism(m)
    res = {"which": a.which, "a": a.a, "L": m.L, "critical_points": critical_set(m),
           "diffeomorphism": rep.__dict__}
    if rep.is_diffeomorphism:
        r = rotation_number(m, a.iterates)
        res["rotation_number"] = {"rho": r.rho, "error_bound": r.error_bound, "rational": r.rational_candidate}
    else:
        lam, hits = lyapunov_1d(m, return_hits=True)
        res["lyapunov"] = lam
        res["singular_hits"] = hits
        res["misiurewicz"] = misiurewicz_check(m, horizon=a.horizon).to_dict()
    _dump(res, out / "singular.json")
    return ["singular.json"]


def run_scan_a(cfg, raw, a, out):
    from .singular import scan_a, singular_limit_from_config, write_scan_csv
    m = singular_limit_from_config(cfg, derive_constants(cfg), 0.0, a.which)
    rows = scan_a(m, np.linspace(0, 2 * math.pi, a.n_a, endpoint=False))
    write_scan_csv(rows, out / "scan_a.csv")
    return ["scan_a.csv"]


def run_sinks(cfg, raw, a, out):
    from .combinatorics import find_superstable_sinks
    hits = find_superstable_sinks(cfg, derive_constants(cfg), a.a_hat, a.radius, a.period_cap, mu_max=a.mu_max)
    _dump([h.to_dict() for h in hits], out / "sinks.json")
    return ["sinks.json"]


def _system(raw):
    from .melnikov import PlanarSystem, fixture_system
    sub = raw.get("melnikov") if isinstance(raw.get("melnikov"), dict) else \
        {k.split(".", 1)[1]: v for k, v in raw.items() if k.startswith("melnikov.")}
    if not sub:
        return fixture_system()
    return PlanarSystem.from_dict(sub)


def run_melnikov(cfg, raw, a, out):
    from .melnikov import classify_configuration, shoot_heteroclinic, write_table_csv
    sys_ = _system(raw)
    orbits = (shoot_heteroclinic(sys_, 1), shoot_heteroclinic(sys_, 2))
    write_table_csv(sys_, out / "melnikov.csv", a.grid, orbits)
    cl = classify_configuration(sys_, a.grid, orbits)
    _dump({"case": cl.case, "nongeneric": cl.nongeneric,
           "W": [r.__dict__ for r in cl.reports]}, out / "melnikov.json")
    return ["melnikov.csv", "melnikov.json"]


def run_tangle(cfg, raw, a, out):
    from .tangle import spiral_exponent, tangency_sequence, unstable_image_spiral, write_tangencies_json
    k = derive_constants(cfg)
    c = cfg.replace(mu1=0.0, mu2=cfg.mu2 if cfg.mu2 > 0 else a.mu2)
    sp = unstable_image_spiral(c, k, M=a.M)
    sp.write_csv(out / "spiral.csv")
    tans = tangency_sequence(c, k, mu2_range=_pair(a.mu2_range), count=a.count, M=a.M)
    write_tangencies_json(tans, out / "tangencies.json")
    slope, pair, _ = spiral_exponent(c, k)
    _dump({"fold": sp.fold, "max_radius": sp.max_radius, "radius_exponent": slope,
           "pairwise_exponents": pair, "delta": k.delta, "delta1": k.delta1, "delta2": k.delta2},
          out / "spiral.json")
    return ["spiral.csv", "spiral.json", "tangencies.json"]


def run_hom(cfg, raw, a, out):
    from .tangle import hom_curve
    lo, hi = _pair(a.mu1_range)
    h = hom_curve(cfg, derive_constants(cfg), np.geomspace(lo, hi, a.points))
    _dump(h.to_dict(), out / "hom.json")
    return ["hom.json"]


def run_sweep(cfg, raw, a, out):
    from .sweep import bifurcation_diagram
    res = bifurcation_diagram(cfg, _pair(a.mu1_range), _pair(a.mu2_range), _grid(a.grid), seeds=a.seeds,
                              burn_in=a.burn_in, n=a.n, seed=a.seed, threads=a.threads)
    res.write_csv(out / "sweep.csv")
    res.write_dat(out / "sweep.dat")
    files = ["sweep.csv", "sweep.dat"]
    if a.svg:
        res.write_svg(out / "sweep.svg")
        files.append("sweep.svg")
    return files


RUNNERS = {"orbit": run_orbit, "singular": run_singular, "scan-a": run_scan_a, "sinks": run_sinks,
           "melnikov": run_melnikov, "tangle": run_tangle, "hom": run_hom, "sweep": run_sweep}


# ---------------------------------------------------------------- commands


def cmd_validate(args):
    cfg, _ = _load(args.config)
    rep = validate(cfg)
    print(rep)
    return 0 if rep.ok else 1


def cmd_run(args):
    cfg, raw = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(args.seed)
    files = RUNNERS[args.target](cfg, raw, args, out)
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out", "config", "threads")}
    manifest = {"command": "run", "subcommand": args.target, "config_hash": config_hash(cfg, params),
                "seed": args.seed, "version": __version__, "outputs": files, "args": params,
                "config": cfg.to_dict(), "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    _dump(manifest, out / "manifest.json")
    for f in files:
        print(out / f)
    return 0


def cmd_report(args):
    path = Path(args.manifest)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    man = json.loads(text) if text.strip() else {}
    if not man:
        print("empty manifest: nothing to report")
        return 0
    base = path.parent
    print(f"run {man.get('subcommand', '?')}  seed={man.get('seed')}  version={man.get('version')}")
    print(f"config hash {man.get('config_hash', '?')}")
    if "config" in man:
        cfg = ModelConfig.from_dict(man["config"])
        k = derive_constants(cfg)
        print(f"K_F={k.K_F:.6g}  K_G={k.K_G:.6g}  delta={k.delta:.6g}  diffeomorphism margin={diffeo_margin(cfg):.6g}")
    missing = [f for f in man.get("outputs", []) if not (base / f).exists()]
    for f in man.get("outputs", []):
        if f.endswith("sweep.csv") and f not in missing:
            import csv
            with open(base / f) as fh:
                rows = list(csv.DictReader(fh))
            counts = {}
            for r in rows:
                counts[r["label"]] = counts.get(r["label"], 0) + 1
            print(f"{len(rows)} cells")
            for lab in sorted(counts):
                print(f"  {lab}: {counts[lab]}")
    if missing:
        print("missing files:")
        for f in missing:
            print(f"  {f}")
        return 1
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hetlab", description="Forced heteroclinic cycle laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default="out")

    v = sub.add_parser("validate", help="check the model hypotheses of a config")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run one analysis")
    rs = r.add_subparsers(dest="target", required=True)
    o = rs.add_parser("orbit", parents=[common])
    o.add_argument("--which", choices=("F", "G"), default="F")
    o.add_argument("--y0", type=float, default=0.5)
    o.add_argument("--theta0", type=float, default=0.0)
    o.add_argument("--n", type=int, default=1000)
    s = rs.add_parser("singular", parents=[common])
    s.add_argument("--which", choices=("F", "G"), default="F")
    s.add_argument("--a", type=float, default=0.0)
    s.add_argument("--iterates", type=int, default=10_000)
    s.add_argument("--horizon", type=int, default=50)
    sa = rs.add_parser("scan-a", parents=[common])
    sa.add_argument("--which", choices=("F", "G"), default="F")
    sa.add_argument("--n-a", type=int, default=256)
    sk = rs.add_parser("sinks", parents=[common])
    sk.add_argument("--a-hat", type=float, default=0.0)
    sk.add_argument("--radius", type=float, default=0.5)
    sk.add_argument("--period-cap", type=int, default=8)
    sk.add_argument("--mu-max", type=float, default=1e-4)
    me = rs.add_parser("melnikov", parents=[common])
    me.add_argument("--grid", type=int, default=512)
    t = rs.add_parser("tangle", parents=[common])
    t.add_argument("--M", type=float, default=0.5)
    t.add_argument("--mu2", type=float, default=1e-3)
    t.add_argument("--mu2-range", default="1e-8,1e-4")
    t.add_argument("--count", type=int, default=6)
    h = rs.add_parser("hom", parents=[common])
    h.add_argument("--mu1-range", default="1e-4,1e-2")
    h.add_argument("--points", type=int, default=9)
    sw = rs.add_parser("sweep", parents=[common])
    sw.add_argument("--grid", default="10x10")
    sw.add_argument("--mu1-range", default="0,0.01")
    sw.add_argument("--mu2-range", default="0,0.01")
    sw.add_argument("--seeds", type=int, default=8)
    sw.add_argument("--burn-in", type=int, default=2000)
    sw.add_argument("--n", type=int, default=20_000)
    sw.add_argument("--svg", action="store_true")
    for q in (o, s, sa, sk, me, t, h, sw):
        q.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="summarise a run from its manifest")
    rp.add_argument("manifest")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except HetlabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
