"""Command-line experiment runner.

``dgff run --config exp.toml --out results/`` samples fields, runs the
configured analyses and writes

* ``summary.json``  config hash, per-analysis reports, versions, pass flags;
* ``timings.json``  wall-times (kept apart so summary.json is reproducible);
* ``config.toml``   the canonicalized configuration;
* ``*.csv``         plot data (tail curves, residual tables, atom tables);
* ``fields/*.bin``  optional stored fields.

Replicates are processed in fixed-size chunks that do not depend on the
worker count, and results are merged in replicate order, so every numeric
output is independent of ``--workers``.

Exit status: 0 all analyses pass, 1 some analysis fails, 2 execution error.
"""
from __future__ import annotations

import argparse
import os
import platform
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_shape
from .domain import delta_interior, discretize
from .extremes import c_of_phi, default_r_N, extract_structured, m_of, zeta_measure, NormingSpec
from .green.constants import ALPHA, C0, C_STAR, G_CONST
from .green.lattice import green_dense
from .io import atoms_to_csv, canonical_json, read_field, write_atoms_csv, write_field, write_json, write_table_csv, field_to_bytes
from .sampler.lattice import Field, GmDecomposition, RestrictionOperator, enclosing_rectangle, sample_field
from .sampler.rng import RESERVED_STREAM_BASE, RngStream, streams
from . import verify as V

FIELD_OPS = ("rayleigh_gof", "norming_ratio", "max_tail", "gm_check", "intensity_correlation")
# reserved stream offsets per analysis
_PAIRS_STREAM = RESERVED_STREAM_BASE + 10
_KS_STREAM = RESERVED_STREAM_BASE + 20
_BOOT_STREAM = RESERVED_STREAM_BASE + 30
# doubles held per chunk of replicate fields
_CHUNK_BUDGET = 4_000_000


@dataclass
class RunSummary:
    config_hash: str
    reports: dict
    wall_times: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.get("passed", False) for r in self.reports.values())

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "reports": self.reports, "versions": self.versions, "all_passed": self.passed}


def versions() -> dict:
    return {"dgff": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


# ---------------------------------------------------------------------------
# worker side


@lru_cache(maxsize=8)
def _lattice(domain_json: str, N: int):
    import json

    return discretize(parse_shape(json.loads(domain_json), "domain"), N)


def _domain_key(cfg: ExperimentConfig) -> str:
    import json

    return json.dumps(cfg.domain, sort_keys=True)


def _chunk_size(cfg: ExperimentConfig, n: int) -> int:
    return int(max(1, min(cfg.chunk, _CHUNK_BUDGET // max(n, 1))))


@lru_cache(maxsize=4)
def _pairs(domain_json: str, N: int, seed: int, m: int) -> np.ndarray:
    L = _lattice(domain_json, N)
    return V.random_pairs(L.size, m, RngStream(seed, _PAIRS_STREAM))


@lru_cache(maxsize=4)
def _restriction(domain_json: str, N: int, margin: int):
    L = _lattice(domain_json, N)
    Vd = enclosing_rectangle(L, margin)
    return Vd, RestrictionOperator(Vd, L)


@lru_cache(maxsize=2)
def _green(domain_json: str, N: int):
    return green_dense(_lattice(domain_json, N))


def _field_task(args):
    """Per-replicate summaries for replicates start..stop-1 at scale N."""
    cfg_dict, N, start, stop = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    a = cfg.analysis
    key = _domain_key(cfg)
    L = _lattice(key, N)
    ops = set(a["ops"])
    out = {}
    if "gm_check" in ops:
        Vd, op = _restriction(key, N, a["margin"])
        parent = sample_field(Vd, streams(cfg.master_seed, range(start, stop)), "spectral")
        sub, bind = op.split(parent)
        res = []
        for k in range(stop - start):
            dec = GmDecomposition(Field(L, sub[k]), Field(L, bind[k]), Field(Vd, parent[k]))
            res.append(V.gm_check(dec).value)
        out["gm_check"] = res
        h_all = sub
    else:
        h_all = _sample_rngs(cfg, L, streams(cfg.master_seed, range(start, stop)))
    need = ops & {"rayleigh_gof", "norming_ratio", "max_tail", "intensity_correlation"}
    if not need and not cfg.output["save_fields"] and not cfg.output["save_atoms"]:
        return out
    D = cfg.continuum_domain
    specs = cfg.phi_specs()
    boxes = V.box_partition(D, a["delta"], a["boxes"]) if "intensity_correlation" in ops else None
    for k in range(stop - start):
        i = start + k
        h = Field(L, h_all[k])
        if "rayleigh_gof" in ops:
            z = zeta_measure(h)
            keep = (z.depths >= 0) & (z.depths <= a["t_max"]) & delta_interior(D, a["delta"])(z.positions)
            z = z.restrict(keep).compress(1e-9)
            out.setdefault("rayleigh_gof", []).append((z.depths, z.weights))
        if "norming_ratio" in ops:
            out.setdefault("norming_ratio", []).append(V.norming_masses(h, specs, a["delta"]))
        if "max_tail" in ops:
            out.setdefault("max_tail", []).append(float(h.values.max() - m_of(N)))
        if "intensity_correlation" in ops:
            out.setdefault("intensity_correlation", []).append(V.box_statistics(h, boxes, a["cut"], a["r_N"]))
        if i < cfg.output["save_fields"]:
            out.setdefault("fields", []).append((i, field_to_bytes(h)))
        if i < cfg.output["save_atoms"]:
            out.setdefault("atoms", []).append((i, zeta_measure(h)))
    return out


def _cov_task(args):
    cfg_dict, N, start, stop = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    key = _domain_key(cfg)
    L = _lattice(key, N)
    pairs = _pairs(key, N, cfg.master_seed, cfg.analysis["pairs"])
    draw = lambda rngs: _sample_rngs(cfg, L, rngs)
    return V.covariance_sums(draw, pairs, cfg.master_seed, start, stop)


def _sample_rngs(cfg: ExperimentConfig, L, rngs) -> np.ndarray:
    if cfg.route == "dense":
        return sample_field(L, rngs, "dense", G=_green(_domain_key(cfg), L.N))
    return sample_field(L, rngs, cfg.route, margin=cfg.analysis["margin"])


@lru_cache(maxsize=2)
def _zt_kernel(domain_json: str, A_json: str, t: float, resolution):
    import json

    D = parse_shape(json.loads(domain_json), "domain")
    A = parse_shape(json.loads(A_json), "analysis.A")
    res = tuple(resolution) if isinstance(resolution, list) else resolution
    return V.ZtMassKernel(D, A, t, res)


def _zt_task(args):
    import json

    cfg_dict, start, stop = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    a = cfg.analysis
    res = a["resolution"]
    k = _zt_kernel(_domain_key(cfg), json.dumps(a["A"], sort_keys=True), float(a["t"]), tuple(res) if isinstance(res, list) else res)
    return k.masses(cfg.master_seed, start, stop)


# ---------------------------------------------------------------------------
# orchestrator side


class _Pool:
    def __init__(self, workers: int):
        self.workers = workers
        self.ex = ProcessPoolExecutor(workers) if workers > 1 else None

    def map(self, fn, tasks):
        if self.ex is None:
            return [fn(t) for t in tasks]
        return list(self.ex.map(fn, tasks))

    def close(self):
        if self.ex is not None:
            self.ex.shutdown()


def _chunks(reps: int, size: int):
    return [(s, min(reps, s + size)) for s in range(0, reps, size)]


def _merge(parts: list[dict], key: str) -> list:
    out = []
    for p in parts:
        out.extend(p.get(key, []))
    return out


def execute(cfg: ExperimentConfig, out_dir: Path, workers: int = 1) -> RunSummary:
    """Run every configured analysis, writing files into ``out_dir``."""
    a = cfg.analysis
    ops = a["ops"]
    cfg_dict = cfg.to_dict(execution=False)
    D = cfg.continuum_domain
    key = _domain_key(cfg)
    reports: dict = {}
    times: dict = {}
    pool = _Pool(workers)
    try:
        for N in cfg.N:
            L = _lattice(key, N)
            chunk = _chunk_size(cfg, L.size)
            if "covariance_test" in ops:
                t0 = time.perf_counter()
                pairs = _pairs(key, N, cfg.master_seed, a["pairs"])
                G = _green(key, N)
                sums = pool.map(_cov_task, [(cfg_dict, N, s, e) for s, e in _chunks(cfg.reps, chunk)])
                acc = np.zeros(len(pairs))
                for s in sums:
                    acc += s
                rep = V.covariance_report(G, pairs, acc, cfg.reps, f"covariance_{cfg.route}")
                d = rep.to_dict()
                d["details"] = {"max_abs_z": rep.value, "pairs": len(pairs)}
                reports[f"covariance_test/N={N}"] = d
                write_table_csv(
                    out_dir / f"covariance_N{N}.csv",
                    ["i", "j", "empirical", "exact", "z"],
                    [pairs[:, 0], pairs[:, 1], rep.details["empirical"], rep.details["exact"], rep.details["z"]],
                )
                times[f"covariance_test/N={N}"] = time.perf_counter() - t0
            if "cross_covariance" in ops:
                t0 = time.perf_counter()
                Vd, _ = _restriction(key, N, a["margin"])
                pairs = _pairs(key, N, cfg.master_seed, a["pairs"])
                rep = V.cross_covariance_test(Vd, L, pairs, cfg.reps, cfg.master_seed, chunk)
                d = rep.to_dict()
                d["details"] = {"max_abs_z": rep.value, "pairs": len(pairs)}
                reports[f"cross_covariance/N={N}"] = d
                times[f"cross_covariance/N={N}"] = time.perf_counter() - t0
            if set(ops) & set(FIELD_OPS) or cfg.output["save_fields"] or cfg.output["save_atoms"]:
                t0 = time.perf_counter()
                parts = pool.map(_field_task, [(cfg_dict, N, s, e) for s, e in _chunks(cfg.reps, chunk)])
                times[f"fields/N={N}"] = time.perf_counter() - t0
                _field_reports(cfg, N, parts, reports, out_dir)
        if "rayleigh_gof" in ops and len(cfg.N) > 1:
            ks = [reports[f"rayleigh_gof/N={N}"]["value"] for N in cfg.N]
            reports["rayleigh_gof/trend"] = {
                "statistic": "ks_decreasing_in_N",
                "N": list(cfg.N),
                "values": ks,
                "passed": bool(np.all(np.diff(ks) < 0)),
            }
        if "green_asymptotics" in ops:
            t0 = time.perf_counter()
            c0 = a.get("c0") if a.get("c0") is not None else C0
            tab = V.green_asymptotics_report(D, a["x"], cfg.N, a["delta"], a["threshold"], c0)
            reports["green_asymptotics"] = tab.to_dict()
            write_table_csv(out_dir / "green_asymptotics.csv", ["N", "residual"], [tab.N, tab.residual])
            times["green_asymptotics"] = time.perf_counter() - t0
        if "zt_mean" in ops:
            t0 = time.perf_counter()
            A = parse_shape(a["A"], "analysis.A")
            target = ALPHA * np.sqrt(a["t"]) * V.integral_r2(D, A)
            parts = pool.map(_zt_task, [(cfg_dict, s, e) for s, e in _chunks(cfg.reps, cfg.chunk)])
            reports["zt_mean"] = V.zt_report(np.concatenate(parts), target).to_dict()
            times["zt_mean"] = time.perf_counter() - t0
    finally:
        pool.close()
    return RunSummary(cfg.content_hash(), reports, times, versions())


def _field_reports(cfg: ExperimentConfig, N: int, parts: list[dict], reports: dict, out_dir: Path) -> None:
    a = cfg.analysis
    ops = a["ops"]
    tag = f"N={N}"
    if "gm_check" in ops:
        vals = np.array(_merge(parts, "gm_check"))
        reports[f"gm_check/{tag}"] = V.GofReport("gibbs_markov_max", float(vals.max()), len(vals), 1e-10).to_dict()
    if "rayleigh_gof" in ops:
        pooled = _merge(parts, "rayleigh_gof")
        from .measure import PointMeasure

        zs = [PointMeasure(np.zeros((len(d), 2)), w, d) for d, w in pooled]
        rep = V.rayleigh_gof(zs, a["delta"], a["t_max"], a["level"], a["n_calib"], RngStream(cfg.master_seed, _KS_STREAM + N))
        reports[f"rayleigh_gof/{tag}"] = rep.to_dict()
    if "norming_ratio" in ops:
        m = np.array(_merge(parts, "norming_ratio"))
        A, B = cfg.phi_specs()
        nr = V.norming_ratio_from_masses(m[:, 0], m[:, 1], A, B, RngStream(cfg.master_seed, _BOOT_STREAM + N))
        d = nr.to_dict()
        d["relative_error"] = abs(nr.median - nr.predicted) / abs(nr.predicted)
        d["tolerance"] = a["ratio_tol"]
        d["passed"] = bool(d["relative_error"] <= a["ratio_tol"])
        reports[f"norming_ratio/{tag}"] = d
        write_table_csv(out_dir / f"norming_N{N}.csv", ["replicate", "mass_a", "mass_b"], [np.arange(len(m)), m[:, 0], m[:, 1]])
    if "max_tail" in ops:
        M = np.array(_merge(parts, "max_tail"))
        u = np.linspace(a["u_min"], a["u_max"], a["u_points"])
        try:
            fit = V.fit_max_tail(M, u)
            d = fit.to_dict()
            d["target"] = -ALPHA
            d["passed"] = bool(abs(fit.slope + ALPHA) <= a["slope_tol"])
            write_table_csv(out_dir / f"max_tail_N{N}.csv", ["u", "exceedances", "log_tail"], [u, fit.counts, fit.log_tail])
        except V.InsufficientDataError as err:
            d = {"error": str(err), "passed": False}
        reports[f"max_tail/{tag}"] = d
        write_table_csv(out_dir / f"maxima_N{N}.csv", ["replicate", "centered_max"], [np.arange(len(M)), M])
    if "intensity_correlation" in ops:
        st = _merge(parts, "intensity_correlation")
        X = np.array([s[0] for s in st])
        Y = np.array([s[1] for s in st])
        try:
            ce = V.pooled_correlation(X, Y, RngStream(cfg.master_seed, _BOOT_STREAM + 7 * N))
            d = ce.to_dict()
            d["passed"] = bool(ce.ci[0] > 0)
        except V.DegenerateSampleError as err:
            d = {"error": str(err), "passed": False}
        reports[f"intensity_correlation/{tag}"] = d
    for i, blob in _merge(parts, "fields"):
        p = out_dir / "fields"
        p.mkdir(exist_ok=True)
        (p / f"field_N{N}_{i:06d}.bin").write_bytes(blob)
    for i, z in _merge(parts, "atoms"):
        p = out_dir / "atoms"
        p.mkdir(exist_ok=True)
        write_atoms_csv(p / f"zeta_N{N}_{i:06d}.csv", z)


def resolve_workers(flag: int | None, cfg: ExperimentConfig | None = None) -> int:
    """--workers, then the config's ``workers``, then DGFF_WORKERS, then 1."""
    if flag is not None:
        w = flag
    elif cfg is not None and cfg.workers is not None:
        w = cfg.workers
    elif os.environ.get("DGFF_WORKERS"):
        try:
            w = int(os.environ["DGFF_WORKERS"])
        except ValueError as err:
            raise ConfigError("DGFF_WORKERS", f"not an integer: {os.environ['DGFF_WORKERS']!r}") from err
    else:
        w = 1
    if w < 1:
        raise ConfigError("workers", "must be >= 1")
    return w


def _safe_replace(tmp: Path, out: Path) -> None:
    if out.exists():
        if not out.is_dir():
            raise FileExistsError(f"{out} exists and is not a directory")
        if any(out.iterdir()) and not (out / "summary.json").exists():
            raise FileExistsError(f"{out} is non-empty and not a previous run directory")
        shutil.rmtree(out)
    tmp.rename(out)


def run(config_path, out=None, workers: int | None = None, seed_override: int | None = None) -> RunSummary:
    """Load, validate and execute a config; outputs appear atomically in ``out``."""
    cfg = ExperimentConfig.load(config_path)
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError("master_seed", "must be >= 0")
        cfg.master_seed = int(seed_override)
    out = Path(out if out is not None else (cfg.output_dir or "dgff_out"))
    w = resolve_workers(workers, cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        t0 = time.perf_counter()
        summary = execute(cfg, tmp, w)
        summary.wall_times["total"] = time.perf_counter() - t0
        (tmp / "config.toml").write_text(cfg.dumps())
        write_json(tmp / "summary.json", summary.to_dict())
        write_json(tmp / "timings.json", {"workers": w, "wall_times": summary.wall_times})
        _safe_replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return summary


# ---------------------------------------------------------------------------
# argument parsing


def domain_from_arg(s: str):
    """``square``, ``disc``, ``rect:x0,y0,x1,y1`` or ``disc:cx,cy,radius``."""
    name, _, rest = s.partition(":")
    vals = [float(v) for v in rest.split(",")] if rest else []
    if name == "square" and not vals:
        return parse_shape({"shape": "square"}, "--domain")
    if name == "disc":
        if not vals:
            return parse_shape({"shape": "disc"}, "--domain")
        if len(vals) == 3:
            return parse_shape({"shape": "disc", "center": vals[:2], "radius": vals[2]}, "--domain")
    if name in ("rect", "rectangle") and len(vals) == 4:
        return parse_shape({"shape": "rectangle", "bounds": vals}, "--domain")
    raise ConfigError("--domain", f"cannot parse {s!r}")


def _vertex(s: str) -> tuple[int, int]:
    i, j = s.split(",")
    return int(i), int(j)


def _cmd_constants(args) -> int:
    rows = [
        ("g", G_CONST),
        ("c0", C0),
        ("alpha", ALPHA),
        ("c_star", C_STAR),
        ("c_phi_one", c_of_phi(NormingSpec("one"))),
        ("c_phi_identity", c_of_phi(NormingSpec("identity"))),
    ]
    for k, v in rows:
        print(f"{k}={v!r}")
    return 0


def _cmd_green(args) -> int:
    L = discretize(domain_from_arg(args.domain), args.N)
    G = green_dense(L)
    if args.x is not None:
        y = args.y if args.y is not None else args.x
        print(repr(G(_vertex(args.x), _vertex(y))))
        return 0
    if args.out:
        v = L.vertices
        ii, jj = np.meshgrid(np.arange(L.size), np.arange(L.size), indexing="ij")
        write_table_csv(args.out, ["x1", "y1", "x2", "y2", "G"], [v[ii.ravel(), 0], v[ii.ravel(), 1], v[jj.ravel(), 0], v[jj.ravel(), 1], G.matrix.ravel()])
    else:
        print(canonical_json({"N": args.N, "vertices": L.vertices, "G": G.matrix}), end="")
    return 0


def _cmd_sample(args) -> int:
    L = discretize(domain_from_arg(args.domain), args.N)
    h = sample_field(L, RngStream(args.seed, args.stream), args.route, margin=args.margin)
    write_field(args.out, h)
    return 0


def _cmd_zeta(args) -> int:
    h = read_field(args.field)
    z = zeta_measure(h)
    if args.out:
        write_atoms_csv(args.out, z)
    else:
        sys.stdout.write(atoms_to_csv(z))
    return 0


def _cmd_extremal(args) -> int:
    h = read_field(args.field)
    atoms = extract_structured(h, args.r_N, args.window)
    lines = ["x,y,height"] + [f"{float(a.position[0])!r},{float(a.position[1])!r},{float(a.height)!r}" for a in atoms]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.shapes:
        write_json(args.shapes, [{"vertex": list(a.vertex), "height": a.height, "shape": np.where(a.valid, a.shape, np.nan)} for a in atoms])
    return 0


def _cmd_run(args) -> int:
    s = run(args.config, args.out, args.workers, args.seed_override)
    for name, r in s.reports.items():
        print(f"{'PASS' if r.get('passed') else 'FAIL'}  {name}")
    return 0 if s.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgff", description="Discrete Gaussian free field experiments")
    sub = p.add_subparsers(dest="cmd", required=True)

    for name, helptext in (("run", "sample, analyse and write outputs"), ("verify", "alias of run: execute the configured verification analyses")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("--config", required=True)
        r.add_argument("--out")
        r.add_argument("--workers", type=int)
        r.add_argument("--seed-override", type=int)
        r.set_defaults(fn=_cmd_run)

    s = sub.add_parser("sample", help="sample one DGFF and store it as a binary field")
    s.add_argument("--domain", default="square")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--route", default="auto", choices=["auto", "dense", "spectral", "restrict"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stream", type=int, default=0)
    s.add_argument("--margin", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_sample)

    g = sub.add_parser("green", help="lattice Green function of D_N")
    g.add_argument("--domain", default="square")
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--x", help="vertex 'i,j' (prints a single value)")
    g.add_argument("--y", help="vertex 'i,j' (defaults to --x)")
    g.add_argument("--out", help="CSV of all entries")
    g.set_defaults(fn=_cmd_green)

    z = sub.add_parser("zeta", help="near-extremal atoms of a stored field as CSV")
    z.add_argument("--field", required=True)
    z.add_argument("--out")
    z.set_defaults(fn=_cmd_zeta)

    e = sub.add_parser("extremal", help="r_N-local maxima of a stored field")
    e.add_argument("--field", required=True)
    e.add_argument("--r-N", dest="r_N", type=float)
    e.add_argument("--window", type=int, default=5)
    e.add_argument("--out")
    e.add_argument("--shapes", help="JSON file for cluster shapes")
    e.set_defaults(fn=_cmd_extremal)

    c = sub.add_parser("constants", help="print g, c0, alpha, c_star and c(Phi) for built-in Phi")
    c.set_defaults(fn=_cmd_constants)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - report and map to the error exit code
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
