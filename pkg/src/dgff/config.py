"""Experiment configuration: TOML in, validated dataclass out.

Example::

    master_seed = 1

    [domain]
    shape = "square"          # square | disc | rectangle | union

    [sampler]
    N = 64                    # or a list of N
    route = "dense"           # auto | dense | spectral | restrict
    reps = 100

    [analysis]
    ops = ["covariance_test"]
    delta = 0.1

Validation failures raise :class:`ConfigError` whose ``path`` names the
offending field (``"analysis.delta"``).
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import ContinuumDomain, Disc, RectUnion, Rectangle

OPS = (
    "covariance_test",
    "cross_covariance",
    "gm_check",
    "green_asymptotics",
    "rayleigh_gof",
    "norming_ratio",
    "max_tail",
    "zt_mean",
    "intensity_correlation",
)
ROUTES = ("auto", "dense", "spectral", "restrict")

# analysis defaults; anything listed here may be overridden in [analysis]
ANALYSIS_DEFAULTS = {
    "ops": [],
    "delta": 0.1,
    "t_max": 4.0,
    "r_N": None,
    "window": 5,
    "pairs": 50,
    "phi": [{"kind": "identity"}, {"kind": "one"}],
    "ratio_tol": 0.15,
    "u_min": 1.0,
    "u_max": 2.5,
    "u_points": 16,
    "slope_tol": 0.5,
    "x": [0.5, 0.5],
    "threshold": 0.01,
    "c0": None,
    "t": 1.0,
    "A": {"shape": "disc", "center": [0.0, 0.0], "radius": 0.5},
    "resolution": 128,
    "boxes": 4,
    "cut": -2.0,
    "n_calib": 200,
    "level": 0.01,
    "margin": 4,
}

OUTPUT_DEFAULTS = {"save_fields": 0, "save_atoms": 0}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _num(v, path, lo=None, hi=None, integer=False, lo_open=False, hi_open=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(path, f"{v} below the allowed range ({'>' if lo_open else '>='} {lo})")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(path, f"{v} above the allowed range ({'<' if hi_open else '<='} {hi})")
    return v


def _pair(v, path):
    if not (isinstance(v, list) and len(v) == 2):
        raise ConfigError(path, "expected a list of two numbers")
    return [float(_num(c, f"{path}[{i}]")) for i, c in enumerate(v)]


def parse_shape(spec: dict, path: str) -> ContinuumDomain:
    if not isinstance(spec, dict) or "shape" not in spec:
        raise ConfigError(path, "expected a table with a 'shape' key")
    kind = spec["shape"]
    try:
        if kind == "square":
            return Rectangle(0.0, 0.0, 1.0, 1.0)
        if kind == "disc":
            c = _pair(spec.get("center", [0.0, 0.0]), f"{path}.center")
            return Disc(c[0], c[1], float(_num(spec.get("radius", 1.0), f"{path}.radius", 0, lo_open=True)))
        if kind == "rectangle":
            b = spec.get("bounds")
            if not (isinstance(b, list) and len(b) == 4):
                raise ConfigError(f"{path}.bounds", "expected [x0, y0, x1, y1]")
            return Rectangle(*[float(_num(c, f"{path}.bounds[{i}]")) for i, c in enumerate(b)])
        if kind == "union":
            rs = spec.get("rects")
            if not (isinstance(rs, list) and rs):
                raise ConfigError(f"{path}.rects", "expected a non-empty list of [x0, y0, x1, y1]")
            return RectUnion(tuple(Rectangle(*map(float, r)) for r in rs))
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(path, str(err)) from err
    raise ConfigError(f"{path}.shape", f"unknown shape {kind!r}")


@dataclass
class ExperimentConfig:
    domain: dict
    N: list
    route: str = "auto"
    reps: int = 100
    master_seed: int = 0
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    output_dir: str | None = None
    workers: int | None = None
    chunk: int = 250

    # --- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {"master_seed", "domain", "sampler", "analysis", "output", "output_dir", "workers"}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown key")
        seed = _num(d.get("master_seed", 0), "master_seed", 0, integer=True)
        dom = d.get("domain", {"shape": "square"})
        parse_shape(dom, "domain")
        s = d.get("sampler", {})
        for k in s:
            if k not in ("N", "route", "reps", "chunk"):
                raise ConfigError(f"sampler.{k}", "unknown key")
        N = s.get("N", 64)
        Ns = N if isinstance(N, list) else [N]
        if not Ns:
            raise ConfigError("sampler.N", "empty list")
        for i, n in enumerate(Ns):
            _num(n, "sampler.N" if not isinstance(N, list) else f"sampler.N[{i}]", 1, integer=True)
        route = s.get("route", "auto")
        if route not in ROUTES:
            raise ConfigError("sampler.route", f"unknown route {route!r}; expected one of {ROUTES}")
        reps = _num(s.get("reps", 100), "sampler.reps", 1, integer=True)
        chunk = _num(s.get("chunk", 250), "sampler.chunk", 1, integer=True)

        a = dict(ANALYSIS_DEFAULTS)
        for k, v in d.get("analysis", {}).items():
            if k not in ANALYSIS_DEFAULTS:
                raise ConfigError(f"analysis.{k}", "unknown key")
            a[k] = v
        cls._validate_analysis(a)
        o = dict(OUTPUT_DEFAULTS)
        for k, v in d.get("output", {}).items():
            if k not in OUTPUT_DEFAULTS:
                raise ConfigError(f"output.{k}", "unknown key")
            o[k] = _num(v, f"output.{k}", 0, integer=True)
        workers = d.get("workers")
        if workers is not None:
            _num(workers, "workers", 1, integer=True)
        out = d.get("output_dir")
        if out is not None and not isinstance(out, str):
            raise ConfigError("output_dir", "expected a string")
        return cls(dom, [int(n) for n in Ns], route, reps, seed, a, o, out, workers, chunk)

    @staticmethod
    def _validate_analysis(a: dict) -> None:
        ops = a["ops"]
        if not isinstance(ops, list):
            raise ConfigError("analysis.ops", "expected a list")
        for i, op in enumerate(ops):
            if op not in OPS:
                raise ConfigError(f"analysis.ops[{i}]", f"unknown analysis {op!r}")
        _num(a["delta"], "analysis.delta", 0, 0.5, lo_open=True, hi_open=True)
        _num(a["t_max"], "analysis.t_max", 0, lo_open=True)
        if a["r_N"] is not None:
            _num(a["r_N"], "analysis.r_N", 1)
        _num(a["window"], "analysis.window", 0, integer=True)
        _num(a["pairs"], "analysis.pairs", 1, integer=True)
        if not (isinstance(a["phi"], list) and len(a["phi"]) == 2):
            raise ConfigError("analysis.phi", "expected two norming specifications [numerator, denominator]")
        for i, p in enumerate(a["phi"]):
            _make_phi(p, f"analysis.phi[{i}]")
        _num(a["ratio_tol"], "analysis.ratio_tol", 0, lo_open=True)
        _num(a["u_min"], "analysis.u_min")
        _num(a["u_max"], "analysis.u_max")
        if not a["u_max"] > a["u_min"]:
            raise ConfigError("analysis.u_max", "must exceed analysis.u_min")
        _num(a["u_points"], "analysis.u_points", 3, integer=True)
        _num(a["slope_tol"], "analysis.slope_tol", 0, lo_open=True)
        _pair(a["x"], "analysis.x")
        _num(a["threshold"], "analysis.threshold", 0, lo_open=True)
        if a["c0"] is not None:
            _num(a["c0"], "analysis.c0")
        _num(a["t"], "analysis.t", 0, lo_open=True)
        if a["A"] is not None:
            parse_shape(a["A"], "analysis.A")
        r = a["resolution"]
        if isinstance(r, list):
            for i, v in enumerate(r):
                _num(v, f"analysis.resolution[{i}]", 2, integer=True)
        else:
            _num(r, "analysis.resolution", 2, integer=True)
        _num(a["boxes"], "analysis.boxes", 1, integer=True)
        _num(a["cut"], "analysis.cut")
        _num(a["n_calib"], "analysis.n_calib", 10, integer=True)
        _num(a["level"], "analysis.level", 0, 1, lo_open=True, hi_open=True)
        _num(a["margin"], "analysis.margin", 0, integer=True)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as f:
                d = tomllib.load(f)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError("<file>", f"TOML syntax error: {err}") from err
        return cls.from_dict(d)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(tomllib.loads(text))

    # --- serialization ----------------------------------------------------

    def to_dict(self, execution: bool = True) -> dict:
        """Plain-data form; ``execution=False`` drops fields that cannot affect results."""
        a = {k: v for k, v in self.analysis.items() if v is not None}
        d = {
            "master_seed": self.master_seed,
            "domain": copy.deepcopy(self.domain),
            "sampler": {"N": list(self.N), "route": self.route, "reps": self.reps, "chunk": self.chunk},
            "analysis": copy.deepcopy(a),
            "output": dict(self.output),
        }
        if execution:
            if self.output_dir is not None:
                d["output_dir"] = self.output_dir
            if self.workers is not None:
                d["workers"] = self.workers
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def content_hash(self) -> str:
        """sha256 of the canonical JSON of the result-determining fields."""
        canon = json.dumps(self.to_dict(execution=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    # --- typed accessors --------------------------------------------------

    @property
    def continuum_domain(self) -> ContinuumDomain:
        return parse_shape(self.domain, "domain")

    def phi_specs(self):
        return tuple(_make_phi(p, f"analysis.phi[{i}]") for i, p in enumerate(self.analysis["phi"]))


def _make_phi(p, path):
    from .extremes import NormingSpec

    if not isinstance(p, dict) or "kind" not in p:
        raise ConfigError(path, "expected a table with a 'kind' key")
    kw = {k: v for k, v in p.items() if k in ("kappa", "scale", "tail_bound")}
    for k in p:
        if k not in ("kind", "nodes", "values", "kappa", "scale", "tail_bound"):
            raise ConfigError(f"{path}.{k}", "unknown key")
    try:
        if p["kind"] == "table":
            return NormingSpec.table(p.get("nodes", []), p.get("values", []), **kw)
        return NormingSpec(p["kind"], **kw)
    except ValueError as err:
        raise ConfigError(path, str(err)) from err


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(Path(path))
