"""Command-line interface.

    teichmix [--config FILE] [--seed N] [--arith exact|float] [--out DIR] COMMAND ...

Commands: ``track``, ``graph``, ``alphabet``, ``roof``, ``pressure``, ``mix``.
Every report is JSON with the configuration, its hash and the hashes of the
input files embedded.  Exit codes: 0 success, 1 I/O error, 2 failed
invariant or numerical precondition.  Graph caches live in
``$TEICHMIX_CACHE`` (default ``.teichmix-cache``).
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import measurecone as mc
from . import mixlab as ml
from . import pipeline as pl
from . import splitflow as sf
from . import symcode as sc
from . import thermo as th
from . import tracknet as tn

CACHE_ENV = "TEICHMIX_CACHE"
EXIT_OK, EXIT_IO, EXIT_INVARIANT = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    arith: str = "exact"
    lp_eps: float = 1e-9
    eig_tol: float = 1e-12
    seed: int = 0
    depth: int = 3
    loop_cap: int = 10
    marks: int = 2
    s_cap: int = 16
    max_return: int = 3
    pressure_N: int = 12
    samples: int = 10_000
    dt: float = 0.25
    t_factor: float = 30.0
    cylinder: int = 5
    out: str = "."

    def __post_init__(self):
        if self.arith not in ("exact", "float"):
            raise ConfigError(f"arith must be exact or float, not {self.arith!r}")
        for name in ("lp_eps", "eig_tol", "dt", "t_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("loop_cap", "marks", "s_cap", "max_return", "pressure_N", "samples", "cylinder"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.depth < 0:
            raise ConfigError("depth must be nonnegative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path: str | None, **overrides) -> "Config":
        data = {}
        if path:
            data = json.loads(Path(path).read_text())
            unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, ".teichmix-cache"))


def _clean(x):
    """JSON-safe conversion of numpy scalars and arrays."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def report(cfg: Config, command: str, result: dict, inputs: dict | None = None) -> str:
    doc = {"command": command, "config": cfg.to_dict(), "config_hash": cfg.digest(),
           "inputs": inputs or {}, "result": result}
    return json.dumps(_clean(doc), sort_keys=True, indent=1) + "\n"


def emit(cfg: Config, name: str | None, text: str) -> None:
    """Print to stdout, or write under ``cfg.out`` when a name is given."""
    if name is None:
        sys.stdout.write(text)
        return
    path = Path(cfg.out) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    sys.stdout.write(f"{path}\n")


# ------------------------------------------------------------------ track
def cmd_track(cfg: Config, args) -> int:
    t = tn.load(args.file)
    inputs = {str(args.file): file_hash(args.file)}
    if args.action == "validate":
        rep = tn.validate(t)
        res = {"passed": rep.passed, "problems": list(rep.problems), "euler_characteristic": rep.euler_characteristic,
               "genus": rep.genus_from_euler, "recurrent": mc.is_recurrent(t, cfg.lp_eps)}
        emit(cfg, args.report, report(cfg, "track validate", res, inputs))
        return EXIT_OK if rep.passed else EXIT_INVARIANT
    if args.action == "type":
        tt = tn.topological_type(t)
        res = {"type": str(tt), "orientable": tn.is_orientable(t), "dimension": mc.dimension(t)}
        emit(cfg, args.report, report(cfg, "track type", res, inputs))
        return EXIT_OK
    # split
    large = tn.large_branches(t)
    if not large:
        raise tn.NoLargeBranches("track has no large branches")
    label = args.choices or "R" * len(large)
    if len(label) != len(large) or set(label) - set("LR"):
        raise tn.IncompleteChoices(f"need {len(large)} choices from L/R, got {label!r}")
    ch = {e: (tn.RIGHT if c == "R" else tn.LEFT) for e, c in zip(large, label)}
    new, E = tn.full_numbered_split(t, ch)
    if args.report:
        emit(cfg, args.report, new.dumps() + "\n")
    else:
        sys.stdout.write(new.dumps() + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ graph
def graph_cache_path(cfg: Config, seed_file) -> Path:
    key = hashlib.sha256(f"{file_hash(seed_file)}:{cfg.depth}".encode()).hexdigest()[:16]
    return cache_dir() / f"graph-{key}.json"


def _float_cone_check(E: np.ndarray, target: tn.TrainTrack, source: tn.TrainTrack, eps: float) -> bool:
    img = np.asarray(E, dtype=float) @ mc.vertex_cycle_matrix(target)
    return bool((img >= -eps).all() and np.abs(source.switch_matrix @ img).max(initial=0.0) <= eps)


def cmd_graph(cfg: Config, args) -> int:
    seed = tn.load(args.file)
    path = graph_cache_path(cfg, args.file)
    cached = path.exists()
    if cached:
        try:
            g = sf.SplittingGraph.from_json(path.read_text())
        except (ValueError, KeyError) as exc:
            sys.stderr.write(f"corrupt graph cache {path}: {exc}; remove it to rebuild\n")
            return EXIT_INVARIANT
    else:
        g = sf.build_graph(seed, cfg.depth)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(g.to_json())
    ok = 0
    for e in g.edges:
        E = sf.edge_matrix(e)
        tgt, src = g.nodes[e.target], g.nodes[e.source]
        ok += sf.maps_cone_into(E, tgt, src) if cfg.arith == "exact" else _float_cone_check(E, tgt, src, cfg.lp_eps)
    res = {"nodes": len(g.nodes), "edges": len(g.edges), "dead": len(g.dead), "cone_inclusions": ok,
           "cache": str(path.name)}
    emit(cfg, args.report, report(cfg, "graph build", res, {str(args.file): file_hash(args.file)}))
    return EXIT_OK if ok == len(g.edges) else EXIT_INVARIANT


# --------------------------------------------------------------- alphabet
def _alphabet(cfg: Config, fixture: str) -> pl.CodedAlphabet:
    return pl.coded_alphabet(fixture, cfg.loop_cap, cfg.marks, cfg.s_cap, cfg.max_return)


def cmd_alphabet(cfg: Config, args) -> int:
    alph = _alphabet(cfg, args.fixture)
    res = {"marked": [list(m.labels) for m in alph.coding.marked], "S_letters": len(alph.S),
           "S_classes": {f"{i},{m}": n for (i, m), n in sorted(_class_counts(alph.S).items())},
           "A_letters": sc.alphabet_records(alph.A)}
    emit(cfg, args.report, report(cfg, "alphabet build", res, {args.fixture: file_hash(pl.fixture_path(args.fixture))}))
    return EXIT_OK


def _class_counts(S) -> dict:
    out: dict = {}
    for s in S:
        out[s.cls] = out.get(s.cls, 0) + 1
    return out


# ------------------------------------------------------------------- roof
def cmd_roof(cfg: Config, args) -> int:
    rng = np.random.default_rng(cfg.seed)
    if args.roof_const is not None:
        rep = ml.good_roof_check(constant=args.roof_const, letters=args.letters)
        inputs = {}
    else:
        alph = _alphabet(cfg, args.fixture)
        rep = ml.good_roof_check(alph.Bs, alph.cell, rng=rng)
        inputs = {args.fixture: file_hash(pl.fixture_path(args.fixture))}
    res = dataclasses.asdict(rep)
    res["verdicts"] = list(rep.verdicts)
    emit(cfg, args.report, report(cfg, "roof check", res, inputs))
    return EXIT_OK if all(rep.verdicts) else EXIT_INVARIANT


# --------------------------------------------------------------- pressure
def cmd_pressure(cfg: Config, args) -> int:
    if args.full_shift is not None:
        shift = th.RoofShift.full_constant(args.full_shift, args.roof_const if args.roof_const is not None else 1.0)
        inputs = {}
    else:
        alph = _alphabet(cfg, args.fixture)
        shift = th.letter_shift(alph.Bs)
        inputs = {args.fixture: file_hash(pl.fixture_path(args.fixture))}
    est = th.gurevich_pressure(shift, args.s, 0, cfg.pressure_N)
    res = {"s": args.s, "N": cfg.pressure_N, "P": est.P, "band": est.band, "log_Z": est.Z}
    if args.tail:
        keep = list(range(shift.size))
        if args.full_shift is None:
            om = alph.omegas
            R = float(np.percentile(om, args.percentile))
            keep = [i for i in keep if om[i] > R]
            res["R"] = R
        res["delta"] = th.tail_exponent(shift, keep, N=cfg.pressure_N)
    emit(cfg, args.report, report(cfg, "pressure", res, inputs))
    return EXIT_OK


# -------------------------------------------------------------------- mix
def cmd_mix(cfg: Config, args) -> int:
    if args.roof_const is not None:
        flow = ml.constant_flow(args.letters, args.roof_const, cfg.dt)
        good = ml.good_roof_check(constant=args.roof_const, letters=args.letters)
        cyl = tuple(range(min(cfg.cylinder, max(args.letters // 2, 1))))
        truncation = {"letters": args.letters, "roof": args.roof_const}
        inputs = {}
    else:
        alph = _alphabet(cfg, args.fixture)
        setup = pl.fixture_flow(alph, cfg.dt, cfg.seed)
        flow = setup.flow
        good = ml.good_roof_check(alph.Bs, alph.cell, rng=np.random.default_rng(cfg.seed))
        cyl = pl.heaviest_cylinder(setup.weights, cfg.cylinder)
        truncation = {"letters": len(alph.A), "max_return": cfg.max_return, "s_cap": cfg.s_cap}
        inputs = {args.fixture: file_hash(pl.fixture_path(args.fixture))}
    f = ml.Observable(cyl)
    t_max = cfg.t_factor * flow.min_roof
    t, C = ml.correlation(flow, f, f, t_max)
    fit = ml.decay_rate_fit(t, C)
    res = {"c": fit.rate, "r2": fit.r2, "t_range": [0.0, t_max], "fit_range": list(fit.t_range),
           "truncation": truncation, "states": flow.states, "r1": flow.min_roof,
           "mixing": fit.mixing(), "good_roof": list(good.verdicts), "cylinder": list(cyl)}
    if args.csv or args.svg:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
    if args.csv:
        ml.write_csv(Path(cfg.out) / args.csv, t, C)
    if args.svg:
        ml.write_svg(Path(cfg.out) / args.svg, t, C)
    emit(cfg, args.report, report(cfg, "mix correlate", res, inputs))
    return EXIT_OK


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teichmix", description=__doc__.split("\n\n")[0])
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--arith", choices=("exact", "float"))
    ap.add_argument("--out")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="validate, classify or split a track file")
    p.add_argument("action", choices=("validate", "type", "split"))
    p.add_argument("file")
    p.add_argument("--choices", help="L/R per large branch in branch order (split)")
    p.add_argument("--report", help="write output under --out instead of stdout")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("graph", help="build the numbered splitting graph")
    p.add_argument("action", choices=("build",))
    p.add_argument("file", nargs="?", default=str(pl.fixture_path(pl.FLAGSHIP)))
    p.add_argument("--depth", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("alphabet", help="build the coded alphabet of a fixture")
    p.add_argument("action", choices=("build",))
    p.add_argument("--fixture", default=pl.FLAGSHIP)
    p.add_argument("--max-return", type=int, dest="max_return")
    p.add_argument("--report")
    p.set_defaults(func=cmd_alphabet)

    p = sub.add_parser("roof", help="good-roof checks")
    p.add_argument("action", choices=("check",))
    p.add_argument("--fixture", default=pl.FLAGSHIP)
    p.add_argument("--roof-const", type=float, dest="roof_const")
    p.add_argument("--letters", type=int, default=3)
    p.add_argument("--report")
    p.set_defaults(func=cmd_roof)

    p = sub.add_parser("pressure", help="Gurevich pressure of -s times the roof")
    p.add_argument("--full-shift", type=int, dest="full_shift", help="full shift on this many letters")
    p.add_argument("--roof-const", type=float, dest="roof_const")
    p.add_argument("--fixture", default=pl.FLAGSHIP)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--tail", action="store_true", help="also locate the zero of the pressure")
    p.add_argument("--percentile", type=float, default=20.0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_pressure)

    p = sub.add_parser("mix", help="correlation decay of the suspension flow")
    p.add_argument("action", choices=("correlate",))
    p.add_argument("--fixture", default=pl.FLAGSHIP)
    p.add_argument("--roof-const", type=float, dest="roof_const")
    p.add_argument("--letters", type=int, default=5)
    p.add_argument("--dt", type=float)
    p.add_argument("--csv")
    p.add_argument("--svg")
    p.add_argument("--report")
    p.set_defaults(func=cmd_mix)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {"seed": args.seed, "arith": args.arith, "out": args.out,
                     "depth": getattr(args, "depth", None), "max_return": getattr(args, "max_return", None),
                     "pressure_N": getattr(args, "N", None), "dt": getattr(args, "dt", None)}
        cfg = Config.load(args.config, **overrides)
        return args.func(cfg, args)
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except (ConfigError, tn.TrackError, mc.ConeError, sf.SplitFlowError, sc.CodingError,
            th.ThermoError, ml.MixError) as exc:
        sys.stderr.write(f"{type(exc).__name__}: {exc}\n")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
