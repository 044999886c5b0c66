"""Command-line front end.

Wires config parsing, the analysis pipeline (cycle -> tubes -> conditions
-> bounds -> solve / scan), and JSON/CSV report emission.

Exit codes: 0 success, 1 usage/config error, 2 hypothesis failure
(hyperbolicity / period-ratio / time-dependence), 3 condition failure,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import estimate_constants, find_gamma0, time_map_degree
from .cycle import CycleError, HypothesisError, check_A1, find_cycle
from .conditions import SingularVariationalError, check_A2_A3, theorem3_check
from .degree import DegenerateFieldError
from .geom import OffsetError, build_tubes, polyline_length
from .odeflow import BlowUpError
from .solver import (continuation, find_periodic, irrational_scan,
                     least_period_check)
from .system import (ConfigError, EXAMPLE_CONFIG, IRRATIONAL_CONFIG,
                     load_config)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_HYPOTHESIS = 2
EXIT_CONDITION = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# Emission helpers


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON-serializable: {type(o)}")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True,
                               default=_jsonable) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating))
                        else v for v in row])


# ---------------------------------------------------------------------------
# Pipeline context


class Pipeline:
    """Lazily runs the pipeline stages for one config, tracking wall time.

    Later stages pull in earlier ones (cycle -> tubes -> conditions ->
    bounds), so every command sees consistent upstream data.
    """

    def __init__(self, args):
        self.args = args
        self.out = Path(getattr(args, "out", ".") or ".")
        self.out.mkdir(parents=True, exist_ok=True)
        self.timings: dict[str, float] = {}
        with self._stage("load"):
            self.sys, self.cfg = load_config(args.config)
        self.jobs = self._resolve_jobs(args)
        self._lc = None
        self._ratio = None
        self._ts = None
        self._cond = None
        self._bounds = None

    @staticmethod
    def _resolve_jobs(args) -> int:
        jobs = getattr(args, "jobs", None)
        if jobs is None:
            jobs = os.environ.get("CYCLEPERTURB_JOBS", "1")
        try:
            jobs = int(jobs)
        except ValueError:
            raise ConfigError(f"invalid jobs value {jobs!r}") from None
        if jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return jobs

    @contextmanager
    def _stage(self, name: str):
        t0 = time.perf_counter()
        yield
        self.timings[name] = self.timings.get(name, 0.0) \
            + time.perf_counter() - t0

    def knob(self, section: str, key: str, default):
        return self.cfg.get(section, {}).get(key, default)

    # -- resolved parameters ------------------------------------------------

    @property
    def seed(self):
        return [float(v) for v in self.knob("cycle", "seed", (0.5, 0.5))]

    @property
    def gamma(self) -> float:
        g = getattr(self.args, "gamma", None)
        if g is None:
            g = self.knob("tubes", "gamma", 0.2)
        return float(g)

    @property
    def pitch(self) -> float | None:
        p = getattr(self.args, "pitch", None)
        if p is None:
            p = self.knob("tubes", "pitch", None)
        return None if p is None else float(p)

    @property
    def grid(self) -> int:
        g = getattr(self.args, "grid", None)
        if g is None:
            g = self.knob("conditions", "grid", 64)
        return int(g)

    def params(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": self.gamma,
            "pitch": self.pitch,
            "grid": self.grid,
            "jobs": self.jobs,
            "T1": self.sys.T1,
            "params": dict(self.sys.params),
        }

    def manifest(self, command: str, **extra) -> dict:
        params = self.params()
        params.update(extra)
        return {
            "command": command,
            "config": str(self.args.config),
            "parameters": params,
            "tool_version": __version__,
            # the timing block is the only run-to-run variable part
            "timing": {
                "generated_at":
                    datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "wall_s": {k: round(v, 6) for k, v in self.timings.items()},
            },
        }

    # -- stages -------------------------------------------------------------

    @property
    def lc(self):
        if self._lc is None:
            with self._stage("cycle"):
                self._lc = find_cycle(self.sys, self.seed)
        return self._lc

    @property
    def ratio(self):
        if self._ratio is None:
            self._ratio = check_A1(self.lc.T0, self.sys.T1)
        return self._ratio

    def common_period(self) -> float:
        if not self.ratio.rational:
            raise HypothesisError(
                "cycle/forcing period ratio is irrational at tolerance 1e-9; "
                "no common period exists (use the scan command)")
        return self.ratio.T

    @property
    def ts(self):
        if self._ts is None:
            with self._stage("tubes"):
                self._ts = build_tubes(self.lc, self.gamma, self.pitch)
        return self._ts

    @property
    def conditions(self):
        """Direct-route conditions report (pipeline prerequisite)."""
        if self._cond is None:
            with self._stage("conditions"):
                self._cond = check_A2_A3(self.sys, self.lc,
                                         self.common_period(),
                                         n_s=self.grid)
        return self._cond

    @property
    def bounds(self):
        if self._bounds is None:
            cond = self.conditions
            if not (cond.A2_pass and cond.A3_pass):
                raise ConditionFailure(
                    f"direct conditions fail (A2_pass={cond.A2_pass}, "
                    f"A3_pass={cond.A3_pass}); no admissible bound")
            with self._stage("bounds"):
                self._bounds = estimate_constants(
                    self.sys, self.lc, self.ts, self.common_period(),
                    K0=cond.K0, n_t=self.grid)
        return self._bounds


class ConditionFailure(RuntimeError):
    """Raised when a verified topological condition does not hold."""


# ---------------------------------------------------------------------------
# Commands


def cmd_example(args) -> int:
    text = IRRATIONAL_CONFIG if args.irrational else EXAMPLE_CONFIG
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cycle_doc(pipe: Pipeline) -> dict:
    lc, ratio = pipe.lc, pipe.ratio
    return {
        "T0": lc.T0,
        "mu": lc.mu,
        "xi0": lc.xi0,
        "ccw": lc.ccw,
        "newton_steps": lc.newton_steps,
        "n_samples": int(lc.thetas.size),
        "period_ratio": {
            "rational": ratio.rational,
            "l": ratio.l, "k": ratio.k, "T": ratio.T,
            "error": ratio.error, "both_prime": ratio.both_prime,
        },
    }


def cmd_cycle(args) -> int:
    pipe = Pipeline(args)
    doc = _cycle_doc(pipe)
    doc["manifest"] = pipe.manifest("cycle")
    _write_json(pipe.out / "cycle.json", doc)
    _write_csv(pipe.out / "cycle.csv", ["theta", "x1", "x2", "dx1", "dx2"],
               zip(pipe.lc.thetas, *pipe.lc.x_samples, *pipe.lc.dx_samples))
    print(f"cycle: T0={pipe.lc.T0!r}  mu={pipe.lc.mu:.6g}  "
          f"ccw={pipe.lc.ccw}  -> {pipe.out / 'cycle.json'}")
    return EXIT_OK


def cmd_tubes(args) -> int:
    pipe = Pipeline(args)
    ts = pipe.ts
    doc = {
        "gamma": ts.gamma,
        "pitch": ts.pitch,
        "curve_length": polyline_length(ts.curve),
        "boundary_W_length": polyline_length(ts.boundary_W),
        "n_curve": int(len(ts.curve)),
        "n_annulus_samples": int(len(ts.annulus_samples)),
        "ring_offsets": ts.ring_offsets,
        "manifest": pipe.manifest("tubes"),
    }
    _write_json(pipe.out / "tubes.json", doc)
    _write_csv(pipe.out / "curve.csv", ["x1", "x2"], ts.curve)
    _write_csv(pipe.out / "boundary_w.csv", ["x1", "x2"], ts.boundary_W)
    _write_csv(pipe.out / "annulus.csv", ["x1", "x2"], ts.annulus_samples)
    print(f"tubes: gamma={ts.gamma:g}  pitch={ts.pitch:g}  "
          f"-> {pipe.out / 'tubes.json'}")
    return EXIT_OK


def cmd_conditions(args) -> int:
    pipe = Pipeline(args)
    T = pipe.common_period()
    via = args.via
    if via in ("direct", "both"):
        rep = pipe.conditions
    else:
        rep = None
    if via in ("theorem3", "both"):
        with pipe._stage("conditions_floquet"):
            rep_b = theorem3_check(pipe.sys, pipe.lc, T,
                                   n_s=pipe.grid, n_theta=pipe.grid)
        b2 = rep_b.B2_values
        ss = np.linspace(0.0, T, pipe.grid + 1)
        thetas = np.linspace(0.0, pipe.lc.T0, pipe.grid, endpoint=False)
        _write_csv(pipe.out / "b2_grid.csv", ["s", "theta", "value"],
                   ((s, th, b2[i, j]) for i, s in enumerate(ss)
                    for j, th in enumerate(thetas)))
        rep = rep_b if rep is None else rep.merge(rep_b)

    doc = json.loads(rep.to_json())
    doc["via"] = via
    doc["manifest"] = pipe.manifest("conditions", via=via)
    _write_json(pipe.out / "conditions.json", doc)

    checked = [p for p in (rep.A2_pass, rep.A3_pass, rep.B2_pass, rep.B3_pass)
               if p is not None]
    ok = bool(checked) and all(checked)
    print(f"conditions ({via}): K0={rep.K0}  degA3={rep.degA3}  "
          f"B2_min={rep.B2_min}  degB3={rep.degB3}  "
          f"{'PASS' if ok else 'FAIL'}  -> {pipe.out / 'conditions.json'}")
    if not ok:
        raise ConditionFailure(
            "verified conditions do not hold for this configuration")
    return EXIT_OK


def cmd_bounds(args) -> int:
    pipe = Pipeline(args)
    br = pipe.bounds
    with pipe._stage("degree"):
        deg = time_map_degree(pipe.sys, pipe.ts, pipe.common_period())
    doc = json.loads(br.to_json())
    doc["time_map_degree"] = deg
    gamma_grid = pipe.knob("bounds", "gamma_grid", None)
    if gamma_grid:
        with pipe._stage("gamma0"):
            g0, warn = find_gamma0(
                pipe.sys, pipe.lc,
                lambda g: build_tubes(pipe.lc, g, pipe.pitch),
                pipe.lc.T0, [float(g) for g in gamma_grid])
        doc["gamma0"] = g0
        doc["gamma0_warnings"] = warn
    doc["manifest"] = pipe.manifest("bounds")
    _write_json(pipe.out / "bounds.json", doc)
    print(f"bounds: M={br.M:.6g}  Mp={br.Mp:.6g}  Lp={br.Lp:.6g}  "
          f"Lpp={br.Lpp:.6g}  K_gamma={br.K_gamma}  "
          f"eps_gamma={br.eps_gamma}  deg={deg}  "
          f"-> {pipe.out / 'bounds.json'}")
    if deg != 1:
        raise ConditionFailure(
            f"time-T map degree on the tube is {deg}, expected 1")
    return EXIT_OK


def cmd_solve(args) -> int:
    pipe = Pipeline(args)
    T = pipe.common_period()
    br = pipe.bounds
    eps = args.eps if args.eps is not None else \
        float(pipe.knob("solve", "eps", 1e-3))
    if eps < 0:
        raise ConfigError("eps must be nonnegative")
    eps_gamma = br.eps_gamma
    forced = False
    if eps_gamma is not None and eps > eps_gamma:
        if not args.force:
            print(f"error: eps={eps:g} exceeds the admissible bound "
                  f"eps_gamma={eps_gamma:g}; rerun with --force to proceed "
                  "uncertified", file=sys.stderr)
            return EXIT_USAGE
        forced = True

    with pipe._stage("solve"):
        orbits = find_periodic(pipe.sys, eps, T, lc=pipe.lc,
                               gamma=pipe.gamma, restrict=pipe.ts,
                               eps_gamma=eps_gamma)
    orbit_docs = []
    for i, orb in enumerate(orbits):
        m, verdict = least_period_check(orb, pipe.sys.T1, sys=pipe.sys)
        d = orb.to_dict()
        d["least_period_factor"] = m
        d["least_period_verdict"] = verdict
        d["orbit_csv"] = f"orbit_{i}.csv"
        orbit_docs.append(d)
        _write_csv(pipe.out / f"orbit_{i}.csv", ["t", "x1", "x2"],
                   zip(orb.sample_times, orb.samples[:, 0],
                       orb.samples[:, 1]))

    doc = {
        "eps": eps,
        "T": T,
        "eps_gamma": eps_gamma,
        "uncertified": forced,
        "orbits": orbit_docs,
    }
    ladder = pipe.knob("solve", "eps_ladder", None)
    if ladder:
        with pipe._stage("continuation"):
            cont = continuation(pipe.sys, T,
                                [float(e) for e in ladder],
                                lc=pipe.lc, gamma=pipe.gamma,
                                eps_gamma=eps_gamma)
        doc["continuation"] = {
            "rungs": [{"eps": e,
                       "hausdorff_to_cycle":
                           [o.hausdorff_to_cycle for o in orbs],
                       "sides": [o.side for o in orbs]}
                      for e, orbs in cont.rungs],
            "failed_rung": cont.failed_rung,
            "messages": cont.messages,
        }
    doc["manifest"] = pipe.manifest("solve", eps=eps, force=forced)
    _write_json(pipe.out / "solve.json", doc)
    tag = " [UNCERTIFIED]" if forced else ""
    print(f"solve: eps={eps:g}  T={T!r}  orbits={len(orbits)} "
          f"({', '.join(o.side or '?' for o in orbits)}){tag}  "
          f"-> {pipe.out / 'solve.json'}")
    return EXIT_OK


def cmd_scan(args) -> int:
    pipe = Pipeline(args)
    lc, ts = pipe.lc, pipe.ts
    n_periods = int(pipe.knob("scan", "n_periods", 3))
    eps_ladder = [float(e)
                  for e in pipe.knob("scan", "eps_ladder", (1e-3, 5e-4))]
    T_candidates = [n * lc.T0 for n in range(1, n_periods + 1)]

    def one(pair):
        T, eps = pair
        return irrational_scan(pipe.sys, [T], [eps], lc=lc, ts=ts)[0]

    pairs = [(T, eps) for T in T_candidates for eps in eps_ladder]
    with pipe._stage("scan"):
        try:
            if pipe.jobs > 1:
                with ThreadPoolExecutor(max_workers=pipe.jobs) as pool:
                    rows = list(pool.map(one, pairs))
            else:
                rows = [one(p) for p in pairs]
        except ValueError as e:
            raise HypothesisError(str(e)) from e

    _write_csv(pipe.out / "scan.csv", ["T", "eps", "min_residual"],
               ((r["T"], r["eps"], r["min_residual"]) for r in rows))
    floor = min(r["min_residual"] for r in rows)
    doc = {
        "period_ratio_rational": pipe.ratio.rational,
        "T_candidates": T_candidates,
        "eps_ladder": eps_ladder,
        "rows": rows,
        "residual_floor": floor,
        "manifest": pipe.manifest("scan"),
    }
    _write_json(pipe.out / "scan.json", doc)
    print(f"scan: {len(rows)} cells  residual floor={floor:.3g}  "
          f"-> {pipe.out / 'scan.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    """Argparse maps usage errors to exit 2; this tool reserves 2 for
    hypothesis failures, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="TOML config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--gamma", type=float, default=None,
                   help="tube half-width (overrides config)")
    p.add_argument("--pitch", type=float, default=None,
                   help="tube sampling pitch (overrides config)")
    p.add_argument("--grid", type=int, default=None,
                   help="base grid resolution for sweeps")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker parallelism for grid sweeps "
                        "(default: $CYCLEPERTURB_JOBS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cycleperturb",
        description="Periodic solutions of periodically perturbed planar "
                    "systems with a limit cycle.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("cycle", help="locate the unperturbed limit cycle")
    _add_common(p)
    p.set_defaults(func=cmd_cycle)

    p = sub.add_parser("tubes", help="build the tubular neighborhoods")
    _add_common(p)
    p.set_defaults(func=cmd_tubes)

    p = sub.add_parser("conditions",
                       help="verify the existence conditions")
    _add_common(p)
    p.add_argument("--via", choices=("direct", "theorem3", "both"),
                   default="direct",
                   help="direct boundary conditions, the Floquet-frame "
                        "criterion, or both with the cross-implication "
                        "asserted")
    p.set_defaults(func=cmd_conditions)

    p = sub.add_parser("bounds",
                       help="compute constants and the admissible bound")
    _add_common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("solve", help="find periodic solutions at given eps")
    _add_common(p)
    p.add_argument("--eps", type=float, default=None,
                   help="perturbation size (overrides config)")
    p.add_argument("--force", action="store_true",
                   help="run even when eps exceeds the admissible bound "
                        "(output tagged uncertified)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("scan",
                       help="nonexistence residual scan over T = n*T0")
    _add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("example", help="print a bundled example config")
    p.add_argument("--irrational", action="store_true",
                   help="emit the irrational-ratio scan config instead")
    p.add_argument("--out", default=None, help="write to a file")
    p.set_defaults(func=cmd_example)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError,
            PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisError as e:
        print(f"hypothesis failure: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ConditionFailure as e:
        print(f"condition failure: {e}", file=sys.stderr)
        return EXIT_CONDITION
    except (CycleError, BlowUpError, OffsetError, DegenerateFieldError,
            SingularVariationalError, AssertionError, RuntimeError,
            ValueError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
