"""Command-line front end.

Commands: ``matrix``, ``scatter``, ``sweep``, ``spectrum``, ``trajectory``.
Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import exact
from .dynamics import (IntegratorControls, integrate, prepare_scattering_state,
                       random_initial_condition, scatter_experiment)
from .errors import NumericalError, ThreeBodyError, ValidationError
from .potentials import Family, PotentialSpec
from .spectra import AngularGrid, angular_spectrum, confined_spectrum_2d, isospectrality_report

log = logging.getLogger("threebody")

COMMANDS = ("matrix", "scatter", "sweep", "spectrum", "trajectory")
SWEEP_HEADER = ["delta", "trial", "seed", "phi_in", "energy", "max_p_error", "max_a_error",
                "e_drift", "b2_drift", "status"]
TRAJECTORY_HEADER = ["t", "x1", "x2", "x3", "p1", "p2", "p3", "r", "phi", "E", "B2"]


def fmt(v) -> str:
    """Fixed 17-significant-digit rendering; NaN/inf are never emitted."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if not math.isfinite(x):
        raise NumericalError("non-finite value in output")
    return format(x + 0.0, ".17g")  # + 0.0 drops negative zero


def dump_json(obj, indent: int = 2, _level: int = 0) -> str:
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}"{k}": {dump_json(v, indent, _level + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dump_json(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dump_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return fmt(obj)


def _floats(text: str, n: Optional[int] = None) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad number list {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ValidationError(f"expected {n} comma-separated values, got {text!r}")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one-line diagnostic instead of the full usage block
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="threebody", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--family", default="A", help="calogero | wolfes | A | B")
    ap.add_argument("--g", type=float, default=1.0)
    ap.add_argument("--f", type=float, default=None, help="second coupling (family B)")
    dg = ap.add_mutually_exclusive_group()
    dg.add_argument("--delta", type=float, default=None, help="angle in radians")
    dg.add_argument("--delta-frac", type=float, default=None, help="delta = F * pi/3")
    ap.add_argument("--omega", type=float, default=0.0)
    ap.add_argument("--m", type=float, default=1.0)
    ap.add_argument("--hbar", type=float, default=1.0)
    ig = ap.add_mutually_exclusive_group()
    ig.add_argument("--p", default=None, help="incoming momenta p1,p2,p3")
    ig.add_argument("--phi-in", type=float, default=None)
    ap.add_argument("--energy", type=float, default=1.0)
    ap.add_argument("--a", default="0,0,0", help="incoming offsets a1,a2,a3")
    ap.add_argument("--r0", type=float, default=None)
    ap.add_argument("--rel-tol", type=float, default=1e-10)
    ap.add_argument("--abs-tol", type=float, default=1e-12)
    ap.add_argument("--mode", choices=("angular", "confined", "iso"), default="angular")
    ap.add_argument("--grid", default="4096", help="grid size (comma list for --mode iso)")
    ap.add_argument("--k", type=int, default=6)
    ap.add_argument("--extent", type=float, default=None)
    ap.add_argument("--deltas", default=None, help="comma-separated deltas for sweep / iso")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--stride", type=int, default=1, help="trajectory sample stride")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--output", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


@dataclass
class RunConfig:
    command: str
    spec: PotentialSpec
    args: argparse.Namespace

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        family = Family.parse(args.family)
        delta = 0.0
        if args.delta_frac is not None:
            delta = args.delta_frac * math.pi / 3.0
        elif args.delta is not None:
            delta = args.delta
        f = args.f if args.f is not None else (1.0 if family is Family.B else 0.0)
        if args.command == "matrix":
            spec = None
        else:
            spec = PotentialSpec(family, g=args.g, f=f, delta=delta, omega=args.omega,
                                 m=args.m, hbar=args.hbar)
        args.delta_value = delta
        return cls(args.command, spec, args)


def _controls(args) -> IntegratorControls:
    return IntegratorControls(rel_tol=args.rel_tol, abs_tol=args.abs_tol,
                              sample_stride=max(1, args.stride))


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _flatten(d: dict) -> tuple[list[str], list]:
    header, row = [], []
    for k, v in d.items():
        if isinstance(v, (list, tuple)):
            for i, x in enumerate(v, 1):
                header.append(f"{k}_{i}")
                row.append(x)
        else:
            header.append(k)
            row.append(v)
    return header, row


def cmd_matrix(cfg: RunConfig) -> str:
    delta = cfg.args.delta_value
    d_star, mirrored, q = exact.canonicalize_delta(delta)
    tm = exact.transfer_matrix(d_star)
    M = exact.sector_transfer_entries(delta)
    M = np.where(M == 0.0, 0.0, M)  # no negative zeros in output
    out = {"delta": delta, "delta_canonical": d_star, "mirrored": mirrored, "shift": q,
           "a": tm.a, "b": tm.b, "matrix": [list(row) for row in M]}
    if cfg.args.format == "csv":
        return _csv(["row", "c1", "c2", "c3"], [[i + 1, *row] for i, row in enumerate(M)])
    return dump_json(out) + "\n"


def _incoming(args):
    if args.p is not None:
        return {"p_in": _floats(args.p, 3)}
    if args.phi_in is None:
        raise ValidationError("scatter needs --p or --phi-in")
    return {"phi_in": args.phi_in, "energy": args.energy}


def cmd_scatter(cfg: RunConfig) -> str:
    args = cfg.args
    rep = scatter_experiment(cfg.spec, a_in=_floats(args.a, 3), controls=_controls(args),
                             r0=args.r0, **_incoming(args))
    d = rep.to_dict()
    if args.format == "csv":
        header, row = _flatten(d)
        return _csv(header, [row])
    return dump_json(d) + "\n"


def trial_seed(master: int, delta_index: int, trial: int) -> int:
    ss = np.random.SeedSequence([master & 0xFFFFFFFFFFFFFFFF, delta_index, trial])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(job) -> list:
    """One sweep row; top-level so worker processes can import it."""
    spec, delta_index, trial, seed, controls = job
    rng = np.random.default_rng(seed)
    phi_in, energy, a = random_initial_condition(spec, rng)
    try:
        rep = scatter_experiment(spec, phi_in, energy, a, controls)
    except ThreeBodyError as exc:
        log.warning("trial %d at delta %s failed: %s", trial, spec.delta, exc)
        status = "validation_error" if isinstance(exc, ValidationError) else "numerical_error"
        return [spec.delta, trial, seed, phi_in, energy, "", "", "", "", status]
    return [spec.delta, trial, seed, phi_in, energy, rep.max_p_error, rep.max_a_error,
            rep.E_drift, rep.B2_drift, "ok"]


def cmd_sweep(cfg: RunConfig) -> tuple[str, bool]:
    from dataclasses import replace
    args = cfg.args
    deltas = _floats(args.deltas) if args.deltas else [cfg.spec.delta]
    controls = _controls(args)
    jobs = [(replace(cfg.spec, delta=d), i, t, trial_seed(args.seed, i, t), controls)
            for i, d in enumerate(deltas) for t in range(args.trials)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_trial, jobs))
    else:
        rows = [run_trial(j) for j in jobs]
    failed = any(r[-1] != "ok" for r in rows)
    if args.format == "json":
        return dump_json([dict(zip(SWEEP_HEADER, r)) for r in rows]) + "\n", failed
    return _csv(SWEEP_HEADER, rows), failed


def cmd_spectrum(cfg: RunConfig) -> str:
    args = cfg.args
    spec = cfg.spec
    grids = [int(v) for v in _floats(args.grid)]
    if args.mode == "angular":
        res = angular_spectrum(spec, AngularGrid.for_spec(spec, grids[0]), args.k)
        d = res.to_dict()
    elif args.mode == "confined":
        res = confined_spectrum_2d(spec, grids[0], args.extent, args.k)
        d = res.to_dict()
        d.pop("error_estimate")
    else:
        deltas = _floats(args.deltas) if args.deltas else [spec.delta]
        rep = isospectrality_report(spec, deltas, grids, args.k, args.extent, jobs=args.jobs)
        rows = rep.rows()
        if args.format == "csv":
            return _csv(list(rows[0]), [list(r.values()) for r in rows])
        return dump_json({"deltas": deltas, "rows": rows}) + "\n"
    if args.format == "csv":
        n = len(d["eigenvalues"])
        cols = [k for k in ("l", "eigenvalues", "extrapolated", "error_estimate", "parities") if k in d]
        return _csv(cols, [[d[c][i] for c in cols] for i in range(n)])
    return dump_json(d) + "\n"


def cmd_trajectory(cfg: RunConfig) -> str:
    args = cfg.args
    state = prepare_scattering_state(cfg.spec, impact_offsets=_floats(args.a, 3), r0=args.r0,
                                     **_incoming(args))
    tr = integrate(cfg.spec, state, _controls(args))
    rows = [[tr.t[i], *tr.positions[i], *tr.momenta[i], tr.r[i], tr.phi[i], tr.E[i], tr.B2[i]]
            for i in range(len(tr.t))]
    if args.format == "json":
        return dump_json([dict(zip(TRAJECTORY_HEADER, r)) for r in rows]) + "\n"
    return _csv(TRAJECTORY_HEADER, rows)


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


_VALUE_FLAGS = {"--p", "--a", "--deltas", "--delta", "--delta-frac", "--phi-in", "--g", "--f", "--omega"}


def _attach_negative_values(argv: Sequence[str]) -> list[str]:
    """Rewrite ``--p -1,0,1`` as ``--p=-1,0,1`` so argparse keeps negative lists."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            elif nxt.startswith("-") and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == "."):
                out.append(f"{tok}={nxt}")
            else:
                out.extend([tok, nxt])
        else:
            out.append(tok)
    return out


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_attach_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(args)
        failed = False
        if cfg.command == "matrix":
            text = cmd_matrix(cfg)
        elif cfg.command == "scatter":
            text = cmd_scatter(cfg)
        elif cfg.command == "sweep":
            text, failed = cmd_sweep(cfg)
        elif cfg.command == "spectrum":
            text = cmd_spectrum(cfg)
        else:
            text = cmd_trajectory(cfg)
        _emit(text, args.output)
    except ValidationError as exc:
        print(f"threebody: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"threebody: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 3 if failed else 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
