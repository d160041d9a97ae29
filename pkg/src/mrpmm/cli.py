"""Command-line front end: ``mrpmm {simulate,solve,policy,backtest,calibrate,report}``.

Every subcommand reads one JSON run configuration (``--config``) and writes
into ``--out``.  Each writes a ``manifest_<command>.json`` carrying the
configuration hash; ``report`` refuses to combine artifacts whose hashes
differ.  Exit codes: 0 ok, 1 validation problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate
from .config import RunConfig
from .errors import MissingArtifact, MRPError, StabilityViolation, ValidationError
from .model import substream
from .pde import (GridSpec, ValueGrid, ZetaField, barrier_parts, richardson, solve_omega,
                  solve_theta, solve_zeta0, solve_zeta1, solve_zeta_exact)
from .policy import (AlwaysOnPolicy, ApproxPolicy, Eta0Policy, ExactPolicy, HoldPolicy,
                     adjustments, export_policy_csv, operator_identity_residual)
from .simulator import BacktestConfig, run_backtest
from .tape import EventTape, market_tape

log = logging.getLogger("mrpmm")

SOLVED = ("theta", "G_plus", "G_minus", "omega", "zeta1", "zeta0",
          "A_plus", "A_minus", "B_plus", "B_minus")


# -- manifests -------------------------------------------------------------------


def _write_manifest(cfg, command, files, extra=None):
    out = cfg.out
    man = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "params_hash": cfg.params.fingerprint(),
        "seed": cfg.seed,
        "version": __version__,
        "files": sorted(str(Path(f).relative_to(out)) for f in files),
    }
    man.update(extra or {})
    (out / f"manifest_{command}.json").write_text(json.dumps(man, indent=2, sort_keys=True))
    return man


def _read_manifest(out, command):
    path = Path(out) / f"manifest_{command}.json"
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run `mrpmm {command}` first")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: corrupt manifest ({exc})") from None


def _require_hash(cfg, command):
    man = _read_manifest(cfg.out, command)
    if man.get("config_hash") != cfg.config_hash():
        raise ValidationError(f"artifacts of `{command}` were produced with a different configuration")
    return man


def _load_grid(path):
    path = Path(path)
    if not path.exists() or not path.with_suffix(".json").exists():
        raise MissingArtifact(f"{path} (or its header) not found")
    try:
        return ValueGrid.from_csv(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: unreadable grid file ({exc})") from None


def _load_fields(cfg):
    _require_hash(cfg, "solve")
    fdir = cfg.out / "fields"
    fields = {name: _load_grid(fdir / f"{name}.csv") for name in SOLVED}
    zpath = fdir / "zeta.csv"
    if zpath.exists():
        try:
            fields["zeta"] = ZetaField.from_csv(zpath)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{zpath}: unreadable field ({exc})") from None
    return fields


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(cfg):
    params = cfg.params
    sec = cfg.section("simulate")
    horizon = params.horizon if sec.get("horizon") is None else float(sec["horizon"])
    tdir = cfg.out / "tapes"
    tdir.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(int(sec["n_paths"])):
        tape = market_tape(params, horizon, substream(cfg.seed, k), p0=float(sec.get("p0", 0.0)),
                           agent_on=bool(sec.get("agent_on", False)))
        tape.meta.update(seed=cfg.seed, path=k, config_hash=cfg.config_hash())
        path = tdir / f"tape_{k:05d}.csv"
        tape.to_csv(path)
        files += [path, path.with_suffix(".json")]
    log.info("wrote %d tapes to %s", int(sec["n_paths"]), tdir)
    return _write_manifest(cfg, "simulate", files, {"horizon": horizon})


def _solve_fields(params, dt):
    grid = GridSpec.build(params, dt)
    theta = solve_theta(params, grid)
    parts = barrier_parts(params, theta)
    G = (parts["G_plus"], parts["G_minus"])
    omega = solve_omega(params, G, grid)
    z1 = solve_zeta1(params, G, grid)
    z0 = solve_zeta0(params, G, z1, grid)
    adj = adjustments(params, z1)
    fields = {"theta": theta, "G_plus": G[0], "G_minus": G[1], "omega": omega, "zeta1": z1,
              "zeta0": z0, "A_plus": adj.A_plus, "A_minus": adj.A_minus,
              "B_plus": adj.B_plus, "B_minus": adj.B_minus}
    return grid, fields


def cmd_solve(cfg, convergence=False):
    params = cfg.params
    dt = float(cfg.section("grid")["dt"])
    grid, fields = _solve_fields(params, dt)
    fdir = cfg.out / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    stamp = {"config_hash": cfg.config_hash(), "params_hash": params.fingerprint()}
    files = []
    for name, vg in fields.items():
        vg.meta = dict(stamp)
        path = fdir / f"{name}.csv"
        vg.to_csv(path)
        files += [path, path.with_suffix(".json")]
    sec = cfg.section("solve")
    if sec.get("exact") and params.eta > 0:
        z = solve_zeta_exact(params, (fields["G_plus"], fields["G_minus"]), grid, sec.get("q_max"))
        z.meta = dict(stamp)
        path = fdir / "zeta.csv"
        z.to_csv(path)
        files += [path, path.with_suffix(".json")]
    extra = {"grid": grid.to_dict()}
    if convergence:
        runs = [fields] + [_solve_fields(params, dt / m)[1] for m in (2, 4)]
        summary = {}
        for name in ("theta", "omega"):
            order, e1, e2 = richardson([r[name] for r in runs])
            summary[name] = {"order": order, "diff_dt_half": e1, "diff_half_quarter": e2}
        path = cfg.out / "convergence.json"
        path.write_text(json.dumps({"dt": dt, **summary}, indent=2, sort_keys=True))
        files.append(path)
        extra["convergence"] = summary
    return _write_manifest(cfg, "solve", files, extra)


def _policies(cfg, fields, names):
    params = cfg.params
    G = (fields["G_plus"], fields["G_minus"])
    out = {}
    for name in names:
        if name == "hold":
            out[name] = HoldPolicy()
        elif name == "always_on":
            out[name] = AlwaysOnPolicy()
        elif name == "eta0":
            out[name] = Eta0Policy(G)
        elif name == "approx":
            adj = adjustments(params, fields["zeta1"])
            out[name] = ApproxPolicy(G, adj, params.eta)
        elif name == "exact":
            if "zeta" not in fields:
                raise MissingArtifact("exact policy needs zeta.csv; run `solve --exact` with eta > 0")
            out[name] = ExactPolicy(fields["zeta"], G, params)
    return out


def cmd_policy(cfg):
    fields = _load_fields(cfg)
    params = cfg.params
    grid = fields["G_plus"].grid
    pdir = cfg.out / "policy"
    pdir.mkdir(parents=True, exist_ok=True)
    names = ["eta0"] + (["approx"] if params.eta > 0 else []) + (["exact"] if "zeta" in fields else [])
    qv = list(range(-2 * params.lot_size, 2 * params.lot_size + 1))
    files = []
    for name, pol in _policies(cfg, fields, names).items():
        path = pdir / f"{name}.csv"
        export_policy_csv(pol, grid, path, None if name == "eta0" else qv)
        files.append(path)
    return _write_manifest(cfg, "policy", files)


def cmd_backtest(cfg):
    fields = _load_fields(cfg)
    params = cfg.params
    sec = cfg.section("backtest")
    pols = _policies(cfg, fields, sec["policies"])
    reports = {}
    for name, pol in pols.items():
        bc = BacktestConfig(n_paths=int(sec["n_paths"]), seed=cfg.seed, policy=pol,
                            p0=float(sec["p0"]), i0=int(sec["i0"]), s0=float(sec["s0"]),
                            x0=float(sec["x0"]), y0=int(sec["y0"]))
        reports[name] = run_backtest(bc, params).to_dict()
    om = fields["omega"].at(0.0, float(sec["s0"]))
    th = fields["theta"].at(0.0, float(sec["s0"]))
    y0, i0 = int(sec["y0"]), int(sec["i0"])
    v_hold = float(sec["x0"]) + y0 * float(sec["p0"]) + i0 * y0 * th - params.eta * y0**2
    doc = {"reports": reports, "v_hold": float(v_hold), "omega0": float(om)}
    path = cfg.out / "backtest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return _write_manifest(cfg, "backtest", [path])


def cmd_calibrate(cfg, tape_dir=None):
    tdir = Path(tape_dir) if tape_dir else cfg.out / "tapes"
    paths = sorted(tdir.glob("tape_*.csv"))
    if not paths:
        raise MissingArtifact(f"no tapes in {tdir}")
    tapes = [EventTape.from_csv(p).validate() for p in paths]
    rep = calibrate(tapes)
    cdir = cfg.out / "calibration"
    cdir.mkdir(parents=True, exist_ok=True)
    path = cdir / "calibration.json"
    path.write_text(rep.to_json(indent=2))
    rep.write_curves(cdir / "curves")
    files = [path, cdir / "curves_hazard.csv", cdir / "curves_lambda.csv"]
    return _write_manifest(cfg, "calibrate", files, {"n_tapes": len(tapes)})


def _acceptance_rows(cfg, fields, ext_results):
    params = cfg.params
    rows = {}
    L = params.lot_size
    res = operator_identity_residual(params, fields["zeta1"], fields["zeta0"], max(params.eta, 1e-3),
                                     range(-2 * L, 2 * L + 1))
    bmin = min(float(fields["B_plus"].values.min()), float(fields["B_minus"].values.min()))
    rows["AC-6"] = ("PASS" if res <= 1e-10 and bmin >= 0 else "FAIL", f"residual {res:.2e}, min B {bmin:.3g}")
    if "zeta" in fields:
        z = fields["zeta"]
        bound = fields["omega"].values[:, None, :] + z.eta * z.q_nodes[None, :, None] ** 2
        ok = z.values.min() >= -1e-12 and np.max(z.values - bound) <= 1e-10
        rows["AC-10"] = ("PASS" if ok else "FAIL", "zeta >= 0 and zeta <= omega + eta q^2 on every node")
    conv = cfg.out / "convergence.json"
    if conv.exists():
        c = json.loads(conv.read_text())
        ok = c["theta"]["order"] >= 0.8 and c["omega"]["order"] >= 0.8
        detail = f"Richardson order theta {c['theta']['order']:.2f}, omega {c['omega']['order']:.2f}"
        prev = rows.get("AC-10")
        if prev:
            ok = ok and prev[0] == "PASS"
            detail = prev[1] + "; " + detail
        rows["AC-10"] = ("PASS" if ok else "FAIL", detail)
    bt = cfg.out / "backtest.json"
    if bt.exists():
        b = json.loads(bt.read_text())
        r = b["reports"]
        if {"eta0", "hold", "always_on"} <= set(r):
            opt = r["eta0"]
            ok = all(opt["mean_utility"] >= r[o]["mean_utility"] - 3 * np.hypot(opt["se_utility"], r[o]["se_utility"])
                     for o in ("hold", "always_on"))
            rows["AC-8"] = ("PASS" if ok else "FAIL", "eta0 >= hold, always_on within 3 SE")
    for key, val in (ext_results or {}).items():
        rows[key] = ("PASS" if val.get("passed") else "FAIL", val.get("detail", ""))
    return rows


def cmd_report(cfg, acceptance=None):
    fields = _load_fields(cfg)
    for cmd in ("policy", "backtest", "simulate", "calibrate"):
        if (cfg.out / f"manifest_{cmd}.json").exists():
            _require_hash(cfg, cmd)
    params = cfg.params
    grid = fields["omega"].grid
    rdir = cfg.out / "report"
    rdir.mkdir(parents=True, exist_ok=True)
    files = []

    # omega sections in s at a few times
    t_sec = [0.0, 0.25 * grid.horizon, 0.5 * grid.horizon, 0.75 * grid.horizon]
    path = rdir / "omega_sections.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s"] + [f"omega_t{t:g}" for t in t_sec])
        for j, s in enumerate(grid.s_nodes):
            w.writerow([repr(float(s))] + [repr(float(fields["omega"].values[grid.t_index(t), j])) for t in t_sec])
    files.append(path)

    G = (fields["G_plus"], fields["G_minus"])
    path = rdir / "regions_eta0.csv"
    export_policy_csv(Eta0Policy(G), grid, path)
    files.append(path)
    if params.eta > 0:
        L = params.lot_size
        path = rdir / "regions_q.csv"
        export_policy_csv(ApproxPolicy(G, adjustments(params, fields["zeta1"]), params.eta), grid, path,
                          list(range(-2 * L, 2 * L + 1)))
        files.append(path)

    ext = None
    if acceptance is not None:
        p = Path(acceptance)
        if not p.exists():
            raise MissingArtifact(f"{p} not found")
        ext = json.loads(p.read_text())
    rows = _acceptance_rows(cfg, fields, ext)
    path = rdir / "acceptance.csv"
    ids = [f"AC-{k}" for k in range(1, 11)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "status", "detail"])
        for key in ids:
            status, detail = rows.get(key, ("SKIP", "needs the acceptance suite results (--acceptance)"))
            w.writerow([key, status, detail])
    files.append(path)
    _write_manifest(cfg, "report", files)
    failed = [k for k, v in rows.items() if v[0] == "FAIL"]
    for key in ids:
        print(f"{key}: {rows.get(key, ('SKIP',))[0]}")
    return 1 if failed else 0


# -- entry point ---------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--paths", type=int, help="number of paths (simulate / backtest)")
    common.add_argument("--eta", type=float, help="risk aversion")
    common.add_argument("--exact", action="store_true", help="also solve the exact zeta system")
    common.add_argument("--grid-dt", type=float, help="lattice step in t and s")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="mrpmm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write market tapes")
    sp = sub.add_parser("solve", parents=[common], help="solve the value-function fields")
    sp.add_argument("--convergence", action="store_true", help="also solve at dt/2, dt/4 and log the order")
    sub.add_parser("policy", parents=[common], help="export quoting decisions")
    sub.add_parser("backtest", parents=[common], help="Monte-Carlo backtest of policies")
    cp = sub.add_parser("calibrate", parents=[common], help="estimate primitives from tapes")
    cp.add_argument("--tapes", type=Path, help="directory of tape_*.csv (default OUT/tapes)")
    rp = sub.add_parser("report", parents=[common], help="tables for plotting and acceptance")
    rp.add_argument("--acceptance", type=Path, help="JSON results written by the acceptance suite")
    return ap


def _overrides(args):
    o = {}
    if args.out is not None:
        o["out"] = str(args.out)
    if args.seed is not None:
        o["seed"] = args.seed
    if args.eta is not None:
        o["eta"] = args.eta
    if args.grid_dt is not None:
        o["grid"] = {"dt": args.grid_dt}
    if args.exact:
        o["solve"] = {"exact": True}
    if args.paths is not None:
        key = "simulate" if args.command == "simulate" else "backtest"
        o[key] = {"n_paths": args.paths}
    return o


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "solve":
            cmd_solve(cfg, convergence=args.convergence)
        elif args.command == "policy":
            cmd_policy(cfg)
        elif args.command == "backtest":
            cmd_backtest(cfg)
        elif args.command == "calibrate":
            cmd_calibrate(cfg, args.tapes)
        elif args.command == "report":
            return cmd_report(cfg, args.acceptance)
    except (ValidationError, StabilityViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MRPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
