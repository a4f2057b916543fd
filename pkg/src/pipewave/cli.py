"""Command-line front end: ``pipewave {check,steady,run,table1,reduce} config.json``.

Exit codes: 0 success, 1 check failure or solver failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

from . import diagnostics, mor
from .damping import DampingModel, DampingWarning, check_assumption1
from .galerkin import METHODS, SpaceError, assemble, build_space, certify_norm_equivalence, check_compatibility, sample_state
from .netgraph import NetworkError, load_network, paper_network
from .solvers import SolverError, SolverOptions, integrate, solve_stationary

log = logging.getLogger("pipewave")

DEFAULTS = {
    "network": "paper",
    "allow_dead_ends": False,
    "damping": {"family": "power_abs", "alpha": 1.0, "sigma": 1.0},
    "discretization": {"method": "fem", "h": 0.05},
    "time": {"dt": 0.01, "t_end": 50.0, "sample_times": [0, 10, 20, 30, 40, 50]},
    "newton": {"tol": 1e-10, "max_iter": 50},
    "mor": {"n_sv": 10, "training_h": 0.005, "training_samples": 501, "reduced_quadrature": False,
            "basis_path": "basis.npz"},
    "table1": {"rows": [["fem", 0.2], ["fem", 0.05], ["spectral", 3], ["spectral", 10]], "fit_window": [10, 50]},
    "output": None,
}


class ConfigError(ValueError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(cfg, assignment):
    """Apply ``a.b.c=value``; ``value`` is parsed as JSON, else kept as a string."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {part!r} is not a section")
    node[parts[-1]] = value
    return cfg


def load_config(path, overrides=()):
    cfg = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            cfg = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"cannot parse {p}: {err}") from err
    cfg = _merge(DEFAULTS, cfg)
    for o in overrides:
        apply_override(cfg, o)
    return cfg


def _network(cfg):
    spec = cfg["network"]
    if spec == "paper":
        return paper_network()
    p = Path(spec)
    if not p.is_file():
        raise ConfigError(f"network file not found: {p}")
    return load_network(p, allow_dead_ends=bool(cfg.get("allow_dead_ends", False)))


def _discretization(cfg):
    d = cfg["discretization"]
    method = d.get("method", "fem")
    try:
        if method == "spectral":
            return method, int(d.get("order", 10))
        return method, float(d.get("h", 0.05))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad discretization fragment {d!r}: {err}") from err


def _options(cfg):
    try:
        return SolverOptions.from_config(cfg["time"], cfg["newton"])
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _damping(cfg):
    try:
        return DampingModel.from_config(cfg["damping"])
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def _fmt(x, digits=10, zero=1e-13):
    x = float(x)
    if abs(x) < zero:
        x = 0.0  # round-off, e.g. the symmetric edge of the default network
    return format(x, f".{digits}g")


def _write(text, path, out):
    if path:
        Path(path).write_text(text, encoding="utf-8")
        print(f"wrote {path}", file=out)
    else:
        out.write(text)


def _setup(cfg):
    net = _network(cfg)
    method, res = _discretization(cfg)
    space = build_space(net, method, res)
    return net, space, assemble(space, _damping(cfg))


def cmd_check(cfg, out=sys.stdout):
    net, space, ops = _setup(cfg)
    status = 0
    comp = check_compatibility(space)
    print(f"{'PASS' if comp.passed else 'FAIL'} compatibility: Q = d/dx V {comp.derivative_image_equals_Q} "
          f"(residual {comp.image_residual:.2e}, rank {comp.q_rank}/{comp.q_dim}), "
          f"kernel contained {comp.kernel_contained}", file=out)
    if not comp.passed:
        status = 1
    try:
        ne = certify_norm_equivalence(ops)
        if ne.satisfied:
            tag = "PASS"
        elif ne.lambda_min > 0:
            tag = "WARN"
        else:
            tag, status = "FAIL", 1
        print(f"{tag} norm equivalence: lambda in [{ne.lambda_min:.4f}, {ne.lambda_max:.4f}] "
              f"(band [0.25, 2.25])", file=out)
    except SpaceError as err:
        print(f"FAIL norm equivalence: {err}", file=out)
        status = 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DampingWarning)
        rep = check_assumption1(ops.damping, m_bound=100.0)
    tag = "PASS" if rep.satisfies_d0_positive and rep.c1_smooth else "WARN"
    print(f"{tag} damping: d0 = {rep.d0:g}, d1 = {rep.d1:g}, d2 = {rep.d2:g}, C1 = {rep.c1_smooth}", file=out)
    return status


def cmd_steady(cfg, out=sys.stdout, at_time=None):
    net, space, ops = _setup(cfg)
    o = _options(cfg)
    h = net.final_boundary_values() if at_time is None else net.boundary_values(at_time)
    st = solve_stationary(ops, h, tol=o.newton_tol, max_iter=o.newton_max_iter)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge", "x", "p", "m"])
    for eid, x, p, m in sample_state(ops, st.p, st.m):
        w.writerow([eid, _fmt(x), _fmt(p), _fmt(m)])
    _write(buf.getvalue(), cfg.get("output"), out)
    return 0


def cmd_run(cfg, out=sys.stdout):
    net, space, ops = _setup(cfg)
    o = _options(cfg)
    steady = solve_stationary(ops, net.final_boundary_values(), tol=o.newton_tol, max_iter=o.newton_max_iter)
    start = solve_stationary(ops, net.boundary_values(0.0), tol=o.newton_tol, max_iter=o.newton_max_iter,
                             guess=steady)
    traj = integrate(ops, start, o)
    rep = diagnostics.decay_report(ops, traj, steady, tuple(cfg["table1"]["fit_window"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "E_state", "E_deriv"])
    for t, e, ed in zip(rep.sample_times, rep.energies_state, rep.energies_derivative):
        w.writerow([_fmt(t), _fmt(e, 8), _fmt(ed, 8)])
    _write(buf.getvalue(), cfg.get("output"), out)
    return 0


def _experiment(cfg, rows):
    m = cfg["mor"]
    rq = m.get("reduced_quadrature", False)
    return diagnostics.ExperimentConfig(
        network=_network(cfg),
        damping=_damping(cfg),
        options=_options(cfg),
        rows=rows,
        training_h=float(m.get("training_h", 0.005)),
        training_samples=int(m.get("training_samples", 501)),
        fit_window=tuple(cfg["table1"]["fit_window"]),
        reduced_quadrature=int(rq) if rq and not isinstance(rq, bool) else None,
    )


def _rows(cfg):
    rows = []
    for item in cfg["table1"]["rows"]:
        method, param = item
        rows.append((method, int(param) if method in ("spectral", "mor") else float(param)))
    return rows


def cmd_table1(cfg, out=sys.stdout):
    rows = diagnostics.run_table1(_experiment(cfg, _rows(cfg)))
    _write(diagnostics.table1_csv(rows), cfg.get("output"), out)
    return 0


def cmd_reduce(cfg, out=sys.stdout, evaluate=False):
    m = cfg["mor"]
    n_sv = int(m.get("n_sv", 10))
    exp = _experiment(cfg, [])
    snaps, _, _ = diagnostics.train_reduction(exp)
    model = mor.build_reduced(snaps, n_sv)
    path = m.get("basis_path") or "basis.npz"
    mor.save_basis(model, path)
    print(f"wrote {path} (dim V_H = {model.n_flux}, dim Q_H = {model.n_pres})", file=out)
    if evaluate:
        row = diagnostics.run_reduced_row(exp, snaps, n_sv, model)
        text = diagnostics.table1_csv([row])
        target = cfg.get("output")
        if target and Path(target).is_file() and Path(target).stat().st_size > 0:
            with open(target, "a", encoding="utf-8") as fh:
                fh.write(text.split("\n", 1)[1])
            print(f"appended to {target}", file=out)
        else:
            _write(text, target, out)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="pipewave", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", nargs="?", help="JSON config file (defaults reproduce the network experiment)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path, e.g. time.dt=0.005")
        p.add_argument("-o", "--output", help="output CSV path (default: stdout)")
        p.add_argument("--allow-dead-ends", action="store_true", help="accept interior vertices of degree 1")
        return p

    common(sub.add_parser("check", help="structural checks of spaces, quadrature and damping"))
    st = common(sub.add_parser("steady", help="stationary solution sampled per pipe"))
    st.add_argument("--time", type=float, help="use the boundary values at this time instead of t -> inf")
    common(sub.add_parser("run", help="transient run; energies per sample time"))
    common(sub.add_parser("table1", help="energy decay table for several discretizations"))
    red = common(sub.add_parser("reduce", help="train and store a POD basis"))
    red.add_argument("--evaluate", action="store_true", help="also run the reduced model and emit its row")
    return ap


def main(argv=None, out=None):
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.config, args.set)
        if args.output:
            cfg["output"] = args.output
        if args.allow_dead_ends:
            cfg["allow_dead_ends"] = True
        # fail fast on every fragment before any heavy work
        _options(cfg)
        _damping(cfg)
        _network(cfg)
        method, _ = _discretization(cfg)
        if method not in METHODS:
            raise ConfigError(f"unknown discretization method {method!r}; expected one of {METHODS}")
        if args.command == "check":
            return cmd_check(cfg, out)
        if args.command == "steady":
            return cmd_steady(cfg, out, args.time)
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "table1":
            return cmd_table1(cfg, out)
        return cmd_reduce(cfg, out, args.evaluate)
    except (ConfigError, NetworkError, SpaceError, KeyError, TypeError) as err:
        print(f"pipewave: error: {err}", file=sys.stderr)
        return 2
    except (SolverError, mor.ReductionError, mor.QuadratureError) as err:
        print(f"pipewave: {err}", file=sys.stderr)
        return 1


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
