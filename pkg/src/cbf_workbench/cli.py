"""Command line interface.

Subcommands: trial (one closed-loop run), sweep (Monte-Carlo tables),
certify (feasibility scan over a state grid), serve (playground service),
rerun (re-execute a saved manifest).

Exit codes: 0 clean, 1 environment or IO failure, 2 usage error,
3 certification violations found.

Option precedence: command-line flags beat --config file entries, which
beat built-in defaults. The config file is a flat `key = value` document
whose keys are the long flag names.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__, bench, certify, filters, models, world
from .bench import TrialConfig
from .models import DOUBLE_INTEGRATOR, SimConfig

USAGE_EXIT = 2
VIOLATION_EXIT = 3

_SYSTEM_ALIASES = {
    "single-integrator": models.SINGLE_INTEGRATOR,
    "double-integrator": models.DOUBLE_INTEGRATOR,
    "manipulator": models.MANIPULATOR,
}


def resolve_system(name: str) -> str:
    if name in models.KNOWN_KINDS:
        return name
    try:
        return _SYSTEM_ALIASES[name]
    except KeyError:
        raise ValueError(
            f"unknown system {name!r}; choose from "
            + ", ".join(sorted(_SYSTEM_ALIASES) + sorted(models.KNOWN_KINDS))
        ) from None


def resolve_family(name: str, system_kind: str) -> str:
    """Map the --filter flag to a concrete family; `naive` picks the
    lookahead order that matches the system's relative degree."""
    if name == "naive":
        return "naive-rd2" if system_kind == DOUBLE_INTEGRATOR else "naive-rd1"
    if name in filters.FAMILIES:
        return name
    raise ValueError(
        f"unknown filter {name!r}; choose from naive, " + ", ".join(filters.FAMILIES)
    )


def parse_config_file(path: str) -> dict:
    """Flat `key = value` lines; # starts a comment; keys mirror flag names."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


class UsageError(Exception):
    pass


def parse_grid(text: str):
    """Grid spec `lo:hi:count,...`, one triple per state dimension."""
    dims = []
    for part in text.split(","):
        pieces = part.split(":")
        if len(pieces) != 3:
            raise UsageError(f"bad grid axis {part!r}, expected lo:hi:count")
        try:
            dims.append((float(pieces[0]), float(pieces[1]), int(pieces[2])))
        except ValueError:
            raise UsageError(f"bad grid axis {part!r}, expected numbers") from None
    return certify.DomainGrid(tuple(dims))


def parse_barrier_spec(path: str, model):
    """One barrier per line: `circle cx cy radius`, `wall nx ny offset`,
    `velocity vmax`. Blank lines and # comments are skipped."""
    from . import barriers as br

    out = []
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read barrier spec: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind, args = fields[0], fields[1:]
        try:
            values = [float(a) for a in args]
            if kind == "circle" and len(values) == 3:
                out.append(br.circle_obstacle(values[:2], values[2], model))
            elif kind == "wall" and len(values) == 3:
                out.append(br.halfplane_wall(values[:2], values[2], model))
            elif kind == "velocity" and len(values) == 1:
                out.append(br.velocity_bound(values[0]))
            else:
                raise ValueError(f"unknown barrier line {line!r}")
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise UsageError(f"{path}: no barriers defined")
    return out


def write_manifest(outdir, command, resolved, master_seed, paths, started):
    doc = {
        "schema_version": 1,
        "command": command,
        "config": resolved,
        "master_seed": master_seed,
        "artifact_version": __version__,
        "outputs": [os.path.basename(p) for p in paths],
        "duration_s": round(time.monotonic() - started, 3),
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbf-workbench",
        description="Safe-control workbench: barrier-filtered trials, "
        "sweep tables, feasibility certification, and the playground service.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", help="output directory")

    t = sub.add_parser("trial", help="run one closed-loop trial")
    add_common(t)
    t.add_argument("--system", help="single-integrator | double-integrator | manipulator")
    t.add_argument("--filter", dest="filter_name", help="cbf | hocbf | naive | naive-rd1 | naive-rd2")
    t.add_argument("--gamma", type=float)
    t.add_argument("--gamma1", type=float)
    t.add_argument("--gamma2", type=float)
    t.add_argument("--vmax", type=float, help="velocity bound (double integrator)")
    t.add_argument("--seed", type=int)
    t.add_argument("--trace-out", help="write the step trace as JSON lines")
    t.add_argument("--dt", type=float)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--goal-tolerance", type=float)
    t.add_argument("--plot", action="store_true", help="render the trajectory (needs --out)")

    s = sub.add_parser("sweep", help="Monte-Carlo table over a benchmark grid")
    add_common(s)
    s.add_argument("--table", type=int, help="1, 2 or 3")
    s.add_argument("--trials", type=int, help="trials per cell (default 100)")
    s.add_argument("--seed", type=int, help="master seed (default 0)")
    s.add_argument("--jobs", type=int, help="worker processes (default $CBF_WORKBENCH_JOBS or 1)")
    s.add_argument("--min-goal-separation", type=float)
    s.add_argument("--no-figures", action="store_true")

    c = sub.add_parser("certify", help="scan a state grid for infeasible states")
    add_common(c)
    c.add_argument("--system")
    c.add_argument("--barrier-spec", help="barrier file; defaults to the benchmark obstacles")
    c.add_argument("--gamma", type=float)
    c.add_argument("--gamma1", type=float)
    c.add_argument("--gamma2", type=float)
    c.add_argument("--vmax", type=float)
    c.add_argument("--grid", help="lo:hi:count per state dimension, comma separated")
    c.add_argument("--restrict", choices=["none", "safe", "kernel"], default=None)
    c.add_argument("--seed", type=int, help="seed for the default benchmark barriers")

    v = sub.add_parser("serve", help="run the playground service")
    add_common(v)
    v.add_argument("--port", type=int)
    v.add_argument("--host", default=None)
    v.add_argument("--static-dir", help="serve a built frontend from this directory")

    r = sub.add_parser("rerun", help="re-execute a saved manifest")
    r.add_argument("manifest")
    r.add_argument("--out", help="override the output directory")
    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from --config entries (flags win)."""
    if not getattr(args, "config", None):
        return args
    values = parse_config_file(args.config)
    for key, text in values.items():
        if key == "filter":
            key = "filter_name"
        if not hasattr(args, key):
            raise UsageError(f"config key {key!r} does not match any {args.command} flag")
        if getattr(args, key) is None or getattr(args, key) is False:
            current = getattr(args, key)
            if isinstance(current, bool):
                setattr(args, key, text.lower() in ("1", "true", "yes", "on"))
            else:
                setattr(args, key, text)
    return args


def _as_float(value, name):
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be a number, got {value!r}") from None


def _as_int(value, name, default=None):
    if value is None:
        return default
    try:
        return int(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be an integer, got {value!r}") from None


def _trial_config(args) -> TrialConfig:
    if not args.system:
        raise UsageError("--system is required")
    system = resolve_system(args.system)
    family = resolve_family(args.filter_name or "cbf", system)
    gamma = _as_float(args.gamma, "--gamma")
    gamma1 = _as_float(args.gamma1, "--gamma1")
    gamma2 = _as_float(args.gamma2, "--gamma2")
    v_max = _as_float(args.vmax, "--vmax")
    if system != DOUBLE_INTEGRATOR and (gamma1 is not None or gamma2 is not None):
        raise UsageError("--gamma1/--gamma2 apply to the double integrator (hocbf) only")
    sim = SimConfig(
        dt=_as_float(args.dt, "--dt") or 0.01,
        max_steps=_as_int(args.max_steps, "--max-steps", 3000),
        goal_tolerance=_as_float(args.goal_tolerance, "--goal-tolerance") or 0.1,
    )
    if system == DOUBLE_INTEGRATOR and v_max is None:
        v_max = 5.0
    try:
        return TrialConfig(
            system=system,
            family=family,
            seed=_as_int(args.seed, "--seed", 0),
            gamma=gamma,
            gamma1=gamma1,
            gamma2=gamma2,
            v_max=v_max,
            sim=sim,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_trial(args) -> int:
    started = time.monotonic()
    config = _trial_config(args)
    collect = bool(args.trace_out) or bool(args.plot)
    env = config.sample_environment()
    result, trace = bench.run_trial(config, env=env, collect_trace=collect)
    paths = []
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            for record in trace:
                fh.write(json.dumps(record) + "\n")
        paths.append(args.trace_out)
    if args.plot:
        if not args.out:
            raise UsageError("--plot needs --out")
        from . import plots

        os.makedirs(args.out, exist_ok=True)
        fig = plots.trajectory_figure(env, config.model(), trace)
        paths.append(plots.save_figure(fig, os.path.join(args.out, "trajectory.png")))
    if args.out and paths:
        write_manifest(
            args.out, "trial", _resolved_trial(args, config), config.seed, paths, started
        )
    print(json.dumps(result.to_json(), indent=2, sort_keys=True))
    return 0


def _resolved_trial(args, config: TrialConfig) -> dict:
    doc = config.to_json()
    doc["trace_out"] = args.trace_out
    doc["plot"] = bool(args.plot)
    return doc


def _default_jobs(args) -> int:
    if getattr(args, "jobs", None) is not None:
        return _as_int(args.jobs, "--jobs")
    env = os.environ.get("CBF_WORKBENCH_JOBS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"CBF_WORKBENCH_JOBS must be an integer, got {env!r}") from None
    return 1


def cmd_sweep(args) -> int:
    started = time.monotonic()
    table = _as_int(args.table, "--table")
    if table not in (1, 2, 3):
        raise UsageError("--table must be 1, 2 or 3")
    trials = _as_int(args.trials, "--trials", 100)
    seed = _as_int(args.seed, "--seed", 0)
    jobs = _default_jobs(args)
    overrides = {}
    sep = _as_float(args.min_goal_separation, "--min-goal-separation")
    if sep is not None:
        overrides["min_goal_separation"] = sep
    res = bench.run_sweep(table, trials=trials, master_seed=seed, jobs=jobs, **overrides)
    paths = []
    if args.out:
        paths = bench.write_outputs(res, args.out, figures=not args.no_figures)
        resolved = {
            "table": table,
            "trials": trials,
            "seed": seed,
            "jobs": jobs,
            "no_figures": bool(args.no_figures),
            "out": args.out,
            **overrides,
        }
        write_manifest(args.out, "sweep", resolved, seed, paths, started)
    sys.stdout.write(bench.format_markdown(res))
    return 0


def _certify_setup(args):
    if not args.system:
        raise UsageError("--system is required")
    system = resolve_system(args.system)
    model = models.model_from_kind(system)
    if args.barrier_spec:
        barrier_list = parse_barrier_spec(args.barrier_spec, model)
    else:
        env = world.sample_environment(system, _as_int(args.seed, "--seed", 0))
        barrier_list = world.environment_barriers(
            env, model, v_max=_as_float(args.vmax, "--vmax")
        )
    gamma = _as_float(args.gamma, "--gamma")
    gamma1 = _as_float(args.gamma1, "--gamma1")
    gamma2 = _as_float(args.gamma2, "--gamma2")
    if gamma1 is not None or gamma2 is not None:
        if gamma1 is None or gamma2 is None:
            raise UsageError("--gamma1 and --gamma2 go together")
        gains = (gamma1, gamma2)
    elif gamma is not None:
        gains = gamma
    else:
        raise UsageError("give --gamma or --gamma1/--gamma2")
    if not args.grid:
        raise UsageError("--grid is required")
    grid = parse_grid(args.grid)
    if len(grid.dims) != model.state_dim:
        raise UsageError(
            f"--grid needs {model.state_dim} axes for {system}, got {len(grid.dims)}"
        )
    return model, barrier_list, gains, grid, (args.restrict or "none")


def cmd_certify(args) -> int:
    started = time.monotonic()
    model, barrier_list, gains, grid, restrict = _certify_setup(args)
    try:
        report = certify.scan_domain(model, barrier_list, gains, grid, restrict=restrict)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    paths = []
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report_path = os.path.join(args.out, "feasibility.json")
        report.save(report_path)
        paths.append(report_path)
        from . import plots

        fig = plots.margin_figure(model, barrier_list, gains, grid, restrict)
        if fig is not None:
            paths.append(plots.save_figure(fig, os.path.join(args.out, "margins.png")))
        resolved = {
            "system": model.kind,
            "barrier_spec": args.barrier_spec,
            "gains": list(gains) if isinstance(gains, tuple) else gains,
            "grid": args.grid,
            "restrict": restrict,
            "seed": _as_int(args.seed, "--seed", 0),
            "vmax": _as_float(args.vmax, "--vmax"),
            "out": args.out,
        }
        write_manifest(args.out, "certify", resolved, resolved["seed"], paths, started)
    return VIOLATION_EXIT if report.violation_count else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import build_app

    port = _as_int(args.port, "--port", 8787)
    host = args.host or "127.0.0.1"
    app = build_app(static_dir=args.static_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        print(f"serve failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_rerun(args) -> int:
    try:
        with open(args.manifest) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read manifest: {exc}", file=sys.stderr)
        return 1
    command = doc.get("command")
    config = doc.get("config", {})
    out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    if command == "sweep":
        argv = ["sweep", "--table", str(config["table"]), "--trials", str(config["trials"]),
                "--seed", str(config["seed"]), "--jobs", str(config.get("jobs", 1)),
                "--out", out]
        if config.get("no_figures"):
            argv.append("--no-figures")
        if config.get("min_goal_separation") is not None:
            argv += ["--min-goal-separation", str(config["min_goal_separation"])]
        return main(argv)
    if command == "certify":
        argv = ["certify", "--system", config["system"], "--grid", config["grid"],
                "--restrict", config["restrict"], "--seed", str(config.get("seed", 0)),
                "--out", out]
        gains = config["gains"]
        if isinstance(gains, list):
            argv += ["--gamma1", str(gains[0]), "--gamma2", str(gains[1])]
        else:
            argv += ["--gamma", str(gains)]
        if config.get("barrier_spec"):
            argv += ["--barrier-spec", config["barrier_spec"]]
        if config.get("vmax") is not None:
            argv += ["--vmax", str(config["vmax"])]
        return main(argv)
    if command == "trial":
        argv = ["trial", "--system", config["system"], "--filter", config["family"],
                "--seed", str(config["seed"]), "--dt", str(config["dt"]),
                "--max-steps", str(config["max_steps"]),
                "--goal-tolerance", str(config["goal_tolerance"])]
        for key, flag in (("gamma", "--gamma"), ("gamma1", "--gamma1"),
                          ("gamma2", "--gamma2"), ("v_max", "--vmax")):
            if config.get(key) is not None:
                argv += [flag, str(config[key])]
        if config.get("trace_out"):
            argv += ["--trace-out", config["trace_out"]]
        if config.get("plot"):
            argv += ["--plot", "--out", out]
        return main(argv)
    print(f"manifest command {command!r} is not rerunnable", file=sys.stderr)
    return 1


_COMMANDS = {
    "trial": cmd_trial,
    "sweep": cmd_sweep,
    "certify": cmd_certify,
    "serve": cmd_serve,
    "rerun": cmd_rerun,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except (UsageError, ValueError) as exc:
        # every ValueError reachable from here is an input-validation
        # failure (system/filter names, gains, grid specs)
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (OSError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
