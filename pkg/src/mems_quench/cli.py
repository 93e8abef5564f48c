"""Command-line front end: ``mems-quench <command> [options]``.

Every command prints a JSON report.  With ``--output-dir`` the resolved
configuration, the report, CSV profiles and finally a manifest (the
completion marker) are written there.  Exit status: 0 on success, 2 when the
sought phenomenon is absent (no roots, no quench), 1 on errors.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NoQuench, NoRootsInRange, QuenchError
from .similarity import constants

SCHEMA_VERSION = "mems-quench/1"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ABSENT = 2

# per-command parameters and their defaults
DEFAULTS = {
    "constants": {"n": 2},
    "shoot": {"n": 2, "c": 1.0, "eta_max": 1e3, "tol": 1e-10, "beta": 0.0},
    "spectrum": {"n": 2, "c_min": 1e-4, "c_max": 1.5, "max_roots": None, "eta_max": 1e3, "tol": 1e-10, "workers": 1},
    "analyze": {"n": 2, "k_max": 5},
    "picard": {"n": 3, "eta0": 0.0, "v": 1.2, "dv": 0.0, "beta": 0.0, "nodes": 2001},
    "pde": {
        "n": 2,
        "N": 400,
        "epsilon": 1e-2,
        "a": 1.0,
        "u_stop": 1e-4,
        "kappa": 0.002,
        "dt_max": 5e-4,
        "boundary": "neumann",
    },
}

_TYPES = {
    "n": int,
    "c": float,
    "eta_max": float,
    "tol": float,
    "beta": float,
    "c_min": float,
    "c_max": float,
    "max_roots": int,
    "workers": int,
    "k_max": int,
    "eta0": float,
    "v": float,
    "dv": float,
    "nodes": int,
    "N": int,
    "epsilon": float,
    "a": float,
    "u_stop": float,
    "kappa": float,
    "dt_max": float,
    "boundary": str,
}

_POSITIVE = ("tol", "c", "c_min", "c_max", "eta_max", "epsilon", "u_stop", "kappa", "dt_max", "v")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# ---------------------------------------------------------------- config


def build_parser():
    parser = argparse.ArgumentParser(prog="mems-quench", description="Self-similar quenching toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, params in DEFAULTS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", type=Path, default=None, help="JSON file of parameters")
        p.add_argument("--output-dir", type=Path, default=None)
        for key in params:
            flag = "--" + key.replace("_", "-")
            kwargs = {"dest": key, "default": None, "type": _TYPES[key]}
            if key == "boundary":
                kwargs["choices"] = ["neumann", "dirichlet"]
            p.add_argument(flag, **kwargs)
    return parser


def parse_config(argv=None):
    """Resolve defaults < config file < flags into a plain dict."""
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    cfg = dict(DEFAULTS[command])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config file {args.config}: {err}") from err
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in loaded.items():
            if key not in cfg:
                raise ConfigError(f"unknown key {key!r} for command {command!r}")
            cfg[key] = None if value is None else _TYPES[key](value)
    for key in DEFAULTS[command]:
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    validate(command, cfg)
    cfg["command"] = command
    cfg["output_dir"] = None if args.output_dir is None else str(args.output_dir)
    return cfg


def validate(command, cfg):
    if cfg["n"] < 2:
        raise ConfigError(f"--n must be >= 2, got {cfg['n']}")
    for key in _POSITIVE:
        if key in cfg and cfg[key] is not None and not cfg[key] > 0:
            raise ConfigError(f"--{key.replace('_', '-')} must be positive, got {cfg[key]}")
    if command == "pde":
        if cfg["n"] > 5:
            raise ConfigError(
                f"--n {cfg['n']}: the radial solver supports n in 2..5 only; "
                "beyond that the r^(n-1) weight makes the Newton systems too ill-conditioned"
            )
        if cfg["N"] < 8:
            raise ConfigError(f"--N must be >= 8, got {cfg['N']}")
        if cfg["a"] < 0:
            raise ConfigError(f"--a must be non-negative, got {cfg['a']}")
    if command == "spectrum" and not cfg["c_min"] < cfg["c_max"]:
        raise ConfigError("--c-min must be below --c-max")
    if command == "picard" and not (cfg["eta0"] == 0.0 or 0.9 < cfg["eta0"] <= 1.0):
        raise ConfigError(f"--eta0 must be 0 or lie in (0.9, 1], got {cfg['eta0']}")


# ---------------------------------------------------------------- serialisation


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "value"):
        return obj.value
    return obj


def dumps(obj):
    """Sorted keys and shortest round-trip floats, so identical inputs give identical bytes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_constants(cfg):
    return {"constants": constants(cfg["n"]).as_dict()}, {}


def cmd_shoot(cfg):
    from .spectrum import shoot

    out = shoot(cfg["c"], constants(cfg["n"]), eta_max=cfg["eta_max"], tol=cfg["tol"], beta_sing=cfg["beta"])
    files = {}
    if out.trajectory is not None:
        t = out.trajectory
        files["trajectory.csv"] = csv_text(["eta", "v", "dv"], [t.eta, t.v, t.dv])
    return {"shot": out.as_dict()}, files


def cmd_spectrum(cfg):
    from .spectrum import find_spectrum

    res = find_spectrum(
        constants(cfg["n"]),
        cfg["c_min"],
        cfg["c_max"],
        max_roots=cfg["max_roots"],
        tol=cfg["tol"],
        eta_max=cfg["eta_max"],
        workers=cfg["workers"],
    )
    scan = np.array(res.scan, dtype=float)
    files = {"scan.csv": csv_text(["c", "singular_coeff"], [scan[:, 0], scan[:, 1]])}
    return {"spectrum": res.as_dict()}, files


def cmd_analyze(cfg):
    from . import linearized as lin
    from .errors import FitIllConditioned

    consts = constants(cfg["n"])
    phase = lin.phase_plane_integrate(consts)
    L = lin.lyapunov_values(phase, consts)
    report = {
        "phase_plane": {
            "s_start": float(phase.s[0]),
            "s_end": float(phase.s[-1]),
            "endpoint": [float(phase.Z[-1]), float(phase.dZ[-1])],
            "equilibrium": lin.equilibrium(consts),
            "lyapunov_start": float(L[0]),
            "lyapunov_end": float(L[-1]),
            "lyapunov_max_increase": float(np.max(np.diff(L))),
            "regime": consts.regime.value,
        }
    }
    try:
        mc = lin.matching_constants(consts, phase=phase)
        report["matching"] = mc.as_dict()
        report["matching"]["predicted_ratio"] = float(np.exp(-4 * np.pi / (3 * consts.b)))
    except FitIllConditioned:
        A3, A4 = lin.fit_node_constants(phase, consts)
        report["matching"] = {"A3": A3, "A4": A4}
    eig = []
    for k in range(cfg["k_max"] + 1):
        for lam in (Fraction(2 * k - 1), Fraction(2 * k) + Fraction(2, 3)):
            eig.append(lin.eigen_polynomial(lam, cfg["n"]).as_dict())
    report["eigenfunctions"] = eig
    files = {"phase_plane.csv": csv_text(["s", "Z", "dZ", "L"], [phase.s, phase.Z, phase.dZ, L])}
    return report, files


def cmd_picard(cfg):
    from .picard import PicardProblem, picard_solve

    consts = constants(cfg["n"])
    p = PicardProblem.from_state(cfg["eta0"], cfg["v"], cfg["dv"], cfg["n"], beta=cfg["beta"])
    sol = picard_solve(p, consts, nodes=cfg["nodes"])
    order = np.argsort(sol.eta)
    report = {
        "picard": {
            "eta_range": [float(sol.eta.min()), float(sol.eta.max())],
            "delta": sol.delta,
            "iterations": sol.iterations,
            "contraction": sol.contraction,
            "sigma": [p.sigma1, p.sigma2],
            "basis": p.basis.value,
            "z0": p.z0,
            "z0_star": p.z0_star,
        }
    }
    files = {"picard.csv": csv_text(["eta", "v", "dv"], [sol.eta[order], sol.v[order], sol.dv[order]])}
    return report, files


def cmd_pde(cfg):
    from . import pde

    rep = pde.run(
        cfg["n"],
        cfg["N"],
        epsilon=cfg["epsilon"],
        a=cfg["a"],
        u_stop=cfg["u_stop"],
        kappa=cfg["kappa"],
        dt_max=cfg["dt_max"],
        boundary=cfg["boundary"],
    )
    files = {}
    for i, s in enumerate(rep.snapshots):
        files[f"snapshot_{i:03d}_t{s.t!r}.csv"] = csv_text(["r", "u"], [rep.r, s.u])
    for i, (xi, V) in enumerate(rep.rescaled):
        files[f"rescaled_{i:03d}.csv"] = csv_text(["xi", "V"], [xi, V])
    files["history.csv"] = csv_text(["t", "min_u", "argmin_r"], rep.history.T)
    out = rep.as_dict()
    out["collapse_distances"] = pde.collapse_distances(rep)
    return {"pde": out}, files


COMMANDS = {
    "constants": cmd_constants,
    "shoot": cmd_shoot,
    "spectrum": cmd_spectrum,
    "analyze": cmd_analyze,
    "picard": cmd_picard,
    "pde": cmd_pde,
}


def write_outputs(out_dir, cfg, report_text, files):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    texts = {"config.json": dumps({"schema": SCHEMA_VERSION, "config": cfg}), "report.json": report_text}
    texts.update(files)
    for name in sorted(texts):
        (out_dir / name).write_text(texts[name])
    manifest = {
        "schema": SCHEMA_VERSION,
        "files": {name: hashlib.sha256(texts[name].encode()).hexdigest() for name in sorted(texts)},
    }
    (out_dir / "manifest.json").write_text(dumps(manifest))


def run_command(cfg, stdout=None):
    stdout = stdout or sys.stdout
    body, files = COMMANDS[cfg["command"]](cfg)
    # the echoed config leaves out where it was written, so reports do not depend on it
    echo = {k: v for k, v in cfg.items() if k != "output_dir"}
    text = dumps({"schema": SCHEMA_VERSION, "config": echo, **body})
    stdout.write(text)
    if cfg.get("output_dir"):
        write_outputs(cfg["output_dir"], echo, text, files)
    return EXIT_OK


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except ConfigError as err:
        print(f"mems-quench: error: {err}", file=sys.stderr)
        return EXIT_ERROR
    try:
        return run_command(cfg)
    except (NoRootsInRange, NoQuench) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ABSENT
    except (QuenchError, ValueError) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
