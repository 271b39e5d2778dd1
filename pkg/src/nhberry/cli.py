"""Command-line driver.

Every command takes an optional flat TOML config (``--config``) and flag
overrides for each of its keys; flags win over the file, the file wins over
the defaults listed in ``COMMANDS``.  Results go to ``--output-dir``
(or ``$NHBERRY_OUTPUT_DIR/<command>``, or ``./nhberry-out/<command>``),
followed by ``manifest.json`` which is always written last.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure or
failing ``verify``, 4 I/O error.  On failure a JSON error object is
printed to stdout.  Progress goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigInvalid, NHBerryError
from .io import OutputError, RunWriter, csv_text, json_text

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# --------------------------------------------------------------------------
# defaults table: key -> (type, default, help)

BAND = "band"
FLOATS = "floats"

_MODEL = {
    "z0": (float, 0.0, "non-Hermitian parameter"),
    "degeneracy_tol": (float, 1e-8, "branch-cut / degeneracy tolerance"),
}
_DRIVE = {
    "z": (float, 0.5, "loop height Z"),
    "r": (float, 1.0, "loop radius"),
    "z0": (float, 1.0, "non-Hermitian parameter"),
    "omega": (float, 0.0005 * np.pi, "angular driving rate"),
    "band": (BAND, 1, "band, + or -"),
    "compensation": (str, "ExpectationEnergy",
                     "ExpectationEnergy | InstantaneousEigenvalue | None"),
    "dt": (float, 2e-3, "RK4 step"),
    "n_periods": (float, 1.0, "number of orbits"),
    "fidelity_min": (float, 0.99, "adiabaticity threshold"),
    "check_adiabatic": (bool, True, "raise when fidelity drops below fidelity_min"),
    "degeneracy_tol": (float, 1e-8, "branch-cut / degeneracy tolerance"),
}
_GPE = {
    "n_grid": (int, 2048, "grid points (power of two)"),
    "domain_length": (float, None, "box length (default 32 soliton widths)"),
    "dt": (float, 5e-3, "split-step time step"),
    "g": (float, -3.6e-6, "nonlinear coupling"),
    "delta": (float, 0.5, "Z coupling"),
    "delta0": (float, 1.0, "gain/loss rate"),
    "amplitude": (float, 50.0, "soliton amplitude"),
    "r": (float, 1.0, "Rabi coupling magnitude"),
    "omega": (float, 0.03 * np.pi, "phase rotation rate of the coupling"),
    "band": (BAND, 1, "band, + or -"),
    "compensation": (str, "ExpectationEnergy", "ExpectationEnergy | InstantaneousEigenvalue"),
    "energy_functional": (str, "peak", "peak | peak_local | full"),
    "n_periods": (float, 1.0, "number of orbits"),
    "peak_loss": (float, 0.1, "soliton-loss guard threshold"),
}

SUMMARIES = {
    "field": "connection or curvature on a Y = const plane",
    "charges": "monopole charge map over the branch disk",
    "loop": "closed-loop integral of a connection",
    "evolve": "driven evolution around one orbit with phase decomposition",
    "sweep": "evolve over a list of radii, z0 or driving rates",
    "gpe": "soliton phase from the two-component Gross-Pitaevskii model",
    "gpe-sweep": "gpe over a list of loop radii",
    "verify": "run the acceptance criteria",
}

COMMANDS = {
    "field": {
        "quantity": (str, "curvature", "connection | curvature"),
        "kind": (str, "RR", "RR | LR | TildeRR"),
        "band": (BAND, 1, "band, + or -"),
        **_MODEL,
        "method": (str, "fd", "fd | analytic (curvature, band + only)"),
        "x_min": (float, -2.0, ""), "x_max": (float, 2.0, ""), "nx": (int, 41, ""),
        "z_min": (float, -2.0, ""), "z_max": (float, 2.0, ""), "nz": (int, 41, ""),
        "y": (float, 0.0, "fixed Y of the sampling plane"),
    },
    "charges": {
        "kind": (str, "TildeRR", "RR | LR | TildeRR"),
        "band": (BAND, 1, "band, + or -"),
        **_MODEL,
        "r_max": (float, None, "outer radius (default puts the ring mid-cell)"),
        "n_r": (int, 64, "radial cells"),
        "n_phi": (int, 64, "angular cells"),
        "pillbox_height": (float, 1e-2, "cell height"),
        "method": (str, "auto", "auto | fd | analytic"),
    },
    "loop": {
        "kind": (str, "RR", "RR | LR | TildeRR"),
        "band": (BAND, 1, "band, + or -"),
        **_MODEL,
        "z": (float, 0.5, "loop height"),
        "r": (float, 1.0, "loop radius"),
        "orientation": (str, "ccw", "ccw | cw"),
        "tol": (float, 1e-8, "quadrature tolerance"),
        "principal": (bool, True, "wrap the real part to (-pi, pi]"),
    },
    "evolve": {**_DRIVE, "n_records": (int, 2000, "approximate trace rows")},
    "sweep": {
        **_DRIVE,
        "kind": (str, "radius", "radius | z0 | omega"),
        "values": (FLOATS, [0.25 * k for k in range(1, 15)], "swept values"),
        "jobs": (int, 1, "parallel workers"),
    },
    "gpe": {**_GPE, "n_records": (int, 2000, "approximate trace rows")},
    "gpe-sweep": {
        **_GPE,
        "values": (FLOATS, list(np.linspace(0.25, 3.5, 8)), "r values"),
        "jobs": (int, 1, "parallel workers"),
    },
    "verify": {
        "suite": (str, "primary", "criterion suite"),
        "criteria": (FLOATS, None, "subset of criterion numbers"),
        "jobs": (int, 1, "parallel workers"),
    },
}


def _convert(key, typ, value):
    try:
        if value is None:
            return None
        if typ is BAND:
            from .model import parse_band

            return parse_band(value)
        if typ is FLOATS:
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            if not isinstance(value, (list, tuple)):
                raise TypeError("expected a list")
            return [float(v) for v in value]
        if typ is bool:
            if isinstance(value, str):
                low = value.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return low in ("true", "1", "yes")
            return bool(value)
        if typ is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if typ is float:
            if isinstance(value, bool):
                raise TypeError("bool")
            return float(value)
        return str(value)
    except (TypeError, ValueError, NHBerryError) as exc:
        raise ConfigInvalid(f"key {key!r}: cannot interpret {value!r} ({exc})") from None


def parse_config(command: str, config_path=None, overrides=None) -> dict:
    """Merge defaults, an optional TOML file and overrides into a typed dict."""
    if command not in COMMANDS:
        raise ConfigInvalid(f"unknown command {command!r}")
    table = COMMANDS[command]
    params = {k: v[1] for k, v in table.items()}
    given = {}
    if config_path is not None:
        path = Path(config_path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigInvalid(f"config file {path} does not exist") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigInvalid(f"config file {path}: {exc}") from None
        given.update(data)
    given.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key, value in given.items():
        if key not in table:
            raise ConfigInvalid(f"unknown key {key!r} for command {command!r}")
        params[key] = _convert(key, table[key][0], value)
    return params


# --------------------------------------------------------------------------
# commands


class _Progress:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, msg):
        if not self.quiet:
            print(msg, file=sys.stderr, flush=True)


def _drive_spec(p):
    from .dynamics import DriveSpec

    return DriveSpec(z=p["z"], r=p["r"], omega=p["omega"], n_periods=p["n_periods"],
                     z0=p["z0"], band=p["band"], compensation=p["compensation"],
                     dt=p["dt"], fidelity_min=p["fidelity_min"])


def _gpe_config(p, **over):
    from .gpe import GpeConfig

    keys = [k for k in _GPE]
    args = {k: p[k] for k in keys}
    args.update(over)
    return GpeConfig(**args)


def cmd_field(p, out: RunWriter, log):
    from .geometry import connection_array, curvature_analytic_array, curvature_fd_array
    from .model import ModelConfig, branch

    if p["quantity"] not in ("connection", "curvature"):
        raise ConfigInvalid("key 'quantity' must be connection or curvature")
    if p["method"] not in ("fd", "analytic"):
        raise ConfigInvalid("key 'method' must be fd or analytic")
    if p["nx"] < 1 or p["nz"] < 1:
        raise ConfigInvalid("keys 'nx' and 'nz' must be positive")
    cfg = ModelConfig(p["z0"], p["degeneracy_tol"])
    xs = np.linspace(p["x_min"], p["x_max"], p["nx"])
    zs = np.linspace(p["z_min"], p["z_max"], p["nz"])
    Xg, Zg = np.meshgrid(xs, zs, indexing="ij")
    P = np.stack([Xg.ravel(), np.full(Xg.size, p["y"]), Zg.ravel()], axis=-1)
    # points too close to the branch disk or (for fd curvature) the axis are skipped
    rho = np.hypot(P[:, 0], P[:, 1])
    a = branch(P[:, 0], P[:, 1], P[:, 2], cfg.z0)[0]
    margin = 1e-3
    ok = (np.abs(a) > margin) & (np.hypot(np.maximum(rho - abs(cfg.z0), 0), P[:, 2]) > margin)
    if p["quantity"] == "curvature":
        ok &= rho > margin
    vals = np.full((len(P), 3), np.nan + 1j * np.nan)
    if np.any(ok):
        if p["quantity"] == "connection":
            vals[ok] = connection_array(p["kind"], p["band"], P[ok], cfg)
        elif p["method"] == "analytic":
            if p["band"] != 1:
                raise ConfigInvalid("analytic curvature is available for band + only")
            vals[ok] = curvature_analytic_array(p["kind"], P[ok], cfg)
        else:
            vals[ok] = curvature_fd_array(p["kind"], p["band"], P[ok], cfg)
    header = ["X", "Y", "Z", "valid"] + [f"{c}_{part}" for c in "xyz" for part in ("re", "im")]
    rows = []
    for q, flag, v in zip(P, ok, vals):
        rows.append([*q, int(flag)] + [x for c in v for x in (c.real, c.imag)])
    out.write_csv("field.csv", header, rows)
    summary = {"n_points": len(P), "n_valid": int(ok.sum())}
    out.write_json("summary.json", summary)
    return summary


def cmd_charges(p, out, log):
    from .geometry import disk_charge_map
    from .model import ModelConfig

    cfg = ModelConfig(p["z0"], p["degeneracy_tol"])
    grid = None
    if p["r_max"] is not None or p["n_r"] != 64 or p["n_phi"] != 64:
        z0 = abs(cfg.z0)
        r_max = p["r_max"]
        if r_max is None:
            r_max = p["n_r"] * z0 / (p["n_r"] // 2 - 0.5) if z0 > 0 else 2.0
        grid = (r_max, p["n_r"], p["n_phi"])
    try:
        rep = disk_charge_map(p["kind"], p["band"], cfg, grid, p["pillbox_height"], p["method"])
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    out.write("disk_charges.csv", rep.to_csv())
    summary = rep.summary()
    out.write_json("summary.json", summary)
    return summary


def cmd_loop(p, out, log):
    from .geometry import LoopSpec, loop_phase
    from .model import ModelConfig

    cfg = ModelConfig(p["z0"], p["degeneracy_tol"])
    loop = LoopSpec(p["z"], p["r"], orientation=p["orientation"])
    val = loop_phase(p["kind"], p["band"], loop, cfg, tol=p["tol"], principal=p["principal"])
    summary = {"kind": p["kind"], "band": p["band"], "z": p["z"], "r": p["r"],
               "z0": p["z0"], "phase": val}
    out.write_csv("loop.csv", ["kind", "band", "z", "r", "z0", "phase_re", "phase_im"],
                  [[p["kind"], p["band"], p["z"], p["r"], p["z0"], val.real, val.imag]])
    out.write_json("summary.json", summary)
    return summary


def _stride(n_steps, n_records):
    return max(1, int(np.ceil(n_steps / max(1, n_records))))


def cmd_evolve(p, out, log):
    from .dynamics import evolve, phase_decompose
    from .model import ModelConfig

    spec = _drive_spec(p)
    cfg = ModelConfig(spec.z0, p["degeneracy_tol"])
    n_steps = int(np.ceil(spec.n_periods * spec.period / spec.dt - 1e-9))
    log(f"evolve: {n_steps} RK4 steps")
    tr = evolve(spec, cfg, check_adiabatic=p["check_adiabatic"],
                record_stride=_stride(n_steps, p["n_records"]))
    dec = phase_decompose(tr, spec, cfg)
    header = ["t", "psi1_re", "psi1_im", "psi2_re", "psi2_im", "fidelity", "E_re", "E_im",
              "E_band_re", "E_band_im", "comp_re", "comp_im", "phase_track"]
    rows = []
    for i, t in enumerate(tr.times):
        s = tr.states[i]
        rows.append([t, s[0].real, s[0].imag, s[1].real, s[1].imag, tr.fidelity[i],
                     tr.energy_expect[i].real, tr.energy_expect[i].imag,
                     tr.energy_eigen[i].real, tr.energy_eigen[i].imag,
                     tr.comp_running[i].real, tr.comp_running[i].imag, tr.phase_track[i]])
    out.write_csv("trace.csv", header, rows)
    summary = dec.as_dict()
    out.diagnostics.update({"dt": spec.dt, "n_steps": tr.n_steps,
                            "min_fidelity": tr.min_fidelity, "compiled_kernel": tr.compiled})
    out.write_json("summary.json", summary)
    return summary


def cmd_sweep(p, out, log):
    from dataclasses import replace

    from .dynamics import sweep
    from .model import ModelConfig

    kind = p["kind"]
    if kind not in ("radius", "r", "z0", "omega"):
        raise ConfigInvalid("key 'kind' must be radius, z0 or omega")
    if not p["values"]:
        raise ConfigInvalid("key 'values' must not be empty")
    base = _drive_spec(p)
    # validate every row before starting
    field = {"radius": "r"}.get(kind, kind)
    for v in p["values"]:
        replace(base, **{field: float(v)})

    def prog(i, n, row):
        log(f"sweep: {i}/{n} {field}={row.value:g}" + (f" FAILED {row.error}" if row.error else ""))

    rows = sweep(kind, base, p["values"], ModelConfig(base.z0, p["degeneracy_tol"]),
                 jobs=p["jobs"], check_adiabatic=p["check_adiabatic"], progress=prog)
    header = [field if field != "r" else "r", "phi_g_re", "phi_g_im", "phi_g_tilde_re",
              "phi_g_tilde_im", "theory_rr_re", "theory_rr_im", "theory_tilde_re",
              "theory_tilde_im", "delta_phi_d_re", "delta_phi_d_im", "delta_phi_g_re",
              "delta_phi_g_im", "min_fidelity"]
    data = []
    failed = []
    for row in rows:
        d = row.result
        if d is None:
            failed.append({"value": row.value, "error": row.error})
            data.append([row.value] + [np.nan] * 13)
            continue
        data.append([row.value, d.phi_g.real, d.phi_g.imag, d.phi_g_tilde.real,
                     d.phi_g_tilde.imag, d.phi_g_theory_rr.real, d.phi_g_theory_rr.imag,
                     d.phi_g_theory_tilde.real, d.phi_g_theory_tilde.imag,
                     d.delta_phi_d.real, d.delta_phi_d.imag, d.delta_phi_g.real,
                     d.delta_phi_g.imag, row.min_fidelity])
    out.write_csv("phase_sweep.csv", header, data)
    summary = {"kind": kind, "n_rows": len(rows), "failed": failed}
    out.diagnostics["min_fidelity"] = [row.min_fidelity for row in rows]
    out.write_json("summary.json", summary)
    if failed:
        raise _PartialFailure(f"{len(failed)} sweep rows failed", summary)
    return summary


def cmd_gpe(p, out, log):
    from .gpe import gpe_evolve

    cfg = _gpe_config(p)
    n_steps = int(np.ceil(cfg.n_periods * cfg.period / cfg.dt - 1e-9))
    log(f"gpe: {n_steps} split steps on {cfg.n_grid} points")
    tr = gpe_evolve(cfg, record_stride=_stride(n_steps, p["n_records"]))
    out.write("gpe_trace.csv", tr.to_csv())
    summary = {"extracted_phase": tr.extracted_phase, "comp_integral": tr.comp_integral,
               "dominant_component": tr.dominant, "n_steps": tr.n_steps,
               "final_norm": tr.norms[-1], "final_peak_density": tr.peak_density[-1]}
    out.diagnostics.update({"dt": tr.dt, "n_grid": cfg.n_grid,
                            "weak_nonlinearity_ratio": cfg.weak_nonlinearity_ratio()})
    out.write_json("summary.json", summary)
    return summary


def _gpe_row(args):
    from .errors import NHBerryError as _E
    from .geometry import LoopSpec, loop_phase
    from .gpe import gpe_evolve
    from .model import ModelConfig

    cfg = args
    kind = "RR" if cfg.compensation.value == "ExpectationEnergy" else "TildeRR"
    th = loop_phase(kind, cfg.band, LoopSpec(cfg.delta, cfg.r), ModelConfig(cfg.delta0))
    try:
        return gpe_evolve(cfg).extracted_phase, th, None
    except _E as exc:
        return None, th, f"{type(exc).__name__}: {exc}"


def cmd_gpe_sweep(p, out, log):
    from concurrent.futures import ProcessPoolExecutor

    if not p["values"]:
        raise ConfigInvalid("key 'values' must not be empty")
    cfgs = [_gpe_config(p, r=float(v)) for v in p["values"]]
    if p["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=p["jobs"]) as pool:
            res = list(pool.map(_gpe_row, cfgs))
    else:
        res = []
        for i, c in enumerate(cfgs):
            res.append(_gpe_row(c))
            log(f"gpe-sweep: {i + 1}/{len(cfgs)} r={c.r:g}")
    rows, failed = [], []
    for c, (val, th, err) in zip(cfgs, res):
        if val is None:
            failed.append({"r": c.r, "error": err})
            val = complex(np.nan, np.nan)
        rows.append([c.r, val.real, val.imag, th.real, th.imag])
    out.write_csv("gpe_sweep.csv", ["r", "phase_re", "phase_im", "theory_re", "theory_im"], rows)
    summary = {"compensation": p["compensation"], "n_rows": len(rows), "failed": failed}
    out.write_json("summary.json", summary)
    if failed:
        raise _PartialFailure(f"{len(failed)} gpe-sweep rows failed", summary)
    return summary


def cmd_verify(p, out, log):
    from .acceptance import CRITERIA, run_suite

    if p["suite"] != "primary":
        raise ConfigInvalid("key 'suite': only 'primary' exists")
    numbers = None
    if p["criteria"]:
        numbers = [int(c) for c in p["criteria"]]
        for n in numbers:
            if n not in CRITERIA:
                raise ConfigInvalid(f"key 'criteria': no criterion {n}")

    def prog(res):
        print(res.line(), flush=True)

    results = run_suite(numbers, jobs=p["jobs"], progress=prog)
    report = [{"criterion": r.number, "title": r.title, "passed": r.passed,
               "detail": r.detail, "seconds": r.seconds} for r in results]
    out.write_json("verify.json", report)
    summary = {"passed": sum(r.passed for r in results), "total": len(results)}
    if summary["passed"] != summary["total"]:
        raise _VerifyFailed(f"{summary['total'] - summary['passed']} criteria failed", summary)
    return summary


HANDLERS = {
    "field": cmd_field,
    "charges": cmd_charges,
    "loop": cmd_loop,
    "evolve": cmd_evolve,
    "sweep": cmd_sweep,
    "gpe": cmd_gpe,
    "gpe-sweep": cmd_gpe_sweep,
    "verify": cmd_verify,
}


class _PartialFailure(NHBerryError):
    def __init__(self, msg, summary):
        super().__init__(msg)
        self.summary = summary


class _VerifyFailed(_PartialFailure):
    pass


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigInvalid(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nhberry", description="Complex Berry phases of a driven "
                     "non-Hermitian two-level system.")
    parser.add_argument("--version", action="version", version=f"nhberry {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, table in COMMANDS.items():
        sp = sub.add_parser(name, help=SUMMARIES[name])
        sp.add_argument("--config", help="flat TOML file with keys of this command")
        sp.add_argument("--output-dir", help="directory for results")
        sp.add_argument("--quiet", action="store_true", help="no progress on stderr")
        for key, (typ, default, hlp) in table.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                            help=f"{hlp} (default {default!r})".strip())
    return parser


def _output_dir(command, given):
    if given:
        return Path(given)
    base = os.environ.get("NHBERRY_OUTPUT_DIR")
    return Path(base) / command if base else Path("nhberry-out") / command


def _error_payload(exc):
    return {"status": "error", "error": type(exc).__name__, "message": str(exc),
            "exit_code": getattr(exc, "exit_code", 3)}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: getattr(args, k) for k in COMMANDS[args.command]}
        params = parse_config(args.command, args.config, overrides)
    except ConfigInvalid as exc:
        print(json.dumps(_error_payload(exc)), flush=True)
        return exc.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    out = RunWriter(_output_dir(args.command, args.output_dir), args.command, params)
    log = _Progress(args.quiet)
    try:
        summary = HANDLERS[args.command](params, out, log)
    except (NHBerryError, ValueError) as exc:
        if isinstance(exc, ValueError):
            exc = ConfigInvalid(str(exc))
        payload = _error_payload(exc)
        if isinstance(exc, _PartialFailure):
            payload["error"] = "NumericFailure"
            payload["summary"] = exc.summary
        try:
            out.finish("error", payload)
        except OutputError:
            pass
        print(json_text(payload), end="", flush=True)
        return payload["exit_code"]
    try:
        out.finish("ok")
    except OutputError as exc:
        print(json.dumps(_error_payload(exc)), flush=True)
        return exc.exit_code
    if args.command != "verify":
        print(json_text({"status": "ok", "output_dir": str(out.dir), "summary": summary}),
              end="", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
