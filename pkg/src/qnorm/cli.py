"""Command-line front end.

    qnorm <command> [--config FILE] [--key value ...]

Configuration files hold one ``key = value`` pair per line (``#`` starts a
comment).  Every key can also be given as ``--kebab-case`` flag; flags
override the file.  Physics keys (N, q, alpha, mu, p, c, ...) have no
defaults and must be supplied for the commands that use them.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 solver stalled.  Artifacts are written to ``--output-dir`` (default
``$QNORM_OUTPUT_DIR/<command>-<hash>``); each carries the run-manifest hash.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import platform
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from . import analysis as an
from . import kernels
from . import nonlinearity as nl
from . import solver as sv
from .grid import field_to_csv, make_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STALLED = 0, 2, 3, 4
COMMANDS = ("solve", "sweep", "threshold", "check-assumptions", "appendix-demo",
            "gn-estimate", "report")


class ConfigError(ValueError):
    pass


class StalledRun(RuntimeError):
    pass


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


# key -> (parser, default or None for "required when used", doc)
KEYS = {
    "kind": (str, None, "log_power | pure_power (inferred from alpha if absent)"),
    "N": (_int, None, "space dimension"),
    "q": (float, None, "exponent of the q-Laplacian"),
    "alpha": (float, None, "coefficient of s ln s^2"),
    "mu": (float, None, "coefficient of |s|^(p-2) s"),
    "p": (float, None, "power exponent (needed when mu != 0)"),
    "c": (float, None, "mass parameter, ||u||_2 = c"),
    "c_list": (_floats, None, "comma list of increasing masses"),
    "r_max": (float, 16.0, "radius of the computational ball"),
    "n_nodes": (_int, 2048, "number of radial nodes"),
    "step0": (float, 1.0, "initial trial step"),
    "armijo_c": (float, 1e-4, "Armijo sufficient-decrease constant"),
    "backtrack": (float, 0.5, "step reduction factor"),
    "tol_pgrad": (float, 0.0, "projected-gradient tolerance (0: 1e-8 (1+|E|))"),
    "max_iter": (_int, 2000, "iterations per eps stage"),
    "eps_schedule": (_floats, sv.DEFAULT_SCHEDULE, "comma list, strictly decreasing"),
    "delta_s": (float, 1e-8, "smoothing length of the q-term"),
    "init": (str, "gaussian_bump", "gaussian_bump | plateau"),
    "seed": (_int, 0, "random seed"),
    "q_term": (_bool, True, "on/off: include the q-Laplacian"),
    "workers": (_int, 1, "parallel sweep workers"),
    "multi_start": (_bool, True, "on/off: add a width-screened start in sweeps"),
    "c_lo": (float, None, "lower end of the c-bar bracket"),
    "c_hi": (float, None, "upper end of the c-bar bracket"),
    "cbar_tol": (float, 0.05, "c-bar bracket width"),
    "offset": (float, 0.05, "mu offset for the threshold flip runs"),
    "rmax_list": (_floats, None, "comma list of truncation radii (> 10)"),
    "h": (float, 0.01, "grid spacing of the divergence demo"),
    "trials": (_int, 30, "random battery size"),
    "gn_variant": (str, "2", "2 | q: which gradient norm the GN ratio uses"),
    "output_dir": (str, None, "artifact directory"),
}

REQUIRED = {
    "solve": ("N", "q", "alpha", "mu", "c"),
    "sweep": ("N", "q", "alpha", "mu", "c_list"),
    "threshold": ("alpha", "p"),
    "check-assumptions": ("N", "q", "alpha", "mu"),
    "appendix-demo": ("N", "q", "rmax_list"),
    "gn-estimate": ("N", "p"),
    "report": (),
}

SOLVER_KEYS = ("step0", "armijo_c", "backtrack", "tol_pgrad", "max_iter", "eps_schedule",
               "delta_s", "init", "seed", "q_term")


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def echo(self) -> dict:
        out = {}
        for k, v in sorted(self.values.items()):
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def spec(self) -> nl.NonlinearitySpec:
        alpha, mu = self["alpha"], self["mu"]
        kind = self.get("kind")
        if kind is None:
            kind = "pure_power" if alpha == 0 else "log_power"
        p = self.get("p")
        if mu != 0 and p is None:
            raise ConfigError("mu != 0 needs p; add --p <value>")
        try:
            return nl.NonlinearitySpec(kind, self["N"], self["q"], alpha=alpha, mu=mu,
                                       p=4.0 if p is None else p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def grid(self):
        return make_grid(self["N"], self["r_max"], self["n_nodes"])

    def solver(self) -> sv.SolverConfig:
        kw = {k: self[k] for k in SOLVER_KEYS}
        if not kw["tol_pgrad"]:
            kw["tol_pgrad"] = None
        try:
            return sv.SolverConfig(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _normalize(key: str) -> str:
    k = key.strip().lstrip("-").replace("-", "_")
    return "N" if k in ("N", "n_dim") else k


def read_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found; check the --config path")
    out = {}
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[_normalize(k)] = v.strip()
    return out


def _coerce(key: str, raw):
    if key not in KEYS:
        close = [k for k in KEYS if k.lower() == key.lower() or k.startswith(key[:3])]
        hint = f"; did you mean {close[0]!r}?" if close else "; run with --help for the key list"
        raise ConfigError(f"unknown key {key!r}{hint}")
    if not isinstance(raw, str):
        return raw
    try:
        return KEYS[key][0](raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}; expected {KEYS[key][2]}") from None


def parse_config(command: str, file_values: Optional[dict] = None,
                 flag_values: Optional[dict] = None) -> RunConfig:
    """Merge file and flag values (flags win), apply defaults and validate."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose one of {', '.join(COMMANDS)}")
    merged = {}
    for src in (file_values or {}, flag_values or {}):
        for k, v in src.items():
            k = _normalize(k)
            merged[k] = _coerce(k, v)
    missing = [k for k in REQUIRED[command] if merged.get(k) is None]
    if missing:
        flags = " ".join(f"--{k.replace('_', '-')} <value>" for k in missing)
        raise ConfigError(f"{command} needs {', '.join(missing)}; add {flags}")
    values = {k: d for k, (_, d, _) in KEYS.items()}
    values.update(merged)
    if values.get("output_dir") is None:
        values["output_dir"] = None
    if "N" in merged and "q" in merged:
        why = nl.admissibility_violation(values["N"], values["q"])
        if why:
            raise ConfigError(f"inadmissible exponents: {why}")
    cfg = RunConfig(command, values)
    if command in ("solve", "sweep", "check-assumptions"):
        cfg.spec()
    if command in ("solve", "sweep"):
        cfg.solver()
        if command == "solve" and not values["c"] > 0:
            raise ConfigError("c must be positive")
        try:
            cfg.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if command == "sweep":
        cl = values["c_list"]
        if not cl or any(x <= 0 for x in cl) or any(b <= a for a, b in zip(cl, cl[1:])):
            raise ConfigError("c_list must be positive and strictly increasing, e.g. 0.5,1,2")
    if command == "gn-estimate" and values["gn_variant"] not in ("2", "q"):
        raise ConfigError("gn_variant must be 2 or q")
    if command == "gn-estimate" and values["gn_variant"] == "q" and values.get("q") is None:
        raise ConfigError("gn_variant=q needs --q <value>")
    return cfg


# ---------------------------------------------------------------------------
# manifest and artifacts

def versions() -> dict:
    return {"qnorm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernel_backend": kernels.BACKEND}


def manifest_hash(cfg: RunConfig) -> str:
    payload = {"command": cfg.command,
               "config": {k: v for k, v in cfg.echo().items() if k != "output_dir"},
               "versions": versions(), "seed": cfg["seed"]}
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class Artifacts:
    def __init__(self, root: Path, digest: str):
        self.root = root
        self.digest = digest
        self.files = []
        root.mkdir(parents=True, exist_ok=True)

    def header(self) -> list:
        return [f"manifest_hash: {self.digest}"]

    def text(self, name: str, body: str):
        path = self.root / name
        path.write_text(body)
        self.files.append(name)

    def csv(self, name: str, body_with_header: str):
        self.text(name, body_with_header)

    def json(self, name: str, obj: dict):
        self.text(name, json.dumps({"manifest_hash": self.digest, **obj}, indent=2,
                                   default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    return str(o)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def output_root(cfg: RunConfig, digest: str) -> Path:
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    base = Path(os.environ.get("QNORM_OUTPUT_DIR", "qnorm_runs"))
    return base / f"{cfg.command}-{digest[:12]}"


# ---------------------------------------------------------------------------
# commands

def _cmd_solve(cfg: RunConfig, out: Artifacts) -> list:
    spec, grid, scfg = cfg.spec(), cfg.grid(), cfg.solver()
    c = cfg["c"]
    reports = sv.continuation_solve(c, spec, scfg, grid)
    last = reports[-1]
    att = sv.boundary_attainment(last, c)
    qual = sv.qualitative_check(last.field)
    out.json("report.json", {"final": last.to_dict(), "attainment": att.to_dict(),
                             "qualitative": qual.to_dict(),
                             "stages": [r.to_dict() for r in reports]})
    out.csv("trace.csv", last.trace_csv(out.header()))
    out.csv("field.csv", field_to_csv(last.field, out.header()))
    rows = ["eps,energy,lambda,pohozaev,nehari,pgrad_norm,iterations,status"]
    for r in reports:
        eps = "none" if r.eps is None else f"{r.eps:.17g}"
        rows.append(f"{eps},{r.energy.total:.17g},{r.lam:.17g},{r.pohozaev:.17g},"
                    f"{r.nehari:.17g},{r.pgrad_norm:.17g},{r.iterations},{r.status}")
    out.csv("stages.csv", "".join(f"# {h}\n" for h in out.header()) + "\n".join(rows) + "\n")
    summary = [
        f"solve c={c} {spec.kind} N={spec.N} q={spec.q} alpha={spec.alpha} mu={spec.mu}",
        f"final eps={last.eps} status={last.status} energy={last.energy.total:.10g}",
        f"lambda={last.lam:.10g} pohozaev={last.pohozaev:.3e} nehari={last.nehari:.3e}",
        f"attained={att.attained} interior_suspected={att.interior_suspected}",
        f"sign_constant={qual.sign_constant} radially_monotone={qual.radially_monotone}",
    ]
    if any(r.status != "converged" for r in reports):
        bad = next(k for k, r in enumerate(reports) if r.status != "converged")
        raise StalledRun(f"stage {bad} ended {reports[bad].status}")
    return summary


def _cmd_sweep(cfg: RunConfig, out: Artifacts) -> list:
    spec, grid, scfg = cfg.spec(), cfg.grid(), cfg.solver()
    curve = an.sweep_mass(cfg["c_list"], spec, scfg, grid, workers=cfg["workers"],
                          multi_start=cfg["multi_start"])
    out.csv("curve.csv", curve.to_csv(out.header()))
    cb = None
    out.json("curve.json", curve.to_dict())
    if cfg.get("c_lo") is not None and cfg.get("c_hi") is not None:
        try:
            cb = an.find_cbar(spec, cfg["c_lo"], cfg["c_hi"], cfg["cbar_tol"], scfg, grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out.json("cbar.json", cb.to_dict())
    lines = [f"sweep {spec.kind} N={spec.N} q={spec.q} over {len(curve.c)} masses"]
    if cb is not None:
        where = cb.value if not isinstance(cb.value, float) else f"[{cb.lo:.6g}, {cb.hi:.6g}]"
        lines.append(f"c-bar: {where} {cb.note}".rstrip())
    lines += [f"c={c:g} m={m:.10g} lambda={l:.6g} {s}"
              for c, m, l, s in zip(curve.c, curve.m, curve.lam, curve.status)]
    lines += [f"{k}: {'ok' if v['ok'] else 'VIOLATED'}" for k, v in curve.checks.items()]
    return lines


def _cmd_threshold(cfg: RunConfig, out: Artifacts) -> list:
    alpha, p = cfg["alpha"], cfg["p"]
    try:
        flips = None
        if cfg.get("N") is not None and cfg.get("q") is not None and cfg.get("c") is not None:
            grid = make_grid(cfg["N"], cfg["r_max"], cfg["n_nodes"])
            scfg = cfg.solver()
            flips = an.flip_runs(alpha, p, cfg["N"], cfg["q"], cfg["c"], scfg, grid,
                                 cfg["offset"])
        rep = an.threshold_report(alpha, p, flips)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep["mu_star"] = rep["mu_star_closed"]
    out.json("threshold.json", rep)
    lines = [f"mu_star closed={rep['mu_star_closed']:.17g} bisect={rep['mu_star_bisect']:.17g}"]
    lines += [f"{f['side']} mu={f['mu']:.6g}: g4 {f['g4']}, E={f['sphere_energy']:.6g}, "
              f"lambda={f['lambda']:.6g}, existence observed {f['existence_observed']}"
              for f in rep["flip_runs"]]
    return lines


def _cmd_check(cfg: RunConfig, out: Artifacts) -> list:
    rep = nl.check_assumptions(cfg.spec())
    out.json("assumptions.json", {"items": json.loads(rep.to_json())})
    return [f"{it.name}: {it.verdict} {it.note}".rstrip() for it in rep.items]


def _cmd_appendix(cfg: RunConfig, out: Artifacts) -> list:
    try:
        tab = an.appendix_divergence(cfg["N"], cfg["q"], cfg["rmax_list"], h=cfg["h"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.csv("appendix.csv", tab.to_csv(out.header()))
    out.json("appendix.json", {"N": tab.N, "q": tab.q, "checks": tab.checks})
    return [f"R={R:g} I={I:.10g} K2={a:.10g} Kq={b:.10g}"
            for R, I, a, b in zip(tab.r_max, tab.I, tab.K2, tab.Kq)]


def _cmd_gn(cfg: RunConfig, out: Artifacts) -> list:
    q = cfg["q"] if cfg["gn_variant"] == "q" else None
    grid = make_grid(cfg["N"], 20.0, 1024)
    try:
        est = an.estimate_gn_constant(cfg["p"], cfg["N"], cfg["trials"], cfg["seed"], q=q,
                                      grid=grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.json("gn.json", est.to_dict())
    out.csv("gn_field.csv", field_to_csv(est.field, out.header()))
    return [f"GN constant lower bound {est.value:.10g} (battery max {est.battery_max:.10g})"]


def _cmd_report(cfg: RunConfig, out: Artifacts) -> list:
    root = Path(cfg.get("output_dir") or os.environ.get("QNORM_OUTPUT_DIR", "qnorm_runs"))
    lines = []
    for man in sorted(root.rglob("manifest.json")):
        if man.parent == out.root:
            continue
        m = json.loads(man.read_text())
        lines.append(f"{man.parent.name}: {m.get('command')} status={m.get('status')} "
                     f"hash={m.get('hash', '')[:12]}")
        summ = man.parent / "summary.txt"
        if summ.is_file():
            lines += ["    " + ln for ln in summ.read_text().splitlines() if not ln.startswith("#")]
    if not lines:
        lines = [f"no runs found under {root}"]
    return lines


HANDLERS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "threshold": _cmd_threshold,
            "check-assumptions": _cmd_check, "appendix-demo": _cmd_appendix,
            "gn-estimate": _cmd_gn, "report": _cmd_report}


def run(cfg: RunConfig) -> int:
    digest = manifest_hash(cfg)
    root = output_root(cfg, digest)
    if cfg.command == "report":
        root = root / "report" if cfg.get("output_dir") else root
    out = Artifacts(root, digest)
    manifest = {"command": cfg.command, "config": cfg.echo(), "versions": versions(),
                "seed": cfg["seed"], "hash": digest, "started": _now()}
    status, code, message = "ok", EXIT_OK, ""
    summary = []
    try:
        with np.errstate(over="ignore", under="ignore"):
            summary = HANDLERS[cfg.command](cfg, out)
    except ConfigError as exc:
        status, code, message = "config", EXIT_CONFIG, str(exc)
    except StalledRun as exc:
        status, code, message = "stalled", EXIT_STALLED, str(exc)
    except sv.StalledError as exc:
        status, code, message = "stalled", EXIT_STALLED, str(exc)
    except (sv.SolverError, nl.QuadratureError, FloatingPointError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        status, code, message = "numeric", EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    if code != EXIT_OK:
        (root / "FAILED").write_text(f"# manifest_hash: {digest}\n{status}: {message}\n")
        summary = summary + [f"FAILED ({status}): {message}"]
    manifest.update(finished=_now(), status=status, exit_code=code, files=out.files)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    out.text("summary.txt", "".join(f"# {h}\n" for h in out.header()) + "\n".join(summary) + "\n")
    print("\n".join(summary))
    print(f"artifacts: {root}")
    if message:
        print(f"error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qnorm", allow_abbrev=False, description="Normalized ground states of the (2,q)-Laplacian "
        "Schrodinger equation with logarithmic nonlinearity.",
        epilog="keys: " + "; ".join(f"--{k.replace('_', '-')}: {d}"
                                    for k, (_, _, d) in KEYS.items()))
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value file; flags override it")
    return ap


def _split_flags(rest: Sequence[str]) -> dict:
    out, i = {}, 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}; flags look like --key value")
        if "=" in tok:
            k, v = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise ConfigError(f"flag {tok} needs a value")
            k, v = tok[2:], rest[i + 1]
            i += 2
        out[_normalize(k)] = v
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args, rest = ap.parse_known_args(argv)
    try:
        file_vals = read_config_file(args.config) if args.config else {}
        cfg = parse_config(args.command, file_vals, _split_flags(rest))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except Exception:  # last-resort guard: numeric category with traceback
        traceback.print_exc()
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
