"""Command-line batch runner: ``maxreg --experiment maxreg --method bdf2 ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from . import converge as conv_mod
from .cq import cq_weights_impulse, kernel_decay_report
from .methods import (
    PoleError,
    RungeKuttaTableau,
    bdf_coefficients,
    check_a_stability,
    k_or_s,
    parse_method,
)
from .regularity import _fmt, _parse_exponent, linfty_log_factor, uniformity_scan, SCAN_HEADER
from .spatial import DiscreteOperator, SingularShiftError, laplacian
from .stepper import StepFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "method": "bdf2",
    "operator": {"kind": "laplacian", "dim": 1, "n": 32, "bc": "dirichlet", "length": 1.0},
    "n_list": [16, 64, 256],
    "tau_list": [2.0**-4, 2.0**-6, 2.0**-8],
    "p": 2,
    "q": 2,
    "mode": "power-iteration",
    "seed": 0,
    "format": "csv",
}


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    def __init__(self, message: str, report: "Report | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class Report:
    header: list[str]
    rows: list[list[str]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    @staticmethod
    def _typed(cell: str):
        if cell == "":
            return None
        if cell in ("true", "false"):
            return cell == "true"
        for cast in (int, float):
            try:
                return cast(cell)
            except ValueError:
                pass
        return cell

    def to_json(self) -> str:
        records = [{h: self._typed(c) for h, c in zip(self.header, r)} for r in self.rows]
        return json.dumps(records, indent=1) + "\n"

    def render(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()


def schema() -> dict:
    return json.loads(resources.files("maxreg").joinpath("config.schema.json").read_text())


# ---- configuration -------------------------------------------------------


def _float_list(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok.startswith("2^"):
            out.append(2.0 ** float(tok[2:]))
        elif "/" in tok:
            a, b = tok.split("/")
            out.append(float(a) / float(b))
        else:
            out.append(float(tok))
    return out


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _exponent(text: str):
    try:
        return float(text)
    except ValueError:
        return text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="maxreg", description="Discrete maximal regularity experiments.")
    ap.add_argument("--config", help="JSON config file; flags override its entries")
    ap.add_argument("--experiment", choices=schema()["properties"]["experiment"]["enum"])
    ap.add_argument("--method", help="be, cn, bdf<k>, radau-iia, gauss")
    ap.add_argument("--k", type=int)
    ap.add_argument("--stages", type=int)
    ap.add_argument("--operator", dest="op_kind", choices=["laplacian", "scalar"])
    ap.add_argument("--dim", type=int, choices=[1, 2])
    ap.add_argument("--grid-n", type=int)
    ap.add_argument("--bc", choices=["dirichlet", "neumann"])
    ap.add_argument("--value", type=float, help="scalar operator value")
    ap.add_argument("--phi", type=float, help="rotation angle in degrees")
    ap.add_argument("--p", type=_exponent)
    ap.add_argument("--q", type=_exponent)
    ap.add_argument("--mode", choices=["exact-svd", "power-iteration", "boyd-ascent", "linfty-exact"])
    ap.add_argument("--tol", type=float)
    ap.add_argument("--tau-list", type=_float_list, help="comma list; 2^-4 and 1/16 accepted")
    ap.add_argument("--n-list", type=_int_list)
    ap.add_argument("--h-list", type=_float_list)
    ap.add_argument("--t-final", type=float)
    ap.add_argument("--linear", action="store_true", help="converge: drop the nonlinearity")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=["csv", "json"])
    return ap


def resolve_config(args: argparse.Namespace) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    flat = {
        "experiment": args.experiment, "method": args.method, "k": args.k, "stages": args.stages,
        "p": args.p, "q": args.q, "mode": args.mode, "tol": args.tol, "tau_list": args.tau_list,
        "n_list": args.n_list, "h_list": args.h_list, "t_final": args.t_final, "seed": args.seed,
        "out": args.out, "format": args.format,
    }
    cfg.update({k: v for k, v in flat.items() if v is not None})
    if args.linear:
        cfg["nonlinear"] = False
    op = dict(cfg.get("operator", {}))
    for key, val in (("kind", args.op_kind), ("dim", args.dim), ("n", args.grid_n), ("bc", args.bc),
                     ("value", args.value), ("phi_degrees", args.phi)):
        if val is not None:
            op[key] = val
    if op:
        cfg["operator"] = op
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    merged = {**DEFAULTS, **cfg}
    merged["operator"] = {**DEFAULTS["operator"], **cfg.get("operator", {})}
    return merged


def _method(cfg):
    try:
        return parse_method(cfg["method"], cfg.get("k"), cfg.get("stages"))
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def make_operator(spec: dict, h: float | None = None) -> DiscreteOperator:
    """Operator from a config entry; ``h`` overrides the grid size (n = 1/h cells)."""
    phi = math.radians(spec.get("phi_degrees", 0.0))
    if spec.get("kind") == "scalar":
        op = DiscreteOperator.diagonal([float(spec.get("value", -1.0))])
    else:
        n = spec["n"]
        length = spec.get("length", 1.0)
        if h is not None:
            cells = round(length / h)
            if not math.isclose(cells * h, length, rel_tol=1e-9):
                raise ConfigError(f"h = {h} does not divide the interval length")
            n = cells - 1 if spec["bc"] == "dirichlet" else cells
        op = laplacian(spec.get("dim", 1), n, spec["bc"], length)
    if phi:
        op.eigensystem()
        op = op.rotated(phi)
    return op


def _operators(cfg) -> dict:
    spec = cfg["operator"]
    if "h_list" in cfg and spec.get("kind") != "scalar":
        return {h: make_operator(spec, h) for h in cfg["h_list"]}
    op = make_operator(spec)
    h = op.grid.h if op.grid is not None else math.nan
    return {h: op}


# ---- experiments ----------------------------------------------------------


def cmd_angles(cfg) -> Report:
    rep = Report(["k", "alpha_degrees"])
    for k in range(1, 7):
        rep.rows.append([str(k), _fmt(check_a_stability(bdf_coefficients(k)).alpha_degrees)])
    return rep


def cmd_stability(cfg) -> Report:
    m = _method(cfg)
    r = check_a_stability(m)
    rinf = r.r_infinity
    rep = Report(["method", "k_or_s", "is_a_stable", "alpha_degrees", "r_inf_real", "r_inf_imag",
                  "boundary_max_modulus", "notes"])
    rep.rows.append([
        m.label, str(k_or_s(m)), "true" if r.is_a_stable else "false", _fmt(r.alpha_degrees),
        "" if rinf is None else _fmt(rinf.real), "" if rinf is None else _fmt(rinf.imag),
        _fmt(r.boundary_max_modulus), "; ".join(r.notes),
    ])
    return rep


def cmd_tableau(cfg) -> Report:
    m = _method(cfg)
    rep = Report(["method", "entry", "i", "j", "value"])
    if isinstance(m, RungeKuttaTableau):
        for i in range(m.s):
            for j in range(m.s):
                rep.rows.append([m.label, "a", str(i + 1), str(j + 1), _fmt(m.a[i, j])])
        for i in range(m.s):
            rep.rows.append([m.label, "b", str(i + 1), "", _fmt(m.b[i])])
        for i in range(m.s):
            rep.rows.append([m.label, "c", str(i + 1), "", _fmt(m.c[i])])
    else:
        for j, (a, b) in enumerate(zip(m.alpha, m.beta)):
            rep.rows.append([m.label, "alpha", str(j), "", _fmt(a)])
            rep.rows.append([m.label, "beta", str(j), "", _fmt(b)])
    return rep


def cmd_maxreg(cfg) -> Report:
    m = _method(cfg)
    extra = {"tol": cfg["tol"]} if "tol" in cfg else {}
    table = uniformity_scan(m, _operators(cfg), cfg["n_list"], cfg["tau_list"], cfg["p"], cfg["q"],
                            cfg["mode"], seed=cfg["seed"], **extra)
    rep = Report(list(SCAN_HEADER), [r.row() for r in table.rows] + [table.summary_row()])
    failed = [r for r in table.rows if r.error]
    if failed and len(failed) == len(table.rows):
        raise NumericalFailure(f"all {len(failed)} scan cells failed: {failed[0].error}", rep)
    return rep


def cmd_cq(cfg) -> Report:
    m = _method(cfg)
    rep = Report(["method", "tau", "n", "t_next", "norm_A_e_n", "product"])
    for op in _operators(cfg).values():
        for tau in cfg["tau_list"]:
            n = max(cfg["n_list"])
            report = kernel_decay_report(cq_weights_impulse(m, op, tau, n), op, 2)
            for i, t, nrm, prod in report.rows():
                rep.rows.append([m.label, _fmt(tau), str(i), _fmt(t), _fmt(nrm), _fmt(prod)])
    return rep


def cmd_linfty_log(cfg) -> Report:
    m = _method(cfg)
    rep = Report(["method", "tau", "h", "N", "c_inf", "c_inf_over_logN"])
    for h, op in _operators(cfg).items():
        for tau in cfg["tau_list"]:
            for r in linfty_log_factor(m, op, cfg["n_list"], tau):
                rep.rows.append([m.label, _fmt(tau), _fmt(h), str(r.N), _fmt(r.c_inf),
                                 "" if math.isnan(r.ratio) else _fmt(r.ratio)])
    return rep


def cmd_converge(cfg) -> Report:
    kwargs = {"tau_list": cfg["tau_list"], "p": _parse_exponent(cfg["p"]),
              "nonlinear": cfg.get("nonlinear", True)}
    if "t_final" in cfg:
        kwargs["t_final"] = cfg["t_final"]
    if "operator" in cfg and "n" in cfg["operator"]:
        kwargs["grid_n"] = cfg["operator"]["n"]
    report = conv_mod.convergence_experiment(**kwargs)
    rep = Report(list(conv_mod.ConvergenceRow.HEADER), [r.row() for r in report.rows])
    if all(r.failed for r in report.rows):
        raise NumericalFailure("Newton failed for every step size", rep)
    return rep


COMMANDS = {
    "angles": cmd_angles,
    "stability": cmd_stability,
    "tableau": cmd_tableau,
    "maxreg": cmd_maxreg,
    "cq-decay": cmd_cq,
    "linfty-log": cmd_linfty_log,
    "converge": cmd_converge,
}


def run(cfg: dict) -> Report:
    return COMMANDS[cfg["experiment"]](cfg)


def _emit(report: Report, cfg: dict) -> None:
    text = report.render(cfg.get("format", "csv"))
    out = cfg.get("out")
    if out and out != "-":
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else EXIT_CONFIG
    try:
        cfg = resolve_config(args)
        report = run(cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except NumericalFailure as exc:
        if exc.report is not None:
            _emit(exc.report, cfg)
        return _fail(EXIT_NUMERIC, exc)
    except (StepFailure, SingularShiftError, PoleError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, exc)
    _emit(report, cfg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
