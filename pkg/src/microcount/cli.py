"""Command-line runner.

Settings come from an optional JSON config file; command-line flags
override it. Exit codes: 0 success, 1 configuration error, 2 computation
error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Sequence

from . import eprb
from .distributions import OUTCOMES, outcome_key, parse_outcome_key
from .eprb import Backend, EPRBScenario
from .errors import MicrocountError
from .hidden_variable import LambdaOne, monte_carlo
from .lambda_many import born_quantity, convergence_sweep, sweep_csv
from .linalg import StateVector

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_COMPUTE = 2

DEFAULT_ANGLES = (0.0, 90.0, 45.0, 135.0)
DEFAULT_SCHEDULE = tuple(8 * 2**k for k in range(8))


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    angles_deg: tuple[float, float, float, float] = DEFAULT_ANGLES
    state: Any = "singlet"
    ancilla_dims: tuple[int, int] = eprb.DEFAULT_ANCILLA
    n: int | str | None = None
    backend: str | None = None
    trials: int | None = None
    seed: int | None = None
    format: str = "json"
    out: str | None = None
    tolerance: float = eprb.DEFAULT_TOLERANCE
    schedule: tuple[int, ...] = DEFAULT_SCHEDULE
    cell: str = "++"
    pair: tuple[str, str] = ("a", "b")
    thetas_deg: tuple[float, ...] = tuple(range(0, 181, 5))

    def validate(self, command: str) -> RunConfig:
        if len(self.angles_deg) != 4:
            raise ConfigError("angles_deg needs four values (a, a', b, b')")
        if not all(isinstance(x, (int, float)) and math.isfinite(x) for x in self.angles_deg):
            raise ConfigError(f"angles must be finite numbers, got {list(self.angles_deg)}")
        if self.backend is not None and self.backend not in {b.value for b in Backend}:
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.n is not None and self.n != "auto" and (not isinstance(self.n, int) or self.n < 2):
            raise ConfigError(f"n must be an integer >= 2 or 'auto', got {self.n!r}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        if len(self.ancilla_dims) != 2 or not all(isinstance(d, int) and d >= 1 for d in self.ancilla_dims):
            raise ConfigError(f"ancilla_dims must be two integers >= 1, got {self.ancilla_dims!r}")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not (isinstance(self.tolerance, (int, float)) and self.tolerance >= 0):
            raise ConfigError("tolerance must be nonnegative")
        if self.pair[0] not in eprb.ALICE_SETTINGS or self.pair[1] not in eprb.BOB_SETTINGS:
            raise ConfigError(f"pair must be one of {eprb.SETTING_PAIRS}, got {self.pair!r}")
        try:
            parse_outcome_key(self.cell)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if command == "sample" or self.backend == Backend.MONTE_CARLO.value:
            if self.trials is None:
                raise ConfigError("Monte Carlo needs --trials")
            if self.seed is None:
                raise ConfigError("Monte Carlo needs --seed")
        if command in ("sample", "dump-expansion") or self.backend in ("counting", "montecarlo"):
            if self.n is None:
                raise ConfigError(f"{command} needs --n")
        return self


_TUPLE_FIELDS = {"angles_deg", "ancilla_dims", "schedule", "pair", "thetas_deg"}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v for k, v in doc.items()}


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _n_arg(text: str):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"n must be an integer or 'auto', got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--backend", choices=[b.value for b in Backend])
    common.add_argument("--n", type=_n_arg, help="microstate count, or 'auto'")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--tolerance", type=float)
    common.add_argument("--angles", type=_float_list, dest="angles_deg", help="a,a',b,b' in degrees")
    common.add_argument("--ancilla", type=_int_list, dest="ancilla_dims", help="d_A,d_B")
    common.add_argument("--state", choices=["singlet", "photon-box"])

    parser = _Parser(prog="microcount", description="Microstate counting for EPRB scenarios")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("chsh", parents=[common], help="CHSH value per backend")
    p = sub.add_parser("converge", parents=[common], help="counting bounds along an n schedule")
    p.add_argument("--schedule", type=_int_list)
    p.add_argument("--cell", help="outcome cell such as ++ or +-")
    sub.add_parser("locality", parents=[common], help="locality condition battery")
    sub.add_parser("sample", parents=[common], help="lambda-one Monte Carlo at one setting pair")
    sub.add_parser("dump-expansion", parents=[common], help="branch expansion at one setting pair")
    p = sub.add_parser("sweep", parents=[common], help="E(theta) under each available backend")
    p.add_argument("--thetas", type=_float_list, dest="thetas_deg")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if args.command in ("converge", "sweep") and "format" not in values:
        cfg = replace(cfg, format="csv")
    return cfg.validate(args.command)


def _spin_state(state) -> StateVector:
    if state == "singlet":
        return eprb.singlet()
    if state == "photon-box":
        return eprb.photon_box_state()
    if isinstance(state, dict) and "product" in state:
        prod = state["product"]
        try:
            up_a = eprb.spin_up(eprb.planar(math.radians(float(prod["alice_deg"]))))
            up_b = eprb.spin_up(eprb.planar(math.radians(float(prod["bob_deg"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"product state needs numeric alice_deg and bob_deg: {exc}") from None
        return eprb.product_spin_state(up_a, up_b)
    raise ConfigError(f"unknown state {state!r}")


def scenario_from(cfg: RunConfig, backend: Backend | None = None) -> EPRBScenario:
    backend = backend or Backend(cfg.backend or "born")
    sc = EPRBScenario.from_angles(cfg.angles_deg, spin_state=_spin_state(cfg.state), ancilla_dims=cfg.ancilla_dims)
    n = eprb.best_n(sc) if cfg.n == "auto" else cfg.n
    return sc.with_(n=n, backend=backend, trials=cfg.trials, seed=cfg.seed)


def _rows_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _backends(cfg: RunConfig) -> list[Backend]:
    if cfg.backend is not None:
        return [Backend(cfg.backend)]
    chosen = [Backend.BORN]
    if cfg.n is not None:
        chosen.append(Backend.COUNTING)
        if cfg.trials is not None and cfg.seed is not None:
            chosen.append(Backend.MONTE_CARLO)
    return chosen


def cmd_chsh(cfg: RunConfig) -> str:
    results = {}
    for backend in _backends(cfg):
        sc = scenario_from(cfg, backend)
        results[backend.value] = eprb.chsh(sc, backend)
    if cfg.format == "csv":
        rows = [
            {
                "backend": name,
                "S": float(r.value),
                "S_lower": float(r.lower),
                "S_upper": float(r.upper),
                "stderr": "" if r.stderr is None else r.stderr,
            }
            for name, r in results.items()
        ]
        return _rows_csv(rows, ("backend", "S", "S_lower", "S_upper", "stderr"))
    return _json({name: r.to_json() for name, r in results.items()})


def cmd_converge(cfg: RunConfig) -> str:
    sc = scenario_from(cfg, Backend.BORN)
    P = sc.joint_projector(*cfg.pair, *parse_outcome_key(cfg.cell))
    psi = sc.state
    bounds = convergence_sweep(psi, P, cfg.schedule)
    born = born_quantity(psi, P)
    if cfg.format == "json":
        return _json({"cell": cfg.cell, "pair": list(cfg.pair), "born": born, "bounds": [b.to_json() for b in bounds]})
    return sweep_csv(bounds, born)


def cmd_locality(cfg: RunConfig) -> str:
    backend = Backend(cfg.backend or "born")
    if cfg.state == "photon-box":
        report = eprb.photon_box_scenario(backend)
    else:
        report = eprb.condition_battery(scenario_from(cfg, backend), backend, cfg.tolerance)
    return _json(report.to_json())


def cmd_sample(cfg: RunConfig) -> str:
    sc = scenario_from(cfg, Backend.MONTE_CARLO)
    be = eprb.branch_expansion(sc, *cfg.pair)
    ej = monte_carlo(LambdaOne(be), cfg.trials, cfg.seed)
    if cfg.format == "csv":
        rows = [{"cell": outcome_key(o), "count": ej.counts[o]} for o in OUTCOMES]
        rows.append({"cell": "cat", "count": ej.cat_hits})
        return _rows_csv(rows, ("cell", "count"))
    return _json(ej.to_json())


def cmd_dump_expansion(cfg: RunConfig) -> str:
    sc = scenario_from(cfg, Backend.COUNTING)
    be = eprb.branch_expansion(sc, *cfg.pair)
    doc = be.expansion.to_json()
    doc["n"] = be.n
    doc["counts"] = {outcome_key(o): be.counts[o] for o in OUTCOMES}
    doc["cat_count"] = be.cat_count
    doc["pair"] = list(cfg.pair)
    return _json(doc)


def cmd_sweep(cfg: RunConfig) -> str:
    sc = scenario_from(cfg, Backend.BORN)
    rows = eprb.correlation_sweep(sc, cfg.thetas_deg)
    if cfg.format == "json":
        return _json(rows)
    return eprb.sweep_csv(rows)


COMMANDS = {
    "chsh": cmd_chsh,
    "converge": cmd_converge,
    "locality": cmd_locality,
    "sample": cmd_sample,
    "dump-expansion": cmd_dump_expansion,
    "sweep": cmd_sweep,
}


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MicrocountError, ValueError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    if cfg.out:
        try:
            write_atomic(cfg.out, text)
        except OSError as exc:
            print(f"error: cannot write {cfg.out}: {exc}", file=sys.stderr)
            return EXIT_COMPUTE
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
