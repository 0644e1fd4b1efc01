"""
Command-line sweeps over the coupled market.

    coupled-cfmm purchase-sweep --preset paper-case-study --out purchase.csv
    coupled-cfmm surface --event liquidation --config my.json
    coupled-cfmm verify --preset paper-case-study

Every data file starts with a version line, then a header row, then one row per
grid point in grid order.  Floats are written with ``repr`` (shortest
round-trip form) so identical configs give identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
import warnings
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import coupled_market as cm
from . import verification_oracle as vo
from .cfmm_core import DomainError
from .coupled_market import CoupledState

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
PRESETS = ("paper-case-study",)
VERSION_LINE = f"# coupled-cfmm {__version__}"
DEFAULT_REPORT = "verify-report.json"

PURCHASE_COLUMNS = ("mu_y", "delta_x", "value_discrepancy", "indicator", "mu_z", "depth_marg_y", "kappa_y", "kappa_z", "a2")
LIQUIDATION_COLUMNS = ("mu_y", "gamma_z", "value_discrepancy", "mu_x", "depth_marg_y", "kappa_y", "kappa_x", "b2")
SURFACE_COLUMNS = ("mu_y", "d_mu_y", "marginal_output", "order1", "order2", "residual")
TRANSMISSION_COLUMNS = ("mu_y", "mu_z", "mu_x")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    mu_min: float
    mu_max: float
    points: int
    spacing: str = "linear"

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.mu_min, self.mu_max, self.points)
        return np.linspace(self.mu_min, self.mu_max, self.points)


@dataclass(frozen=True)
class SurfaceSpec:
    d_mu_min: float
    d_mu_max: float
    d_mu_points: int

    def grid(self) -> np.ndarray:
        return np.linspace(self.d_mu_min, self.d_mu_max, self.d_mu_points)


@dataclass(frozen=True)
class ScenarioConfig:
    x: float
    y1: float
    y2: float
    z: float
    fee1: float
    fee2: float
    sweep: SweepSpec
    surface: Optional[SurfaceSpec] = None
    output_path: Optional[str] = None

    @property
    def state(self) -> CoupledState:
        return CoupledState.from_fees(self.x, self.y1, self.y2, self.z, self.fee1, self.fee2)


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

_SCHEMA = {
    "reserves": ({"x", "y1", "y2", "z"}, True),
    "fees": ({"fee1", "fee2"}, True),
    "sweep": ({"mu_min", "mu_max", "points", "spacing"}, True),
    "surface": ({"d_mu_min", "d_mu_max", "d_mu_points"}, False),
}
_TOP_KEYS = set(_SCHEMA) | {"output_path"}


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text: str, path: str, msg: str) -> ConfigError:
    line = _line_of(text, path.rsplit(".", 1)[-1]) if text else None
    where = f"line {line}, " if line else ""
    return ConfigError(f"{where}field '{path}': {msg}")


def _number(text, path, value, integer=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(text, path, f"expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise _fail(text, path, f"expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise _fail(text, path, "must be finite")
    return int(value) if integer else float(value)


def parse_config(data: dict, text: str = "") -> ScenarioConfig:
    """Validate a decoded config mapping.  ``text`` is only used for line numbers."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for key in data:
        if key not in _TOP_KEYS:
            raise _fail(text, key, "unknown key")
    blocks = {}
    for name, (keys, required) in _SCHEMA.items():
        block = data.get(name)
        if block is None:
            if required:
                raise ConfigError(f"field '{name}': missing required block")
            continue
        if not isinstance(block, dict):
            raise _fail(text, name, "expected an object")
        for key in block:
            if key not in keys:
                raise _fail(text, f"{name}.{key}", "unknown key")
        optional = {"spacing"}
        for key in sorted(keys - set(block) - optional):
            raise ConfigError(f"field '{name}.{key}': missing")
        blocks[name] = block

    res = {k: _number(text, f"reserves.{k}", blocks["reserves"][k]) for k in ("x", "y1", "y2", "z")}
    for k, v in res.items():
        if v <= 0:
            raise _fail(text, f"reserves.{k}", "must be positive")
    fees = {k: _number(text, f"fees.{k}", blocks["fees"][k]) for k in ("fee1", "fee2")}
    for k, v in fees.items():
        if not 0.0 <= v < 1.0:
            raise _fail(text, f"fees.{k}", "must lie in [0, 1)")

    sw = blocks["sweep"]
    mu_min = _number(text, "sweep.mu_min", sw["mu_min"])
    mu_max = _number(text, "sweep.mu_max", sw["mu_max"])
    points = _number(text, "sweep.points", sw["points"], integer=True)
    spacing = sw.get("spacing", "linear")
    if mu_min < 0:
        raise _fail(text, "sweep.mu_min", "must be >= 0")
    if mu_max <= mu_min:
        raise _fail(text, "sweep.mu_max", "must exceed mu_min")
    if points < 2:
        raise _fail(text, "sweep.points", "must be >= 2")
    if spacing not in ("linear", "log"):
        raise _fail(text, "sweep.spacing", f"expected 'linear' or 'log', got {spacing!r}")
    if spacing == "log" and mu_min == 0:
        raise _fail(text, "sweep.mu_min", "log spacing needs mu_min > 0")
    sweep = SweepSpec(mu_min, mu_max, points, spacing)

    surface = None
    if "surface" in blocks:
        sf = blocks["surface"]
        lo = _number(text, "surface.d_mu_min", sf["d_mu_min"])
        hi = _number(text, "surface.d_mu_max", sf["d_mu_max"])
        n = _number(text, "surface.d_mu_points", sf["d_mu_points"], integer=True)
        if not 0 < lo <= cm.MAX_D_MU:
            raise _fail(text, "surface.d_mu_min", f"must lie in (0, {cm.MAX_D_MU}]")
        if not lo <= hi <= cm.MAX_D_MU:
            raise _fail(text, "surface.d_mu_max", f"must lie in [d_mu_min, {cm.MAX_D_MU}]")
        if n < 1 or (n == 1 and hi != lo):
            raise _fail(text, "surface.d_mu_points", "must be >= 2 (or 1 when d_mu_min == d_mu_max)")
        surface = SurfaceSpec(lo, hi, n)

    out = data.get("output_path")
    if out is not None and not isinstance(out, str):
        raise _fail(text, "output_path", "expected a string")
    return ScenarioConfig(**res, **fees, sweep=sweep, surface=surface, output_path=out)


def loads_config(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    return parse_config(data, text)


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read())


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files(__package__).joinpath("presets", f"{name}.json").read_text(encoding="utf-8")
    return loads_config(text)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def render_csv(columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(VERSION_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def purchase_rows(cfg: ScenarioConfig) -> list[tuple]:
    state = cfg.state
    rows = []
    for mu in cfg.sweep.grid():
        s = cm.purchase_metrics(state, float(mu))
        rows.append((s.mu_y, s.trade_size, s.value_discrepancy, s.indicator, s.transmitted_drift,
                     s.depth_marg_y, s.kappa_y, s.kappa_z_or_x, s.second_order))
    return rows


def liquidation_rows(cfg: ScenarioConfig) -> list[tuple]:
    state = cfg.state
    rows = []
    for mu in cfg.sweep.grid():
        s = cm.liquidation_metrics(state, float(mu))
        rows.append((s.mu_y, s.trade_size, s.value_discrepancy, s.transmitted_drift,
                     s.depth_marg_y, s.kappa_y, s.kappa_z_or_x, s.second_order))
    return rows


def surface_rows(cfg: ScenarioConfig, event: str) -> list[tuple]:
    if cfg.surface is None:
        raise ConfigError("field 'surface': required by the surface command")
    fn = cm.marginal_output_purchase if event == "purchase" else cm.marginal_output_liquidation
    state = cfg.state
    rows = []
    for mu in cfg.sweep.grid():
        for d in cfg.surface.grid():
            r = fn(state, float(mu), float(d))
            rows.append((r.mu_y, r.d_mu, r.marginal_output, r.order1, r.order2, r.residual))
    return rows


def transmission_rows(cfg: ScenarioConfig) -> list[tuple]:
    state = cfg.state
    return [
        (float(mu), cm.drift_transmission_purchase(state, float(mu)), cm.drift_transmission_liquidation(state, float(mu)))
        for mu in cfg.sweep.grid()
    ]


# ---------------------------------------------------------------------------
# Verify
# ---------------------------------------------------------------------------


def verify_report(cfg: ScenarioConfig) -> dict:
    state, grid = cfg.state, cfg.sweep.grid()
    reports = vo.run_suite(state, grid)
    diagnostics = vo.alternative_form_diagnostics(state, grid)
    return {
        "version": __version__,
        "state": state.as_dict(),
        "passed": all(r.passed for r in reports),
        "checks": [r.as_dict() for r in reports],
        "alternative_form_diagnostics": [r.as_dict() for r in diagnostics],
    }


def format_report(report: dict) -> str:
    lines = [f"{'check':42s} {'result':6s} {'max_rel_err':>12s} {'tol':>9s} {'n':>6s}"]
    for r in report["checks"]:
        flag = "PASS" if r["passed"] else "FAIL"
        lines.append(f"{r['name']:42s} {flag:6s} {r['max_rel_error']:12.3e} {r['tolerance']:9.1e} {r['samples']:6d}")
    failed = [r["name"] for r in report["checks"] if not r["passed"]]
    lines.append("")
    lines.append("all checks passed" if not failed else "FAILED: " + ", ".join(failed))
    if report["alternative_form_diagnostics"]:
        lines.append("")
        lines.append("alternative closed forms vs pipeline (informational):")
        for r in report["alternative_form_diagnostics"]:
            tag = "agrees" if r["passed"] else "differs"
            lines.append(f"  {r['name']:40s} {tag:8s} max rel diff {r['max_rel_error']:.3e}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coupled-cfmm", description="Sweeps and checks for two coupled CFMM pools.")
    p.add_argument("--version", action="version", version=f"coupled-cfmm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("purchase-sweep", "value discrepancy, indicator and transmission for z purchases"),
        ("liquidation-sweep", "value discrepancy and transmission for z liquidations"),
        ("surface", "marginal output over (mu_y, d_mu_y), long format"),
        ("transmission", "mu_z and mu_x against mu_y"),
        ("verify", "run every oracle cross-check and write a JSON report"),
    ):
        sp = sub.add_parser(name, help=help_)
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", metavar="PATH", help="JSON scenario file")
        src.add_argument("--preset", choices=PRESETS, help="bundled scenario (default: paper-case-study)")
        sp.add_argument("--out", metavar="PATH", help="output file (default: config output_path, else stdout)")
        if name == "surface":
            sp.add_argument("--event", choices=("purchase", "liquidation"), default="purchase")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else load_preset(args.preset or PRESETS[0])
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    out = args.out or cfg.output_path

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", cm.OutOfRegimeWarning)
            if args.command == "verify":
                report = verify_report(cfg)
                sys.stdout.write(format_report(report))
                _write(json.dumps(report, indent=2, sort_keys=True) + "\n", out or DEFAULT_REPORT)
                return EXIT_OK if report["passed"] else EXIT_VERIFY
            if args.command == "purchase-sweep":
                text = render_csv(PURCHASE_COLUMNS, purchase_rows(cfg))
            elif args.command == "liquidation-sweep":
                text = render_csv(LIQUIDATION_COLUMNS, liquidation_rows(cfg))
            elif args.command == "surface":
                text = render_csv(SURFACE_COLUMNS, surface_rows(cfg, args.event))
            else:
                text = render_csv(TRANSMISSION_COLUMNS, transmission_rows(cfg))
            _write(text, out)
    except (ConfigError, DomainError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
