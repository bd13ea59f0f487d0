"""Batch front end: JSON-configured pipeline runs with file artifacts.

A run is described by one JSON configuration naming the metric, the
ladders, and the command; flags override individual scalars. Artifacts
are JSON (machine) and CSV (tables); every artifact embeds the sha256 of
the configuration file that produced it, and runs with --stable-output
are byte-identical for identical configurations. Artifacts are written
atomically at the end of a run; a failing run leaves none behind.

Exit codes: 64 for configuration and flag errors, 65 for data and
pipeline errors, and for verification runs the report status (0 pass,
1 any failure, 2 inconclusive).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

from . import __version__
from .capacity import CapacityError, p_capacity_radial
from .expressions import ExpressionError
from .geometry import GeometryError, RadialMetric
from .imcf import ImcfError, imcf_from_pole, t_of_v, weak_imcf
from .masses import (
    MassError,
    adm_mass_limit,
    hawking_mass_limit,
    iso_mass_limit,
    p_iso_mass_limit,
)
from .numerics import ConvergenceError, QuadratureError
from .verify import DEFAULT_TOLERANCES, VerifyConfig, VerifyError, verify_metric

__all__ = ["ConfigError", "RunConfig", "main", "run"]

USAGE_EXIT = 64
DATA_EXIT = 65

COMMANDS = ("describe", "imcf", "masses", "capacity", "verify", "report")

TOP_KEYS = {"command", "metric", "radii", "volumes", "p_values", "tolerances", "flow", "out"}
METRIC_KEYS = {
    "schwarzschild": {"mass"},
    "euclidean": set(),
    "conformal": {"u", "r_min", "parameters"},
    "table": {"path"},
}
FLOW_KEYS = {"r_start", "t_min", "t_max", "dt"}

DEFAULT_RADII = (1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5)


class ConfigError(ValueError):
    """Configuration violates the published schema."""


class _UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated run description, as parsed from the JSON file."""

    command: str
    metric_spec: Dict[str, object]
    radii: Tuple[float, ...] = DEFAULT_RADII
    volumes: Tuple[float, ...] = ()
    p_values: Tuple[float, ...] = (1.2, 1.5, 2.0)
    tolerances: Dict[str, float] = field(default_factory=dict)
    flow: Dict[str, float] = field(default_factory=dict)
    out: str = "."

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(raw) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration key {sorted(unknown)[0]!r}")
        command = raw.get("command")
        if command not in COMMANDS:
            raise ConfigError(
                f"command must be one of {', '.join(COMMANDS)}; got {command!r}"
            )
        metric = raw.get("metric")
        cls._check_metric(metric)
        radii = cls._check_ladder(raw.get("radii"), "radii") or DEFAULT_RADII
        volumes = cls._check_ladder(raw.get("volumes"), "volumes") or ()
        p_values = cls._check_p_values(raw.get("p_values"))
        tolerances = cls._check_tolerances(raw.get("tolerances"))
        flow = cls._check_flow(raw.get("flow"))
        out = raw.get("out", ".")
        if not isinstance(out, str) or not out:
            raise ConfigError("out must be a nonempty directory path")
        return cls(
            command=command, metric_spec=metric, radii=radii, volumes=volumes,
            p_values=p_values, tolerances=tolerances, flow=flow, out=out,
        )

    @staticmethod
    def _check_metric(metric) -> None:
        if not isinstance(metric, dict) or "type" not in metric:
            raise ConfigError('metric must be an object with a "type" key')
        kind = metric["type"]
        if kind not in METRIC_KEYS:
            raise ConfigError(
                f"metric.type must be one of {', '.join(sorted(METRIC_KEYS))}; "
                f"got {kind!r}"
            )
        unknown = set(metric) - METRIC_KEYS[kind] - {"type"}
        if unknown:
            raise ConfigError(f"unknown metric key {sorted(unknown)[0]!r} for {kind}")
        if kind == "schwarzschild":
            mass = metric.get("mass")
            if not isinstance(mass, (int, float)) or not mass > 0:
                raise ConfigError(f"metric.mass must be positive, got {mass!r}")
        if kind == "conformal":
            if not isinstance(metric.get("u"), str):
                raise ConfigError("metric.u must be an expression string in r")
            r_min = metric.get("r_min", 0.0)
            if not isinstance(r_min, (int, float)) or r_min < 0:
                raise ConfigError(f"metric.r_min must be nonnegative, got {r_min!r}")
            parameters = metric.get("parameters", {})
            if not isinstance(parameters, dict) or not all(
                isinstance(v, (int, float)) for v in parameters.values()
            ):
                raise ConfigError("metric.parameters must map names to numbers")
        if kind == "table" and not isinstance(metric.get("path"), str):
            raise ConfigError("metric.path must be a CSV file path")

    @staticmethod
    def _check_ladder(values, name: str) -> Optional[Tuple[float, ...]]:
        if values is None:
            return None
        if not isinstance(values, list) or len(values) < 1 or not all(
            isinstance(v, (int, float)) and math.isfinite(v) for v in values
        ):
            raise ConfigError(f"{name} must be a list of finite numbers")
        ladder = tuple(float(v) for v in values)
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError(f"{name} must be strictly increasing")
        if ladder[0] <= 0:
            raise ConfigError(f"{name} must be positive")
        return ladder

    @staticmethod
    def _check_p_values(values) -> Tuple[float, ...]:
        if values is None:
            return (1.2, 1.5, 2.0)
        if not isinstance(values, list) or not values:
            raise ConfigError("p_values must be a nonempty list")
        out = []
        for v in values:
            if not isinstance(v, (int, float)) or not 1.0 < v < 3.0:
                raise ConfigError(f"p_values entries must lie in (1, 3); got {v!r}")
            out.append(float(v))
        return tuple(out)

    @staticmethod
    def _check_tolerances(values) -> Dict[str, float]:
        if values is None:
            return {}
        if not isinstance(values, dict):
            raise ConfigError("tolerances must map check names to numbers")
        out = {}
        for name, tol in values.items():
            if name not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances: unknown check {name!r}")
            if not isinstance(tol, (int, float)) or tol < 0:
                raise ConfigError(f"tolerances.{name} must be nonnegative")
            out[name] = float(tol)
        return out

    @staticmethod
    def _check_flow(values) -> Dict[str, float]:
        if values is None:
            return {}
        if not isinstance(values, dict):
            raise ConfigError("flow must be an object")
        unknown = set(values) - FLOW_KEYS
        if unknown:
            raise ConfigError(f"unknown flow key {sorted(unknown)[0]!r}")
        out = {}
        for name, v in values.items():
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"flow.{name} must be a finite number")
            out[name] = float(v)
        if "dt" in out and not out["dt"] > 0:
            raise ConfigError("flow.dt must be positive")
        return out


def _build_metric(spec: Dict[str, object]) -> RadialMetric:
    kind = spec["type"]
    if kind == "euclidean":
        return RadialMetric.euclidean()
    if kind == "schwarzschild":
        return RadialMetric.schwarzschild(float(spec["mass"]))
    if kind == "conformal":
        return RadialMetric.conformal(
            spec["u"],
            r_min=float(spec.get("r_min", 0.0)),
            parameters={k: float(v) for k, v in spec.get("parameters", {}).items()},
        )
    try:
        return RadialMetric.from_csv(spec["path"])
    except OSError as exc:
        raise GeometryError(f"cannot read table {spec['path']!r}: {exc}") from exc


# -- artifact plumbing -----------------------------------------------------


class _Artifacts:
    """Buffered artifact writer: all-or-nothing on disk."""

    def __init__(self, directory: str):
        self.directory = directory
        self.pending: List[Tuple[str, str]] = []

    def add_json(self, name: str, payload: dict) -> None:
        self.pending.append((name, json.dumps(payload, indent=2, sort_keys=True) + "\n"))

    def add_csv(self, name: str, header: List[str], rows, sha: str) -> None:
        buffer = io.StringIO()
        buffer.write(f"# config_sha256={sha}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        self.pending.append((name, buffer.getvalue()))

    def flush(self) -> List[str]:
        os.makedirs(self.directory, exist_ok=True)
        written: List[str] = []
        temp = None
        try:
            for name, text in self.pending:
                path = os.path.join(self.directory, name)
                temp = path + ".part"
                with open(temp, "w") as handle:
                    handle.write(text)
                os.replace(temp, path)
                written.append(path)
        except BaseException:
            for path in written + ([temp] if temp else []):
                try:
                    os.unlink(path)
                except OSError:
                    pass
            raise
        return written


def _metadata(config: RunConfig, sha: str, stable: bool) -> dict:
    meta = {
        "command": config.command,
        "config_sha256": sha,
        "version": __version__,
    }
    if not stable:
        meta["generated_at"] = datetime.now(timezone.utc).isoformat()
    return meta


# -- commands --------------------------------------------------------------


def _cmd_describe(metric, config, sha, artifacts, stable, plot_data) -> int:
    probes = [
        r for r in (1.0, 10.0, 100.0)
        if r > metric.r_min and (metric.r_max is None or r <= metric.r_max)
    ]
    if not probes:
        # chart too short for the standard probes; take its geometric middle
        top = metric.r_max if metric.r_max is not None else 100.0 * max(1.0, metric.r_min)
        probes = [math.sqrt(max(metric.r_min, 1e-6 * top) * top)]
    payload = {
        "metadata": _metadata(config, sha, stable),
        "metric": repr(metric),
        "kind": metric.kind,
        "r_min": metric.r_min,
        "r_max": metric.r_max,
        "has_pole": metric.has_pole,
        "conformal": metric.is_conformal,
        "boundary_minimal": metric.boundary_minimal_flag,
        "flags": list(metric.flags),
        "asymptotically_flat": metric.is_asymptotically_flat()
        if metric.r_max is None
        else None,
        "spheres": [metric.sphere_data(r).to_dict() for r in probes],
    }
    artifacts.add_json("describe.json", payload)
    return 0


def _flow_for(metric, config):
    flow = config.flow
    dt = flow.get("dt", 0.01)
    t_max = flow.get("t_max", 10.0)
    if "r_start" in flow:
        return weak_imcf(metric, flow["r_start"], t_max=t_max, dt=dt)
    if metric.has_pole:
        return imcf_from_pole(metric, t_min=flow.get("t_min", -10.0), t_max=t_max, dt=dt)
    return weak_imcf(metric, metric.r_min, t_max=t_max, dt=dt)


def _cmd_imcf(metric, config, sha, artifacts, stable, plot_data) -> int:
    record = _flow_for(metric, config)
    payload = {
        "metadata": _metadata(config, sha, stable),
        "flow": record.to_dict(),
    }
    if config.volumes:
        payload["time_of_volume"] = [
            {"volume": v, "t": t_of_v(record, v)} for v in config.volumes
        ]
    artifacts.add_json("imcf.json", payload)
    rows = [
        (s.t, s.r, s.area, s.volume, s.hawking, int(s.is_jump))
        for s in record.samples
    ]
    artifacts.add_csv(
        "imcf.csv", ["t", "r", "area", "volume", "hawking", "is_jump"], rows, sha
    )
    return 0


def _mass_estimates(metric, config):
    estimates = [iso_mass_limit(metric, config.radii)]
    for p in config.p_values:
        estimates.append(p_iso_mass_limit(metric, config.radii, p))
        estimates.append(p_iso_mass_limit(metric, config.radii, p, alternative=True))
    estimates.append(hawking_mass_limit(metric, config.radii))
    if metric.is_conformal:
        estimates.append(adm_mass_limit(metric, config.radii))
    return estimates


def _cmd_masses(metric, config, sha, artifacts, stable, plot_data) -> int:
    estimates = _mass_estimates(metric, config)
    payload = {
        "metadata": _metadata(config, sha, stable),
        "estimates": {e.label: e.to_dict() for e in estimates},
    }
    artifacts.add_json("masses.json", payload)
    if plot_data:
        rows = []
        for e in estimates:
            for scale, value in e.samples:
                rows.append((e.kind, "" if e.p is None else e.p, scale, value))
        artifacts.add_csv(
            "plot_mass_ladders.csv", ["kind", "p", "scale", "value"], rows, sha
        )
    return 0


def _cmd_capacity(metric, config, sha, artifacts, stable, plot_data) -> int:
    solutions = []
    for r0 in config.radii:
        for p in config.p_values:
            solutions.append(p_capacity_radial(metric, r0, p))
    payload = {
        "metadata": _metadata(config, sha, stable),
        "solutions": [s.to_dict() for s in solutions],
    }
    artifacts.add_json("capacity.json", payload)
    if plot_data:
        for index, solution in enumerate(solutions):
            artifacts.add_csv(
                f"plot_capacity_potential_{index}.csv",
                ["r", "u"],
                list(solution.potential),
                sha,
            )
    return 0


def _verify_config(config: RunConfig) -> VerifyConfig:
    return VerifyConfig(
        radius_ladder=config.radii,
        p_values=config.p_values,
        tolerances=config.tolerances,
    )


def _cmd_verify(metric, config, sha, artifacts, stable, plot_data) -> int:
    report = verify_metric(metric, _verify_config(config))
    payload = {
        "metadata": _metadata(config, sha, stable),
        "report": report.to_dict(),
    }
    artifacts.add_json("verify.json", payload)
    print(report.to_text())
    return report.exit_status


def _cmd_report(metric, config, sha, artifacts, stable, plot_data) -> int:
    report = verify_metric(metric, _verify_config(config))
    estimates = _mass_estimates(metric, config)
    payload = {
        "metadata": _metadata(config, sha, stable),
        "metric": repr(metric),
        "verification": report.to_dict(),
        "masses": {e.label: e.to_dict() for e in estimates},
    }
    artifacts.add_json("report.json", payload)
    if plot_data:
        rows = []
        for e in estimates:
            for scale, value in e.samples:
                rows.append((e.kind, "" if e.p is None else e.p, scale, value))
        artifacts.add_csv(
            "plot_mass_ladders.csv", ["kind", "p", "scale", "value"], rows, sha
        )
    print(report.to_text())
    return report.exit_status


_RUNNERS = {
    "describe": _cmd_describe,
    "imcf": _cmd_imcf,
    "masses": _cmd_masses,
    "capacity": _cmd_capacity,
    "verify": _cmd_verify,
    "report": _cmd_report,
}

_MODULE_OF = (
    (GeometryError, "geometry"),
    (ImcfError, "imcf"),
    (CapacityError, "capacity"),
    (MassError, "masses"),
    (VerifyError, "verify"),
    (ExpressionError, "expressions"),
    (QuadratureError, "numerics"),
    (ConvergenceError, "numerics"),
)
_MODULE_ERRORS = tuple(kind for kind, _ in _MODULE_OF)


def run(config: RunConfig, config_sha: str, stable: bool, plot_data: bool) -> int:
    """Execute the configured command; returns the exit status."""
    metric = _build_metric(config.metric_spec)
    artifacts = _Artifacts(config.out)
    status = _RUNNERS[config.command](
        metric, config, config_sha, artifacts, stable, plot_data
    )
    for path in artifacts.flush():
        print(f"wrote {path}")
    return status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="afmass",
        description="Mass and capacity pipelines for radial asymptotically "
        "flat metrics, driven by a JSON configuration.",
    )
    parser.add_argument("config", help="path to the JSON run configuration")
    parser.add_argument(
        "--tol", action="append", default=[], metavar="CHECK=VALUE",
        help="override one verification tolerance",
    )
    parser.add_argument(
        "--ladder-max", type=float, default=None, metavar="R",
        help="drop radius-ladder rungs beyond R",
    )
    parser.add_argument("--out", default=None, help="artifact directory override")
    parser.add_argument(
        "--plot-data", action="store_true", help="also write per-figure CSV data"
    )
    parser.add_argument(
        "--stable-output", action="store_true",
        help="omit volatile metadata so identical configs give identical bytes",
    )
    parser.add_argument("--version", action="version", version=f"afmass {__version__}")
    return parser


def _apply_flags(config: RunConfig, args) -> RunConfig:
    for item in args.tol:
        name, sep, value = item.partition("=")
        if not sep or name not in DEFAULT_TOLERANCES:
            raise ConfigError(
                f"--tol expects CHECK=VALUE with a known check name, got {item!r}"
            )
        try:
            config.tolerances[name] = float(value)
        except ValueError:
            raise ConfigError(f"--tol {name}: {value!r} is not a number") from None
    if args.ladder_max is not None:
        trimmed = tuple(r for r in config.radii if r <= args.ladder_max)
        if not trimmed:
            raise ConfigError(f"--ladder-max {args.ladder_max:g} leaves no rungs")
        config.radii = trimmed
    if args.out is not None:
        config.out = args.out
    # mass extrapolation needs four rungs over two decades; reject the
    # combination statically instead of failing mid-pipeline
    if config.command in ("masses", "verify", "report"):
        if len(config.radii) < 4 or config.radii[-1] < 100.0 * config.radii[0]:
            raise ConfigError(
                f"{config.command} needs a radius ladder of at least 4 rungs "
                "spanning 2 decades"
            )
    return config


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"afmass: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        with open(args.config, "rb") as handle:
            raw_bytes = handle.read()
    except OSError as exc:
        print(f"afmass: cannot read config: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        raw = json.loads(raw_bytes)
    except json.JSONDecodeError as exc:
        print(
            f"afmass: {args.config}:{exc.lineno}: {exc.msg}", file=sys.stderr
        )
        return USAGE_EXIT
    sha = hashlib.sha256(raw_bytes).hexdigest()
    try:
        config = _apply_flags(RunConfig.from_dict(raw), args)
    except ConfigError as exc:
        print(f"afmass: {exc}", file=sys.stderr)
        return USAGE_EXIT
    try:
        return run(config, sha, args.stable_output, args.plot_data)
    except _MODULE_ERRORS as exc:
        module = next(name for kind, name in _MODULE_OF if isinstance(exc, kind))
        print(f"afmass: {module}: {exc}", file=sys.stderr)
        return DATA_EXIT
    except OSError as exc:
        print(f"afmass: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
