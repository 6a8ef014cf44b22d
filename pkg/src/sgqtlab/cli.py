"""Command-line runner: ``sgqtlab run|compare|list-experiments``.

Configs are YAML files validated against ``CONFIG_SCHEMA``. A run writes
``trajectory.csv`` (commented provenance header, then one row per
iteration), ``summary.json`` and the fully resolved ``config.yaml``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import jsonschema
import yaml

from . import __version__
from .bench import KINDS, ExperimentSpec, Row, UndefinedMetric, infidelity_reduction, run_experiment, summarize
from .qcore import PureState
from .sgqt import GainSchedule

log = logging.getLogger("sgqtlab")

EXIT_OK, EXIT_RUNTIME, EXIT_SCHEMA = 0, 1, 2
FORMATS = ("csv", "json")

_number_list = {"type": "array", "items": {"type": "number"}}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "experiment"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "formats": {"type": "array", "items": {"enum": list(FORMATS)}, "minItems": 1, "uniqueItems": True},
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "targets": {
                    "oneOf": [
                        {"const": "default"},
                        {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "array",
                                "minItems": 2,
                                "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            },
                        },
                    ]
                },
                "n_targets": {"type": "integer", "minimum": 1},
                "target_seed": {"type": "integer", "minimum": 0},
                "repetitions": {"type": "integer", "minimum": 1},
                "iterations": {"type": "integer", "minimum": 1},
                "photons_per_expectation": {"type": "number", "exclusiveMinimum": 0},
                "gains": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "a": {"type": "number", "exclusiveMinimum": 0},
                        "b": {"type": "number", "exclusiveMinimum": 0},
                        "A": {"type": "number", "minimum": 0},
                        "s": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "t": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    },
                },
                "subset_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 16}},
                "error_levels": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "error_redraw": {"enum": ["per-measurement", "per-run"]},
                "checkpoints": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "sqt_budgets": _number_list,
                "sqt_repetitions": {"type": "integer", "minimum": 1},
                "benchmark": {"enum": ["truth", "simulated-sqt"]},
                "benchmark_photons": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    """Schema or semantic problem with a config; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    name: str
    experiment: ExperimentSpec
    seed: int = 0
    output_dir: str = ""
    formats: Tuple[str, ...] = FORMATS
    description: str = ""

    def spec(self) -> ExperimentSpec:
        return replace(self.experiment, seed=self.seed, name=self.name)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        exp = dict(data["experiment"])
        if "gains" in exp:
            exp["gains"] = GainSchedule(**{**GainSchedule().__dict__, **exp["gains"]})
        targets = exp.pop("targets", "default")
        if targets != "default":
            exp["targets"] = tuple(PureState([complex(re, im) for re, im in t]) for t in targets)
        for key in ("subset_sizes", "error_levels", "checkpoints", "sqt_budgets"):
            if key in exp:
                exp[key] = tuple(exp[key])
        seed = int(data.get("seed", 0))
        try:
            spec = ExperimentSpec(name=data["name"], seed=seed, **exp)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"experiment: {exc}") from None
        return cls(
            name=data["name"],
            experiment=spec,
            seed=seed,
            output_dir=data.get("output_dir", ""),
            formats=tuple(data.get("formats", FORMATS)),
            description=data.get("description", ""),
        )

    def to_dict(self) -> dict:
        spec = self.spec()
        g = spec.gains
        exp = {
            "kind": spec.kind,
            "targets": "default"
            if spec.targets is None
            else [[[float(a.real), float(a.imag)] for a in t.amplitudes] for t in spec.targets],
            "n_targets": spec.n_targets,
            "target_seed": spec.target_seed,
            "repetitions": spec.repetitions,
            "iterations": spec.iterations,
            "photons_per_expectation": spec.photons_per_expectation,
            "gains": {"a": g.a, "b": g.b, "A": g.A, "s": g.s, "t": g.t},
            "subset_sizes": list(spec.subset_sizes),
            "error_levels": list(spec.error_levels),
            "error_redraw": spec.error_redraw,
            "checkpoints": list(spec.checkpoints),
            "sqt_budgets": list(spec.sqt_budgets),
            "benchmark": spec.benchmark,
            "benchmark_photons": spec.benchmark_photons,
        }
        if spec.sqt_repetitions is not None:
            exp["sqt_repetitions"] = spec.sqt_repetitions
        out = {"name": self.name}
        if self.description:
            out["description"] = self.description
        out.update({"seed": self.seed, "output_dir": self.output_dir, "formats": list(self.formats), "experiment": exp})
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"<root>: not valid YAML ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("<root>: config must be a mapping")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        """Hash of everything that affects results (output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("formats")
        d.pop("description", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Bundled configs


def bundled_configs() -> dict:
    root = resources.files("sgqtlab") / "configs"
    return {p.name[:-5]: p for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".yaml")}


def resolve_config(name_or_path: str) -> Tuple[str, str]:
    """(text, origin) for a path or a bundled config name."""
    path = Path(name_or_path)
    if path.is_file():
        return path.read_text(), str(path)
    bundled = bundled_configs()
    key = name_or_path[:-5] if name_or_path.endswith(".yaml") else name_or_path
    if key in bundled:
        return bundled[key].read_text(), f"bundled:{key}"
    raise FileNotFoundError(f"no config file or bundled config named {name_or_path!r}")


# ---------------------------------------------------------------------------
# Output files


def render_csv(rows: Sequence[Row], config: RunConfig, timestamp: Optional[str] = None) -> str:
    timestamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf = io.StringIO()
    buf.write(f"# sgqtlab {__version__}\n")
    buf.write(f"# experiment={config.name} kind={config.experiment.kind}\n")
    buf.write(f"# seed={config.seed}\n")
    buf.write(f"# config_hash={config.config_hash()}\n")
    buf.write(f"# created={timestamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(Row.COLUMNS)
    for r in rows:
        writer.writerow(r.as_strings())
    return buf.getvalue()


def csv_body(text: str) -> str:
    """The CSV with its provenance comment lines removed."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def read_trajectory(path) -> List[Row]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(header) != Row.COLUMNS:
        raise ValueError(f"unexpected CSV columns {header}")
    return [Row.from_strings(values) for values in reader]


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def build_summary(rows: Sequence[Row], config: RunConfig) -> dict:
    spec = config.spec()
    body = summarize(rows, spec)
    body["report_iterations"] = sorted(set(spec.checkpoints) | {spec.iterations})
    final = [h for h in body["headline"] if h["condition"].startswith("sgqt")]
    body["sgqt_final"] = final
    return _json_safe(
        {"provenance": {"version": __version__, "seed": config.seed, "config_hash": config.config_hash()}, **body}
    )


def cmd_run(config_ref: str, output_dir: Optional[str] = None, workers: Optional[int] = None) -> int:
    try:
        text, origin = resolve_config(config_ref)
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        config = RunConfig.from_yaml(text)
    except ConfigError as exc:
        print(f"config error in {origin}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = Path(output_dir or config.output_dir or f"results/{config.name}")
    try:
        log.info("running %s (%d cells) into %s", config.name, config.spec().cell_count(), out)
        result = run_experiment(config.spec(), workers=workers)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(config.to_yaml())
        if "csv" in config.formats:
            (out / "trajectory.csv").write_text(render_csv(result.rows, config))
        summary = build_summary(result.rows, config)
        if "json" in config.formats:
            (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit 1
        log.debug("run failed", exc_info=True)
        print(f"error: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for h in summary["sgqt_final"]:
        print(f"{h['condition']:<20} photons {h['photons_mean']:>12.1f}  median F {h['median']:.4f}  mean F {h['mean']:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def _load_summary(run_dir) -> dict:
    path = Path(run_dir) / "summary.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None
    for key in ("n_qubits", "conditions", "report_iterations"):
        if key not in data:
            raise ValueError(f"{path} has no {key!r} field")
    return data


def compare_tables(a: dict, b: dict, condition_a: Optional[str] = None, condition_b: Optional[str] = None) -> List[dict]:
    """Rows (condition, iteration, photons and mean F for both runs, reduction of A over B)."""
    if a["n_qubits"] != b["n_qubits"]:
        raise ValueError(f"runs have different dimensions ({a['n_qubits']} vs {b['n_qubits']} qubits)")
    sa = {(s["condition"], s["iteration"]): s for s in a["conditions"]}
    sb = {(s["condition"], s["iteration"]): s for s in b["conditions"]}
    if condition_a or condition_b:
        pairs = [(condition_a or condition_b, condition_b or condition_a)]
    else:
        pairs = [(c, c) for c in dict.fromkeys(s["condition"] for s in a["conditions"]) if any(k[0] == c for k in sb)]
    iters = sorted(set(a["report_iterations"]) | set(b["report_iterations"]))
    table = []
    for ca, cb in pairs:
        for it in iters + [None]:
            x, y = sa.get((ca, it)), sb.get((cb, it))
            if x is None or y is None:
                continue
            try:
                red = infidelity_reduction(x["mean"], y["mean"])
            except UndefinedMetric:
                red = float("nan")
            table.append(
                {
                    "condition": ca if ca == cb else f"{ca} vs {cb}",
                    "iteration": it,
                    "photons_a": x["photons_mean"],
                    "fidelity_a": x["mean"],
                    "photons_b": y["photons_mean"],
                    "fidelity_b": y["mean"],
                    "reduction": red,
                }
            )
    return table


def cmd_compare(dir_a, dir_b, condition_a=None, condition_b=None) -> int:
    try:
        table = compare_tables(_load_summary(dir_a), _load_summary(dir_b), condition_a, condition_b)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not table:
        print("error: the runs share no condition to compare", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{'condition':<28}{'iter':>6}{'photons A':>12}{'F A':>9}{'photons B':>12}{'F B':>9}{'reduction':>11}")
    for r in table:
        it = "-" if r["iteration"] is None else str(r["iteration"])
        print(
            f"{r['condition']:<28}{it:>6}{r['photons_a']:>12.1f}{r['fidelity_a']:>9.4f}"
            f"{r['photons_b']:>12.1f}{r['fidelity_b']:>9.4f}{r['reduction']:>11.3f}"
        )
    return EXIT_OK


def cmd_list_experiments() -> int:
    for name, path in bundled_configs().items():
        data = yaml.safe_load(path.read_text())
        print(f"{name:<22}{data['experiment']['kind']:<26}{data.get('description', '')}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="sgqtlab", description="Self-guided vs standard tomography simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config (path or bundled name)")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output-dir")
    p_run.add_argument("-j", "--workers", type=int, help="worker processes (default: $SGQTLAB_WORKERS or 1)")
    p_cmp = sub.add_parser("compare", help="tabulate two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--condition-a")
    p_cmp.add_argument("--condition-b")
    sub.add_parser("list-experiments", help="list bundled configs")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.output_dir, args.workers)
    if args.command == "compare":
        return cmd_compare(args.dir_a, args.dir_b, args.condition_a, args.condition_b)
    return cmd_list_experiments()


if __name__ == "__main__":
    sys.exit(main())
