"""``zeno-lab`` command line.

Exit status: 0 when every embedded check passes, 1 when a check fails
(artifacts are still written), 2 for unreadable or invalid configuration
(nothing is written) and 3 when a run trips the horizon or produces
non-finite numbers.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from . import experiments, output
from .errors import ConfigurationError, ContractViolation, HorizonError, NumericError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_OUT = "zeno_lab_out"
DEFAULT_FORMATS = ("csv", "json", "svg")

_FIELD = {"kind": "field"}
_WAVE_DETECTOR = {"x_minus": 1.0, "x_plus": 2.0, "lambda0": 0.2}

PRESETS: dict[str, dict[str, Any]] = {
    "direct": {
        "description": "two-level atom under continuous measurement g*H_m, g in {0, 10, 100}, against the Rabi formula",
        "config": {"model": {"kind": "two-level", "omega": 1.0}, "run": {"g": [0.0, 10.0, 100.0], "t_max": 6.283185307179586}},
    },
    "free-decay": {
        "description": "unmeasured Friedrichs decay, exponential fit against the golden-rule rate",
        "config": {"model": {"kind": "friedrichs", "n_modes": 400, "coupling": 0.1, "bandwidth": 4.0}},
    },
    "indirect": {
        "description": "field model with a wave-zone detector at scales 0, 1 and 10",
        "config": {"model": _FIELD, "detector": _WAVE_DETECTOR, "run": {"scales": [0.0, 1.0, 10.0]}},
    },
    "intertwine-check": {
        "description": "core projections of measured and free step maps agree for 200 steps",
        "config": {
            "model": _FIELD,
            "detector": {**_WAVE_DETECTOR, "scale": 10.0},
            "run": {"steps": 200, "probes": 8, "seed": 0},
        },
    },
    "nogo-check": {
        "description": "wave-zone detector at scales 0, 1, 10, 100 leaves the survival curve unchanged",
        "config": {"model": _FIELD, "detector": _WAVE_DETECTOR, "run": {"scales": [0.0, 1.0, 10.0, 100.0]}},
    },
    "semidirect-check": {
        "description": "detector overlapping the atom region does change the survival curve",
        "config": {
            "model": _FIELD,
            "detector": {"x_minus": 0.0, "x_plus": 1.0, "lambda0": 0.2, "semidirect": True},
            "run": {"scales": [0.0, 1.0, 2.0, 5.0]},
        },
    },
    "sweep": {
        "description": "two-level survival curves over a range of measurement strengths g",
        "config": {
            "model": {"kind": "two-level", "omega": 1.0},
            "run": {"parameter": "g", "values": [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0], "t_max": 6.283185307179586},
        },
    },
    "wavezone-check": {
        "description": "random wave-zone states never leak back into the core zone over 200 steps",
        "config": {
            "model": _FIELD,
            "detector": {**_WAVE_DETECTOR, "scale": 10.0},
            "run": {"steps": 200, "probes": 50, "seed": 0},
        },
    },
    "zeno": {
        "description": "two-level atom, ten projective measurements at interval 0.1",
        "config": {"model": {"kind": "two-level", "omega": 1.0}, "run": {"interval": 0.1, "n": 10}},
    },
}


class UsageError(Exception):
    """Invalid configuration; the message is already formatted for the user."""


def _schema(name: str) -> dict:
    return json.loads(resources.files("zeno_lab").joinpath("schemas", name).read_text(encoding="utf-8"))


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise UsageError(f"<preset>:1:1: unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    cfg = copy.deepcopy(PRESETS[name]["config"])
    return {"experiment": name, **cfg}


def preset_listing() -> list[dict[str, str]]:
    return [
        {"name": n, "experiment": n, "description": PRESETS[n]["description"]} for n in sorted(PRESETS)
    ]


def _locate(text: str, path) -> tuple[int, int]:
    """Best-effort line/column of a JSON path inside ``text``."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            hit = text.find(f'"{key}"', pos)
            if hit < 0:
                break
            pos = hit
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def validate(cfg: Any, text: str, source: str) -> dict:
    validator = jsonschema.Draft202012Validator(_schema("config.schema.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        line, col = _locate(text, list(err.absolute_path))
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise UsageError(f"{source}:{line}:{col}: {where}: {err.message}")
    return cfg


def load_config(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"{path}:1:1: cannot read config: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return validate(cfg, text, str(path))


def apply_override(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise UsageError(f"<override>:1:1: expected key.path=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise UsageError(f"<override>:1:1: {key!r} descends into a non-object")
    node[parts[-1]] = value


def resolve_out(arg: str | None, cfg: dict) -> Path:
    return Path(arg or cfg.get("output", {}).get("dir") or os.environ.get("ZENO_LAB_OUT") or DEFAULT_OUT)


def execute(cfg: dict, out_arg: str | None, jobs: int, source: str) -> int:
    try:
        outcome = experiments.run(cfg, jobs)
    except (ConfigurationError, ContractViolation) as exc:
        print(f"{source}:1:1: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HorizonError, NumericError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out_dir = resolve_out(out_arg, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = cfg.get("output", {}).get("formats", DEFAULT_FORMATS)
    log_y = cfg.get("run", {}).get("log_plot", outcome.log_plot)
    summary = {
        "experiment": cfg["experiment"],
        "config": cfg,
        "results": outcome.summary,
        "checks": [c.to_dict() for c in outcome.checks],
        "passed": outcome.passed,
        "exit_code": EXIT_OK if outcome.passed else EXIT_CHECK_FAILED,
    }
    if "csv" in formats:
        output.write_csv(out_dir / "survival.csv", outcome.columns)
    # the summary carries the verdicts, so it is always written
    output.write_json(out_dir / "summary.json", summary)
    if "svg" in formats:
        output.write_svg(out_dir / "plot.svg", outcome.columns, log_y)
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} {c.op} {c.tol:g}")
    print(f"wrote {out_dir}")
    return summary["exit_code"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zeno-lab", description="Quantum Zeno numerical laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", help="output directory (overrides output.dir and ZENO_LAB_OUT)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")

    pr = sub.add_parser("preset", help="run a built-in preset")
    pr.add_argument("name")
    pr.add_argument("overrides", nargs="*", metavar="key.path=value", help="JSON-valued config overrides")
    pr.add_argument("--out")
    pr.add_argument("--jobs", type=int, default=1)

    ls = sub.add_parser("list-presets", help="list built-in presets")
    ls.add_argument("--json", action="store_true", help="machine-readable listing")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-presets":
        listing = preset_listing()
        if args.json:
            doc = {"presets": listing}
            jsonschema.validate(doc, _schema("presets.schema.json"))
            print(json.dumps(doc, indent=2, sort_keys=True))
        else:
            width = max(len(x["name"]) for x in listing)
            for x in listing:
                print(f"{x['name']:<{width}}  {x['description']}")
        return EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            source = str(args.config)
            cfg = load_config(args.config)
        else:
            source = f"<preset {args.name}>"
            cfg = preset_config(args.name)
            for item in args.overrides:
                apply_override(cfg, item)
            text = json.dumps(cfg, indent=2)
            validate(cfg, text, source)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    return execute(cfg, args.out, args.jobs, source)


if __name__ == "__main__":
    sys.exit(main())
