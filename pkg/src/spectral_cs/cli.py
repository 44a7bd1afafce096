"""``spectral-cs`` command line.

Exit codes: 0 success, 2 invalid config, 3 cost guard violation, 4 a check failed.
Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .lab import RUNNERS, ConfigError, ExperimentConfig
from .moi import GuardError

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_CHECK = 0, 2, 3, 4

# flag name -> config field
FLAGS = {
    "seed": int,
    "dim": int,
    "q": int,
    "K": int,
    "Kmax": int,
    "function": str,
    "norm_cap": float,
    "d_scale": float,
    "pairs": int,
    "trials": int,
    "orders": int,
    "n": int,
    "eps": float,
    "jobs": int,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-cs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; its values take precedence over flags")
        for field, typ in FLAGS.items():
            p.add_argument("--" + field.replace("_", "-"), dest=field, type=typ, default=None)
        p.add_argument("--out", help="directory for <command>.json and <command>.csv")
        p.add_argument("--format", choices=("json", "csv"), default=None, help="stdout format")
    return parser


def _parse_function(text: str):
    text = text.strip()
    return json.loads(text) if text.startswith("{") else text


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    for field in FLAGS:
        v = getattr(args, field)
        if v is not None:
            data[field] = v
    if "function" in data:
        try:
            data["function"] = _parse_function(data["function"])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--function is not valid JSON: {exc}") from exc
    for key in ("out", "format"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.config:
        try:
            with open(args.config) as fh:
                file_data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update(file_data)
    return ExperimentConfig.from_dict(data)


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if hasattr(x, "item"):
        return _json_default(x.item()) if isinstance(x.item(), complex) else x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}, sort_keys=True) + "\n")
    return code


def run(command: str, cfg: ExperimentConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    out, csv_text, ok = RUNNERS[command](cfg)
    text = dump_json(out)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, f"{command}.json"), "w") as fh:
            fh.write(text)
        with open(os.path.join(cfg.out, f"{command}.csv"), "w") as fh:
            fh.write(csv_text)
    else:
        stdout.write(text if cfg.format == "json" else csv_text)
    return EXIT_OK if ok else EXIT_CHECK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    try:
        return run(args.command, cfg)
    except GuardError as exc:
        return _error("guard", exc, EXIT_GUARD)
    except (ConfigError, OSError) as exc:
        return _error("config", exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
