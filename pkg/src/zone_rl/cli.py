"""Command-line client for the experiment service.

The CLI is a thin HTTP client: it validates the config document, posts it to
the service (an in-process ASGI app by default, a remote server with
``--server``), and writes the returned payload to files. All report and log
files are deterministic functions of (config, seeds), so re-running a
command reproduces them byte for byte.

Verbs: ``validate-theory``, ``run-glucose``, ``sweep-budget``, ``ablation``.
Shared flags: ``--config PATH`` (single JSON document, unknown keys
rejected), ``--out DIR``, ``--seeds CSV``, ``--parallel N``, ``--server
URL``. The ``ZONE_RL_LOG`` environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import httpx

from .config import ExperimentConfig, TheoryConfig, config_from_dict
from .metrics import (
    METRIC_FIELDS,
    REPORT_COLUMNS,
    AggregateRow,
    write_plot_csv,
    write_report_csv,
    write_report_json,
)
from .service import create_app

logger = logging.getLogger(__name__)

LOG_ENV_VAR = "ZONE_RL_LOG"
DEFAULT_OUT_DIR = "zone-rl-out"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be a CSV list of integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("seeds list is empty")
    return seeds


def _parse_budgets(text: str) -> list[float]:
    try:
        budgets = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be a CSV list of numbers, got {text!r}")
    if not budgets:
        raise argparse.ArgumentTypeError("budgets list is empty")
    return budgets


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zone-rl",
        description="Target-zone control experiments: theory checks, glucose runs, sweeps, ablations.",
    )
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="JSON config document")
    shared.add_argument("--out", metavar="DIR", help=f"output directory (default {DEFAULT_OUT_DIR})")
    shared.add_argument("--seeds", type=_parse_seeds, metavar="CSV", help="override config seeds, e.g. 0,1,2")
    shared.add_argument("--parallel", type=int, metavar="N", help="seed-level worker threads")
    shared.add_argument("--server", metavar="URL", help="remote service URL (default: in-process)")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "validate-theory", parents=[shared], help="run the theory-validation suite"
    )
    commands.add_parser(
        "run-glucose", parents=[shared], help="evaluate one policy configuration on the glucose env"
    )
    sweep = commands.add_parser(
        "sweep-budget", parents=[shared], help="evaluate one policy across intervention budgets"
    )
    sweep.add_argument(
        "--budgets", type=_parse_budgets, metavar="CSV", help="override swept budgets, e.g. 40,90"
    )
    commands.add_parser(
        "ablation", parents=[shared], help="run the observation/constraint ablation settings"
    )
    return parser


def _load_config_document(args: argparse.Namespace) -> dict[str, Any]:
    if args.config is None:
        document: dict[str, Any] = {}
    else:
        with open(args.config) as handle:
            document = json.load(handle)
        if not isinstance(document, dict):
            raise ValueError("config document must be a JSON object")
    if args.seeds is not None:
        document["seeds"] = args.seeds
    if args.parallel is not None:
        document["parallel"] = args.parallel
    return document


def _out_dir(args: argparse.Namespace, document: dict[str, Any]) -> Path:
    out = args.out or document.get("out_dir") or DEFAULT_OUT_DIR
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


class ServiceError(RuntimeError):
    pass


async def _post_async(args: argparse.Namespace, path: str, body: dict[str, Any]) -> httpx.Response:
    if args.server:
        async with httpx.AsyncClient(base_url=args.server, timeout=None) as client:
            return await client.post(path, json=body)
    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://zone-rl.internal", timeout=None
    ) as client:
        return await client.post(path, json=body)


def _post(args: argparse.Namespace, path: str, body: dict[str, Any]) -> dict[str, Any]:
    response = asyncio.run(_post_async(args, path, body))
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise ServiceError(f"service error ({response.status_code}): {detail}")
    return response.json()


def _rows_from_report(report: list[dict[str, Any]]) -> list[AggregateRow]:
    return [
        AggregateRow(
            task=entry["task"],
            model=entry["model"],
            means={metric: entry[metric]["mean"] for metric in METRIC_FIELDS},
            stds={metric: entry[metric]["std"] for metric in METRIC_FIELDS},
            seeds=tuple(entry["seeds"]),
        )
        for entry in report
    ]


def _print_rows(rows: list[AggregateRow]) -> None:
    header = f"{REPORT_COLUMNS[0]:<18} {REPORT_COLUMNS[1]:<26} " + " ".join(
        f"{column:>16}" for column in REPORT_COLUMNS[2:]
    )
    print(header)
    metric_keys = ("tir", "tar", "tbr", "mean_glucose", "aime")
    for row in rows:
        cells = " ".join(f"{row.cell(metric):>16}" for metric in metric_keys)
        print(f"{row.task:<18} {row.model:<26} {cells}")


def _write_experiment_outputs(out: Path, payload: dict[str, Any]) -> None:
    rows = _rows_from_report(payload["report"])
    write_report_csv(out / "report.csv", rows)
    write_report_json(out / "report.json", rows)
    trajectories_dir = out / "trajectories"
    logs_dir = out / "logs"
    trajectories_dir.mkdir(exist_ok=True)
    logs_dir.mkdir(exist_ok=True)
    for group in payload["groups"]:
        label = group["label"]
        write_plot_csv(
            trajectories_dir / f"{label}.csv",
            {run["seed"]: run["x"] for run in group["seeds"]},
        )
        for run in group["seeds"]:
            log_path = logs_dir / f"{label}-seed{run['seed']}.jsonl"
            with open(log_path, "w", encoding="utf-8") as handle:
                for record in run["log"]:
                    handle.write(json.dumps(record, sort_keys=True) + "\n")
        if group["budget_negative_steps"]:
            logger.warning(
                "group %r logged %d budget-negative steps",
                label,
                group["budget_negative_steps"],
            )
    _print_rows(rows)
    print(f"wrote {out}")


def _experiment_command(args: argparse.Namespace, endpoint: str) -> int:
    document = _load_config_document(args)
    config_from_dict(ExperimentConfig, document)  # fail fast, same rules as the service
    body: dict[str, Any] = {"config": document}
    if endpoint == "/experiments/sweep-budget" and getattr(args, "budgets", None) is not None:
        body["budgets"] = args.budgets
    payload = _post(args, endpoint, body)
    _write_experiment_outputs(_out_dir(args, document), payload)
    return EXIT_OK


def _validate_theory_command(args: argparse.Namespace) -> int:
    document = _load_config_document(args)
    # the shared flags land on the theory suite's own knobs
    if document.pop("parallel", None) is not None:
        logger.debug("the theory suite runs serially; --parallel ignored")
    seeds = document.pop("seeds", None)
    if seeds is not None:
        document["qlearning_seeds"] = seeds
    config_from_dict(TheoryConfig, document)
    payload = _post(args, "/theory/validate", {"config": document})
    out = _out_dir(args, document)
    report_path = out / "theory_report.json"
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    for check in payload["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        residual = check["residual"]
        shown = "-" if residual is None else f"{residual:.3e}"
        print(f"{status}  {check['name']:<40} residual {shown:>11}  {check['detail']}")
    print(f"wrote {report_path}")
    if not payload["passed"]:
        print(f"failing checks: {', '.join(payload['failures'])}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


_VALID_LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get(LOG_ENV_VAR, "INFO").upper()
    if level not in _VALID_LOG_LEVELS:
        level = "INFO"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if level != "DEBUG":  # keep request-level chatter out of normal runs
        logging.getLogger("httpx").setLevel(logging.WARNING)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate-theory":
            return _validate_theory_command(args)
        if args.command == "run-glucose":
            return _experiment_command(args, "/experiments/run-glucose")
        if args.command == "sweep-budget":
            return _experiment_command(args, "/experiments/sweep-budget")
        if args.command == "ablation":
            return _experiment_command(args, "/experiments/ablation")
    except (OSError, ValueError, TypeError, ServiceError) as exc:
        print(f"zone-rl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
