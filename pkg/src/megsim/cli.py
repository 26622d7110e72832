"""Command-line front end.

Commands:
  run       execute trials x protocols; writes metrics.csv, overhead.csv,
            transcript.json, and optional PGM image dumps
  sweep     re-run the scenario across parameter values; writes sweep.csv
  table     print the per-protocol overhead table; optionally write CSVs
  validate  load and validate a scenario, echoing applied defaults

All floating-point CSV values are printed with 9 significant digits; repeated
runs with identical configuration bytes and master seed produce byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .content import write_pgm
from .metrics import aggregate_trials, expected_overhead, reduction_factor
from .protocols import build_plan, operations_summary
from .runner import run_scenario, sweep_scenario
from .scenario import ScenarioConfig, ScenarioError, load_scenario

FLOAT_FMT = "%.9g"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return FLOAT_FMT % value
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def _load(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.protocols:
        from .scenario import PROTOCOL_ALIASES, validate_config

        requested = (p.strip().upper() for p in args.protocols.split(","))
        cfg.protocols = tuple(PROTOCOL_ALIASES.get(p, p) for p in requested)
        validate_config(cfg)
    return cfg


def _echo_defaults(cfg: ScenarioConfig) -> None:
    for entry in cfg.applied_defaults:
        print(f"default applied: {entry}", file=sys.stderr)


def _overhead_rows(cfg: ScenarioConfig):
    sizes = cfg.overhead_sizes()
    records = {pid: expected_overhead(pid, sizes) for pid in cfg.protocols}
    central = records.get("CENTRAL") or expected_overhead("CENTRAL", sizes)
    rows = []
    for pid in cfg.protocols:
        rec = records[pid]
        reduction = (
            "" if rec.aggregate_bits == 0 else reduction_factor(central, rec)
        )
        rows.append([pid, rec.uplink_bits, rec.downlink_bits, rec.aggregate_bits,
                     reduction])
    return records, rows


def _breakdown_rows(records, protocol_order):
    rows = []
    for pid in protocol_order:
        for entry in records[pid].breakdown:
            rows.append([pid, entry.direction, entry.payload_kind, entry.count,
                         entry.bits])
    return rows


def cmd_table(args) -> int:
    cfg = _load(args)
    _echo_defaults(cfg)
    records, rows = _overhead_rows(cfg)
    summaries = {
        pid: operations_summary(build_plan(pid, cfg.plan_context()))
        for pid in cfg.protocols
    }
    header = f"{'protocol':<9} {'uplink_bits':>12} {'downlink_bits':>14} " \
             f"{'aggregate_bits':>15} {'reduction':>10}  operations"
    print(header)
    for row in rows:
        pid, up, down, agg, red = row
        red_s = _fmt(red) if red != "" else "-"
        print(f"{pid:<9} {up:>12} {down:>14} {agg:>15} {red_s:>10}  {summaries[pid]}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "overhead.csv",
                   ["protocol", "uplink_bits", "downlink_bits", "aggregate_bits",
                    "reduction_vs_central"],
                   rows)
        _write_csv(out_dir / "overhead_breakdown.csv",
                   ["protocol", "direction", "payload_kind", "count", "bits"],
                   _breakdown_rows(records, cfg.protocols))
    return 0


def _transcript_json(transcript, trial: int) -> dict:
    return {
        "protocol": transcript.protocol_id,
        "trial": trial,
        "request_id": transcript.request_id,
        "arrival_time_s": transcript.arrival_time,
        "completion_time_s": transcript.completion_time,
        "response_time_s": transcript.response_time,
        "uplink_bits": transcript.uplink_bits,
        "downlink_bits": transcript.downlink_bits,
        "selected_indices": {str(k): v for k, v in transcript.selected_indices.items()},
        "steps": [
            {"index": s.index, "site": s.site, "action": s.action,
             "start_s": s.start, "end_s": s.end}
            for s in transcript.steps
        ],
        "transmits": [
            {"step": t.step_index, "src": t.src, "dst": list(t.dst),
             "payload_kind": t.payload_kind, "bits": t.bits,
             "symbol_count": t.symbol_count, "direction": t.direction,
             "noisy": t.noisy, "duration_s": t.duration}
            for t in transcript.transmits
        ],
    }


def cmd_run(args) -> int:
    cfg = _load(args)
    _echo_defaults(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        reports, transcripts = run_scenario(cfg, keep_transcripts=True)

        metrics_rows = []
        for rep in reports:
            metrics_rows.append([
                rep.protocol_id, rep.trial, rep.request_id, rep.mse, rep.psnr_db,
                rep.response_time, rep.uplink_bits, rep.downlink_bits,
                rep.aggregate_bits,
                "" if rep.selected_index is None else rep.selected_index,
            ])
        path = out_dir / "metrics.csv"
        _write_csv(path,
                   ["protocol", "trial", "request_id", "mse", "psnr_db",
                    "response_time_s", "uplink_bits", "downlink_bits",
                    "aggregate_bits", "selected_index"],
                   metrics_rows)
        written.append(path)

        records, rows = _overhead_rows(cfg)
        path = out_dir / "overhead.csv"
        _write_csv(path,
                   ["protocol", "uplink_bits", "downlink_bits", "aggregate_bits",
                    "reduction_vs_central"], rows)
        written.append(path)
        path = out_dir / "overhead_breakdown.csv"
        _write_csv(path, ["protocol", "direction", "payload_kind", "count", "bits"],
                   _breakdown_rows(records, cfg.protocols))
        written.append(path)

        # accounting consistency: closed-form totals must match the executions
        observed = {}
        for rep in reports:
            key = rep.protocol_id
            observed.setdefault(key, (rep.uplink_bits, rep.downlink_bits))
        for pid, (up, down) in observed.items():
            rec = records[pid]
            if (up, down) != (rec.uplink_bits, rec.downlink_bits):
                raise RuntimeError(
                    f"overhead accounting mismatch for {pid}: "
                    f"observed {(up, down)}, expected {(rec.uplink_bits, rec.downlink_bits)}"
                )

        first_by_protocol = {}
        for t in transcripts:
            first_by_protocol.setdefault(t.protocol_id, t)
        doc = {
            "master_seed": cfg.master_seed,
            "trials": cfg.trials,
            "runs": [_transcript_json(t, 0) for t in first_by_protocol.values()],
        }
        path = out_dir / "transcript.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8", newline="\n")
        written.append(path)

        if args.dump_images:
            for pid, t in first_by_protocol.items():
                for tag, grid in (
                    ("input", t.values["image@UE"]),
                    ("reference", t.reference_output),
                    ("output", t.final_output),
                ):
                    path = out_dir / f"{pid.lower()}_{tag}.pgm"
                    write_pgm(grid, path, binary=True)
                    written.append(path)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    print(f"wrote {len(written)} files to {out_dir}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    _echo_defaults(cfg)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ScenarioError("sweep: values list must not be empty")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = sweep_scenario(cfg, args.parameter, values)
    rows = []
    for value, reports in results.items():
        by_protocol: dict[str, list] = {}
        for rep in reports:
            by_protocol.setdefault(rep.protocol_id, []).append(rep)
        for pid in cfg.protocols:
            reps = by_protocol[pid]
            psnr = aggregate_trials(reps, "psnr_db")
            rt = aggregate_trials(reps, "response_time")
            mse = aggregate_trials(reps, "mse")
            rows.append([args.parameter, value, pid, len(reps),
                         psnr.mean, psnr.std, mse.mean, rt.mean, rt.std])
    _write_csv(out_dir / "sweep.csv",
               ["parameter", "value", "protocol", "trials", "mean_psnr_db",
                "std_psnr_db", "mean_mse", "mean_response_time_s",
                "std_response_time_s"],
               rows)
    print(f"wrote sweep.csv to {out_dir}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args)
    _echo_defaults(cfg)
    print(f"scenario OK: {len(cfg.protocols)} protocols, {cfg.trials} trials, "
          f"es_count={cfg.es_count}, snr_db={cfg.snr_db}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="megsim",
        description="Discrete-event simulator for split generative workflows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario master seed")
        p.add_argument("--protocols", default=None,
                       help="comma-separated protocol subset to run")

    p_run = sub.add_parser("run", help="execute trials and write CSV artifacts")
    common(p_run)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--dump-images", action="store_true",
                       help="write input/reference/output PGM images")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter across values")
    common(p_sweep)
    p_sweep.add_argument("--parameter", required=True,
                         help="snr_db | es_count | latent_dim | pool_factor | seed_bits")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_table = sub.add_parser("table", help="print the overhead table")
    common(p_table)
    p_table.add_argument("--out", default=None, help="also write CSVs here")
    p_table.set_defaults(func=cmd_table)

    p_val = sub.add_parser("validate", help="validate a scenario file")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
