"""Command-line interface: run one controller or compare all three on a
scenario file, writing CSV logs and metrics JSON."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .controllers import ControllerKind
from .scenario import Scenario, ScenarioError, load_scenario
from .sim.metrics import dip_magnitude, event_windows
from .sim.run import ControllerRun, compare_controllers, run_with_metrics

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
NOISE_FLOOR = 1e-3
KINDS = [k.value for k in ControllerKind]

log = logging.getLogger("statcomsim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _controller_kind(text: str) -> str:
    if text not in KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown controller {text!r}; valid kinds: {', '.join(KINDS)}")
    return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="statcomsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate one controller")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--controller", required=True, type=_controller_kind,
                     help=f"one of {', '.join(KINDS)}")
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--dt", type=float)
    run.add_argument("--t-end", type=float)

    cmp_ = sub.add_parser("compare", help="simulate all controllers and rank them")
    cmp_.add_argument("--scenario", required=True, type=Path)
    cmp_.add_argument("--out", required=True, type=Path)
    cmp_.add_argument("--dt", type=float)
    cmp_.add_argument("--t-end", type=float)
    return p


def _prepare(args) -> Scenario:
    sc = load_scenario(args.scenario)
    try:
        sc = sc.with_solver(dt=args.dt, t_end=args.t_end)
    except ValueError as exc:
        raise ScenarioError(str(exc).splitlines()[-1].strip(), "/solver") from None
    return sc


def _ensure_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ScenarioError(f"output directory {out} is not writable: {exc.strerror}") from None


def _event_entry(run: ControllerRun, index: int) -> dict:
    entry = run.metrics["v_pcc_mag"][index].to_dict()
    entry["columns"] = {col: ms[index].to_dict() for col, ms in run.metrics.items()}
    return entry


def metrics_document(run: ControllerRun) -> dict:
    doc: dict = {str(i): _event_entry(run, i) for i in range(len(run.metrics["v_pcc_mag"]))}
    if run.failed:
        doc["failed"] = True
        doc["status"] = run.log.status
        doc["failure_time"] = run.log.failure_time
    return doc


def _write_run(run: ControllerRun, sc: Scenario, out: Path) -> Path:
    path = out / f"{sc.metadata.name}_{run.kind.value}.csv"
    run.log.to_csv(path)
    return path


def cmd_run(args) -> int:
    sc = _prepare(args).with_controller(args.controller)
    _ensure_writable(args.out)
    run = run_with_metrics(sc)
    csv_path = _write_run(run, sc, args.out)
    metrics_path = args.out / f"{sc.metadata.name}_{run.kind.value}_metrics.json"
    metrics_path.write_text(json.dumps({run.kind.value: metrics_document(run)}, indent=2) + "\n",
                            encoding="utf-8")
    print(f"wrote {csv_path} ({len(run.log)} rows) and {metrics_path}")
    if run.failed:
        print(f"{run.kind.value}: {run.log.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _compare_values(name: str, a_kind: str, a: float, b_kind: str, b: float) -> str:
    scale = max(abs(a), abs(b))
    if scale < 1e-12 or abs(a - b) / scale < NOISE_FLOOR:
        return f"{name}: {a_kind} ~ {b_kind} (tie, {a:.6g} vs {b:.6g})"
    op = "<" if a < b else ">"
    return f"{name}: {a_kind} {op} {b_kind} ({a:.6g} vs {b:.6g})"


def ranking_summary(sc: Scenario, runs: dict[ControllerKind, ControllerRun]) -> str:
    """Plain-text ranking of the proposed controller against the other two."""
    lines = [f"scenario: {sc.metadata.name}"]
    for kind, r in runs.items():
        lines.append(f"{kind.value}: {'ok' if not r.failed else 'FAILED - ' + r.log.message}")
    windows = event_windows(sc.snapped_events(), sc.solver.t_end)
    if not windows:
        lines.append("no events: all rankings tie")
        return "\n".join(lines) + "\n"
    P, D, L = ControllerKind.PROPOSED, ControllerKind.DOV, ControllerKind.DOUBLE_LOOP
    for w in windows:
        ev = sc.snapped_events()[w.index]
        lines.append(f"event {w.index} ({ev.describe()}):")
        for other in (D, L):
            pair = (runs[P], runs[other])
            if any(r.failed and len(r.metrics["v_pcc_mag"]) <= w.index for r in pair):
                lines.append(f"  proposed vs {other.value}: not compared (run failed)")
                continue
            lines.append(f"  proposed vs {other.value}:")
            mp, mo = (r.metrics["v_pcc_mag"][w.index] for r in pair)
            for field in ("overshoot_pct", "settling_time", "peak_deviation"):
                lines.append("    " + _compare_values(f"v_pcc_mag {field}", P.value,
                                                    getattr(mp, field), other.value,
                                                    getattr(mo, field)))
            dp, do = (dip_magnitude(r.log, "motor_speed", w.t_start,
                                    r.metrics["motor_speed"][w.index].reference, w.t_end)
                      for r in pair)
            lines.append("    " + _compare_values("motor_speed dip", P.value, dp, other.value, do))
            tp, to = (r.metrics["motor_torque"][w.index].peak_deviation for r in pair)
            lines.append("    " + _compare_values("motor_torque peak_deviation", P.value, tp,
                                                other.value, to))
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    sc = _prepare(args)
    _ensure_writable(args.out)
    runs = compare_controllers(sc)
    for r in runs.values():
        print(f"wrote {_write_run(r, sc, args.out)}")
    doc = {k.value: metrics_document(r) for k, r in runs.items()}
    (args.out / "comparison_metrics.json").write_text(json.dumps(doc, indent=2) + "\n",
                                                      encoding="utf-8")
    summary = ranking_summary(sc, runs)
    (args.out / "ranking_summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return EXIT_NUMERICAL if any(r.failed for r in runs.values()) else EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_compare(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
