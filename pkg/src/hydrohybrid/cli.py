"""Command-line entry point: ``hydrohybrid {gains,simulate,lyapunov}``.

Exit codes: 0 success, 2 validation, 3 numeric, 4 integration failure,
5 stability-verdict failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import Config, from_dict, load_config, to_dict
from .errors import IntegrationError, NumericError, PressureLimitError, ValidationError
from .linear_system import build_closed_loop, open_loop_augmented
from .lyapunov import (
    LyapunovWeights,
    check_mode_sequence,
    rescore_events,
    search_weights,
    verify_decrease,
)
from .plant import FORCE, POSITION
from .simulation import export_log, export_stats, load_log, repeat_runs, run_scenario
from .synthesis import synthesize_gains, verify_gains

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_INTEGRATION, EXIT_VERDICT = 0, 2, 3, 4, 5
MODE_NAMES = {POSITION: "position", FORCE: "force"}

log = logging.getLogger("hydrohybrid")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _load(args) -> Config:
    cfg = load_config(args.config) if args.config else from_dict({})
    s = cfg.scenario
    if getattr(args, "seed", None) is not None:
        s = replace(s, seed=args.seed)
    if getattr(args, "runs", None) is not None:
        s = replace(s, run_count=args.runs)
    return replace(cfg, scenario=s)


def _write_manifest(out: Path, args, cfg: Config, started: str, command: str, extra=None) -> None:
    manifest = {
        "command": command,
        "config_path": str(Path(args.config).resolve()) if args.config else None,
        "config": to_dict(cfg),
        "version": __version__,
        "seed": cfg.scenario.seed,
        "output_dir": str(out.resolve()),
        "started": started,
        "finished": _now(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _fmt_pole(p: complex) -> str:
    return f"{p.real:.6g}" if p.imag == 0 else f"{p.real:.6g}{p.imag:+.6g}j"


def cmd_gains(args) -> int:
    started = _now()
    cfg = _load(args)
    s = cfg.scenario
    reports = {}
    for h in (POSITION, FORCE):
        op = s.operating_points[h]
        gains = s.gains[h]
        if cfg.desired_poles and h in cfg.desired_poles:
            A_e, b_e, _, _ = open_loop_augmented(s.plant, op, h)
            gains = synthesize_gains(A_e, b_e, cfg.desired_poles[h], h)
        reports[h] = verify_gains(gains, h, s.plant, op)

    for h, rep in reports.items():
        print(f"[{MODE_NAMES[h]}] all_stable={rep.all_stable}  "
              f"bandwidth_hz={'n/a' if rep.bandwidth_hz is None else f'{rep.bandwidth_hz:.4g}'}  "
              f"dc_gain={'n/a' if rep.dc_gain is None else f'{rep.dc_gain:.9g}'}")
        g = rep.gains
        print(f"  gains: K1={g.K1:.6g} K2={g.K2:.6g} K3={g.K3:.6g} K4={g.K4:.6g} Ki={g.Ki:.6g}")
        print("  poles: " + ", ".join(_fmt_pole(p) for p in rep.poles))
        print("  structural: " + ", ".join(_fmt_pole(p) for p in rep.structural_poles))
        for f in rep.flags:
            print(f"  flag: {f}")
    doc = {MODE_NAMES[h]: rep.to_dict() for h, rep in reports.items()}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gains.json").write_text(json.dumps(doc, indent=2))
        _write_manifest(out, args, cfg, started, "gains")
    else:
        print(json.dumps(doc, indent=2))
    return EXIT_OK


def _settling_summary(lg) -> dict:
    if not len(lg):
        return {"max_abs_position_error": None, "max_abs_force_error": None, "final_abs_error": None}
    err = lg.tracking_error()
    h = lg["h"]
    tail = lg.window(lg.t[-1] - 0.5, lg.t[-1])
    return {
        "max_abs_position_error": float(abs(err[h < 0]).max()) if (h < 0).any() else None,
        "max_abs_force_error": float(abs(err[h > 0]).max()) if (h > 0).any() else None,
        "final_abs_error": float(abs(err[tail]).max()) if tail.any() else None,
    }


def cmd_simulate(args) -> int:
    started = _now()
    cfg = _load(args)
    s = cfg.scenario
    out = Path(args.out or "hydrohybrid_out")
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    extra = {}
    if s.run_count == 1:
        try:
            lg = run_scenario(s)
        except IntegrationError as exc:
            if exc.log is not None:
                export_log(exc.log, out / "log.csv")
            print(f"integration failed: {exc}", file=sys.stderr)
            lg, code = exc.log, EXIT_INTEGRATION
        else:
            export_log(lg, out / "log.csv")
        if lg is not None:
            summary = {**lg.summary(), **_settling_summary(lg)}
            extra["summary"] = summary
            print(f"scenario {s.name}: {summary['switch_events']} switch events at "
                  f"{[round(t, 4) for t in summary['switch_times']]} s; status {summary['status']}")
            print(json.dumps({k: summary[k] for k in ("max_abs_position_error", "max_abs_force_error",
                                                      "final_abs_error", "pressure_clamps")}))
    else:
        stats, logs = repeat_runs(s, return_logs=True)
        for i, lg in enumerate(logs):
            export_log(lg, out / f"run_{i:03d}.csv")
        export_stats(stats, out)
        extra["stats"] = {"n_runs": stats.n_runs, "partial": stats.partial, "failures": stats.failures}
        counts = sorted({len(lg.events) for lg in logs})
        print(f"scenario {s.name}: {stats.n_runs} runs, switch events per run {counts}, "
              f"partial={stats.partial}")
        print(f"stats written to {out / 'position_stats.csv'} and {out / 'force_stats.csv'}")
        if stats.partial:
            code = EXIT_INTEGRATION
    _write_manifest(out, args, cfg, started, "simulate", extra)
    return code


def cmd_lyapunov(args) -> int:
    path = Path(args.log)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}", "log")
    cfg = _load(args)
    s = cfg.scenario
    lg = load_log(path)
    loops = {h: build_closed_loop(s.plant, s.gains[h], h, s.operating_points[h]) for h in (POSITION, FORCE)}
    if args.weights:
        w = LyapunovWeights.parse(args.weights)
        weights = {POSITION: w, FORCE: w}
        search = None
    else:
        search = {h: search_weights(loops[h].A_bar, h, seed=s.seed) for h in (POSITION, FORCE)}
        weights = {h: r.weights for h, r in search.items()}
    verdict = check_mode_sequence(rescore_events(lg.events, weights))
    decrease = {MODE_NAMES[h]: verify_decrease(weights[h], loops[h].A_bar, h, seed=s.seed).to_dict()
                for h in (POSITION, FORCE)}
    doc = {
        "log": str(path),
        "events": len(lg.events),
        "weights": {MODE_NAMES[h]: w.__dict__.copy() for h, w in weights.items()},
        "weight_search": None if search is None else {MODE_NAMES[h]: r.to_dict() for h, r in search.items()},
        "sequence": verdict.to_dict(),
        "verify_decrease": decrease,
        "nonincreasing": verdict.nonincreasing,
    }
    text = json.dumps(doc, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "lyapunov.json").write_text(text)
    return EXIT_OK if verdict.nonincreasing else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrohybrid", description="Hybrid position/force control toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gains", help="verify or synthesize gains and print poles/bandwidth/DC gain")
    g.add_argument("--config", help="JSON configuration file")
    g.add_argument("--out", help="directory for gains.json and manifest.json")
    g.set_defaults(func=cmd_gains)

    s = sub.add_parser("simulate", help="run a scenario (or repeated runs) and write CSV logs")
    s.add_argument("--config", help="JSON configuration file")
    s.add_argument("--out", help="output directory (default ./hydrohybrid_out)")
    s.add_argument("--seed", type=int, help="override scenario.seed")
    s.add_argument("--runs", type=int, help="override scenario.run_count")
    s.set_defaults(func=cmd_simulate)

    ly = sub.add_parser("lyapunov", help="check entry-level non-increase on a trajectory log")
    ly.add_argument("log", help="trajectory CSV written by 'simulate'")
    ly.add_argument("--config", help="configuration the log was produced with")
    ly.add_argument("--weights", help="'w1,w2,w3' for both modes; searched when omitted")
    ly.add_argument("--seed", type=int, help="seed for the weight search and sampling")
    ly.add_argument("--out", help="directory for lyapunov.json")
    ly.set_defaults(func=cmd_lyapunov)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, PressureLimitError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
