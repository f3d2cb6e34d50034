"""Command-line pipelines: discover, enhance, simulate, evaluate, optimize,
full, and rediscover.

Every parameter can also be set through a TOML config file (``--config``):
top-level keys apply to all subcommands, a table named after a subcommand
overrides them, and explicit command-line flags win over both. Config keys
match the argparse destinations (e.g. ``min_gap`` for ``--lambda``). The
environment variable ``DELAYMINER_SEED`` is the fallback seed.

Exit codes: 0 success, 2 usage, 3 input validation, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .bps_model import inject_timers, load_model, save_model
from .delay_discovery import DelayConfig, DelayReport, discover_delay_report
from .errors import (
    DelayMinerError,
    LogValidationError,
    ModelValidationError,
    OptimizationError,
    SchemaError,
    SimulationError,
)
from .harness import calendars_for_log, rediscovery_harness
from .log_io import format_timestamp, parse_log, parse_timestamp, write_log
from .metrics import confidence_interval, cycle_time_stats, red_distance
from .optimizer import TpeConfig, optimize
from .simulator import SimulationConfig, simulate, simulate_traced
from .timeline import DEFAULT_CONCURRENCY_THRESHOLD, causal_pairs, discover_concurrency

ESTIMATOR_CHOICES = {
    "naive": "naive",
    "eclipse": "eclipse_aware",
    "eclipse-extrapolated": "eclipse_aware_extrapolated",
}
ATTRIBUTION_CHOICES = {"ex-post": "ex_post", "ex-ante": "ex_ante"}

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


class Settings:
    """Per-invocation parameter lookup: CLI flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace):
        self.values = vars(args)
        config = _load_toml(args.config) if args.config else {}
        self.section = config.get(args.command, {})
        self.top = {k: v for k, v in config.items() if not isinstance(v, dict)}

    def get(self, key: str, default=None):
        value = self.values.get(key)
        if value is not None:
            return value
        if key in self.section:
            return self.section[key]
        if key in self.top:
            return self.top[key]
        return default

    def seed(self) -> int:
        value = self.get("seed")
        if value is None:
            value = os.environ.get("DELAYMINER_SEED")
        return int(value) if value is not None else 0


def _column_map(pairs) -> dict[str, str] | None:
    if not pairs:
        return None
    mapping = {}
    for pair in pairs:
        if "=" not in pair:
            raise SchemaError(f"--column-map entries must be key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        mapping[key] = value
    return mapping


def _write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")


def _delay_config(settings: Settings) -> DelayConfig:
    estimator = settings.get("estimator", "eclipse-extrapolated")
    attribution = settings.get("attribution", "ex-ante")
    return DelayConfig(
        estimator=ESTIMATOR_CHOICES.get(estimator, estimator),
        min_gap=float(settings.get("min_gap", 300.0)),
        outlier_threshold=float(settings.get("outlier_threshold", 0.05)),
        attribution=ATTRIBUTION_CHOICES.get(attribution, attribution),
    )


def _calendars(settings: Settings, log, model):
    return calendars_for_log(
        log,
        model,
        granularity=int(settings.get("calendar_granularity", 3600)),
        support=float(settings.get("calendar_support", 0.1)),
        confidence=float(settings.get("calendar_confidence", 0.6)),
    )


def _instance_json(inst) -> dict:
    return {
        "trace_id": inst.trace_id,
        "activity": inst.activity,
        "start": format_timestamp(inst.start),
        "end": format_timestamp(inst.end),
        "resource": inst.resource,
    }


def cmd_discover(settings: Settings) -> int:
    log = parse_log(settings.get("log"), _column_map(settings.get("column_map")))
    model = load_model(settings.get("model")) if settings.get("model") else None
    config = _delay_config(settings)
    zeta = float(settings.get("zeta", DEFAULT_CONCURRENCY_THRESHOLD))
    calendars = _calendars(settings, log, model)
    relation = discover_concurrency(log, zeta)
    pairs = causal_pairs(log, relation)
    if settings.get("dump_pairs"):
        _write_json(settings.get("dump_pairs"), {
            "concurrency": sorted([a, b] for a, b in relation.pairs if a < b),
            "zeta": zeta,
            "pairs": [
                {"source": _instance_json(s), "target": _instance_json(t)}
                for s, t in pairs.pairs
            ],
            "orphans": [_instance_json(o) for o in pairs.orphans],
        })
    report = discover_delay_report(log, calendars, config, zeta, pairs)
    _write_json(settings.get("out"), report.to_json(emit_raw=bool(settings.get("emit_raw"))))
    print(f"discovered delays for {len(report.activities)} activities")
    return EXIT_OK


def cmd_enhance(settings: Settings) -> int:
    model = load_model(settings.get("model"))
    with open(settings.get("report"), encoding="utf-8") as fh:
        report = DelayReport.from_json(json.load(fh))
    enhanced = inject_timers(model, report)
    save_model(enhanced, settings.get("out"))
    print(f"wrote {settings.get('out')} ({len(enhanced.timers)} timers)")
    return EXIT_OK


def cmd_simulate(settings: Settings) -> int:
    model = load_model(settings.get("model"))
    out_dir = Path(settings.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = int(settings.get("runs", 1))
    traces = int(settings.get("traces", 100))
    seed = settings.seed()
    start = settings.get("start")
    start_instant = parse_timestamp(start) if start else None
    width = max(2, len(str(runs - 1)))
    trace_timers = bool(settings.get("trace_timers"))
    for k in range(runs):
        cfg_kwargs = {"num_traces": traces, "seed": seed + k}
        if start_instant is not None:
            cfg_kwargs["start_instant"] = start_instant
        cfg = SimulationConfig(**cfg_kwargs)
        run_path = out_dir / f"run_{k:0{width}d}.csv"
        if trace_timers:
            result = simulate_traced(model, cfg)
            write_log(result.log, run_path)
            timer_path = out_dir / f"timers_{k:0{width}d}.csv"
            with open(timer_path, "w", encoding="utf-8") as fh:
                fh.write("case_id,activity,attribution,delay\n")
                for draw in result.timer_draws:
                    fh.write(
                        f"{draw.trace_id},{draw.activity},{draw.attribution},{draw.delay}\n"
                    )
            print(f"wrote {run_path} and {timer_path}")
        else:
            write_log(simulate(model, cfg), run_path)
            print(f"wrote {run_path}")
    return EXIT_OK


def _evaluation_payload(reference, run_logs: dict) -> dict:
    reds = {name: red_distance(sim, reference) for name, sim in run_logs.items()}
    mean, half = confidence_interval(list(reds.values()))
    per_run_stats = {
        name: cycle_time_stats(sim).as_dict() for name, sim in run_logs.items()
    }
    keys = ("min", "q1", "median", "mean", "q3", "max")
    averaged = {
        key: sum(stats[key] for stats in per_run_stats.values()) / len(per_run_stats)
        for key in keys
    }
    return {
        "runs": [
            {"log": name, "red": reds[name]} for name in sorted(run_logs)
        ],
        "red": {"mean": mean, "ci95_half_width": half},
        "cycle_time": {
            "reference": cycle_time_stats(reference).as_dict(),
            "simulated": averaged,
            "per_run": {name: per_run_stats[name] for name in sorted(per_run_stats)},
        },
    }


def cmd_evaluate(settings: Settings) -> int:
    reference = parse_log(
        settings.get("reference"), _column_map(settings.get("column_map"))
    )
    sim_dir = Path(settings.get("simulated_dir"))
    run_paths = sorted(sim_dir.glob("run_*.csv"))
    if not run_paths:
        raise LogValidationError(f"no run_*.csv files under {sim_dir}")
    run_logs = {p.name: parse_log(p) for p in run_paths}
    _write_json(settings.get("out"), _evaluation_payload(reference, run_logs))
    return EXIT_OK


def cmd_optimize(settings: Settings) -> int:
    model = load_model(settings.get("model"))
    log = parse_log(settings.get("log"), _column_map(settings.get("column_map")))
    delay_cfg = _delay_config(settings)
    tpe_cfg = TpeConfig(
        iterations=int(settings.get("iterations", 100)),
        gamma_max=float(settings.get("gamma_max", 10.0)),
        startup_trials=int(settings.get("startup_trials", 10)),
        good_quantile=float(settings.get("good_quantile", 0.25)),
        candidates_per_step=int(settings.get("candidates", 24)),
        seed=settings.seed(),
        runs_per_eval=int(settings.get("runs_per_eval", 1)),
    )
    zeta = float(settings.get("zeta", DEFAULT_CONCURRENCY_THRESHOLD))
    calendars = _calendars(settings, log, model)
    enhanced, history = optimize(
        model, log, delay_cfg, tpe_cfg,
        calendars=calendars, concurrency_threshold=zeta,
    )
    save_model(enhanced, settings.get("out"))
    print(f"wrote {settings.get('out')}")
    if settings.get("history"):
        _write_json(settings.get("history"), history.to_json())
    best = history.trials[history.best]
    print(f"best trial {history.best}: objective {best[1]:.6f}")
    return EXIT_OK


def cmd_full(settings: Settings) -> int:
    stage = "parse"
    written: list[str] = []
    try:
        log = parse_log(settings.get("log"), _column_map(settings.get("column_map")))
        model = load_model(settings.get("model"))
        out_dir = Path(settings.get("out_dir"))
        out_dir.mkdir(parents=True, exist_ok=True)
        seed = settings.seed()
        delay_cfg = _delay_config(settings)
        zeta = float(settings.get("zeta", DEFAULT_CONCURRENCY_THRESHOLD))
        calendars = _calendars(settings, log, model)

        stage = "discover"
        report = discover_delay_report(log, calendars, delay_cfg, zeta)
        _write_json(out_dir / "delay_report.json", report.to_json(emit_raw=True))
        written.append("delay_report.json")

        stage = "enhance"
        if settings.get("tpe"):
            tpe_cfg = TpeConfig(
                iterations=int(settings.get("iterations", 100)),
                gamma_max=float(settings.get("gamma_max", 10.0)),
                startup_trials=int(settings.get("startup_trials", 10)),
                good_quantile=float(settings.get("good_quantile", 0.25)),
                candidates_per_step=int(settings.get("candidates", 24)),
                seed=seed,
                runs_per_eval=int(settings.get("runs_per_eval", 1)),
            )
            enhanced, history = optimize(
                model, log, delay_cfg, tpe_cfg,
                calendars=calendars, concurrency_threshold=zeta,
            )
            _write_json(out_dir / "history.json", history.to_json())
            written.append("history.json")
        else:
            enhanced = inject_timers(model, report)
        save_model(enhanced, out_dir / "enhanced_model.json")
        print(f"wrote {out_dir / 'enhanced_model.json'}")
        written.append("enhanced_model.json")

        stage = "simulate"
        runs = int(settings.get("runs", 10))
        traces = int(settings.get("traces", len(log.traces())))
        span = log.span
        width = max(2, len(str(runs - 1)))
        runs_dir = out_dir / "runs"
        runs_dir.mkdir(exist_ok=True)
        run_logs = {}
        for k in range(runs):
            cfg = SimulationConfig(
                num_traces=traces, seed=seed + k, start_instant=span[0]
            )
            sim_log = simulate(enhanced, cfg)
            name = f"run_{k:0{width}d}.csv"
            write_log(sim_log, runs_dir / name)
            run_logs[name] = sim_log
            written.append(f"runs/{name}")
        print(f"wrote {runs} simulated logs under {runs_dir}")

        stage = "evaluate"
        _write_json(out_dir / "evaluation.json", _evaluation_payload(log, run_logs))
        return EXIT_OK
    except DelayMinerError as exc:
        if written:
            print(f"partial outputs left in place: {', '.join(written)}",
                  file=sys.stderr)
        raise type(exc)(f"stage {stage}: {exc}") from exc


def cmd_rediscover(settings: Settings) -> int:
    model = load_model(settings.get("model"))
    sim_cfg = SimulationConfig(
        num_traces=int(settings.get("traces", 1000)),
        seed=settings.seed(),
    )
    delay_cfg = DelayConfig(
        estimator="eclipse_aware_extrapolated",
        min_gap=float(settings.get("min_gap", 1.0)),
        outlier_threshold=float(settings.get("outlier_threshold", 0.05)),
        attribution=ATTRIBUTION_CHOICES.get(
            settings.get("attribution", "ex-ante"), "ex_ante"
        ),
    )
    started = time.perf_counter()
    report = rediscovery_harness(
        model, sim_cfg, delay_cfg,
        concurrency_threshold=float(settings.get("zeta", DEFAULT_CONCURRENCY_THRESHOLD)),
    )
    elapsed = time.perf_counter() - started
    _write_json(settings.get("out"), report)
    for estimator, scores in report["estimators"].items():
        print(
            f"{estimator}: per-pair SMAPE {scores['per_pair_smape']:.3f}, "
            f"precision {scores['precision']:.2f}, recall {scores['recall']:.2f}, "
            f"timer SMAPE {scores['timer_smape']:.3f}"
        )
    print(f"rediscovery finished in {elapsed:.1f}s")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file with defaults")
    parser.add_argument("--seed", type=int, help="base random seed")


def _add_discovery_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--estimator", choices=sorted(ESTIMATOR_CHOICES))
    parser.add_argument("--attribution", choices=sorted(ATTRIBUTION_CHOICES))
    parser.add_argument("--lambda", dest="min_gap", type=float,
                        help="minimum availability-interval duration, seconds")
    parser.add_argument("--delta", dest="outlier_threshold", type=float,
                        help="minimum share of positive delays per activity")
    parser.add_argument("--zeta", type=float, help="concurrency overlap threshold")
    parser.add_argument("--calendar-granularity", dest="calendar_granularity", type=int)
    parser.add_argument("--calendar-support", dest="calendar_support", type=float)
    parser.add_argument("--calendar-confidence", dest="calendar_confidence", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delayminer",
        description="Discover extraneous activity delays and enhance simulation models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discover", help="estimate extraneous delays from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--model", help="model providing resource calendars")
    p.add_argument("--out", required=True)
    p.add_argument("--emit-raw", dest="emit_raw", action="store_true", default=None)
    p.add_argument("--dump-pairs", dest="dump_pairs",
                   help="debug JSON with the concurrency relation and causal pairs")
    p.add_argument("--column-map", dest="column_map", nargs="*", metavar="KEY=COL")
    _add_discovery_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("enhance", help="inject a delay report into a model")
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("simulate", help="simulate a model into event logs")
    p.add_argument("--model", required=True)
    p.add_argument("--traces", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--start", help="simulation start instant, ISO-8601")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--trace-timers", dest="trace_timers", action="store_true",
                   default=None, help="also write sampled timer delays per run")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score simulated logs against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--simulated-dir", dest="simulated_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--column-map", dest="column_map", nargs="*", metavar="KEY=COL")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="tune delay scale factors with TPE")
    p.add_argument("--model", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="where to write the trial history JSON")
    p.add_argument("--iterations", type=int)
    p.add_argument("--gamma-max", dest="gamma_max", type=float)
    p.add_argument("--startup-trials", dest="startup_trials", type=int)
    p.add_argument("--good-quantile", dest="good_quantile", type=float)
    p.add_argument("--candidates", type=int)
    p.add_argument("--runs-per-eval", dest="runs_per_eval", type=int)
    p.add_argument("--column-map", dest="column_map", nargs="*", metavar="KEY=COL")
    _add_discovery_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("full", help="discover, enhance, simulate, evaluate")
    p.add_argument("--log", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--runs", type=int)
    p.add_argument("--traces", type=int)
    p.add_argument("--tpe", action="store_true", default=None,
                   help="tune scale factors before enhancing")
    p.add_argument("--iterations", type=int)
    p.add_argument("--gamma-max", dest="gamma_max", type=float)
    p.add_argument("--startup-trials", dest="startup_trials", type=int)
    p.add_argument("--good-quantile", dest="good_quantile", type=float)
    p.add_argument("--candidates", type=int)
    p.add_argument("--runs-per-eval", dest="runs_per_eval", type=int)
    p.add_argument("--column-map", dest="column_map", nargs="*", metavar="KEY=COL")
    _add_discovery_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_full)

    p = sub.add_parser("rediscover", help="re-discover known timers from a simulation")
    p.add_argument("--model", required=True)
    p.add_argument("--traces", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--attribution", choices=sorted(ATTRIBUTION_CHOICES))
    p.add_argument("--lambda", dest="min_gap", type=float)
    p.add_argument("--delta", dest="outlier_threshold", type=float)
    p.add_argument("--zeta", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_rediscover)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings(args)
        return args.func(settings)
    except (SchemaError, LogValidationError, ModelValidationError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, OptimizationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
