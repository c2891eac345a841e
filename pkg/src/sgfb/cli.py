"""Batch command-line front end: config file in, report artifact out.

Subcommands: run, gen, inspect, gridsearch, fractions.  All reports are
byte-identical across runs with the same config and seed; wall-clock
timings go to stdout only.  Exit codes: 0 success, 1 runtime/numeric
failure, 2 configuration failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, replace
from typing import Optional

from . import __version__
from .dataio import Dataset, SynthConfig, generate_synthetic, load_dataset, save_dataset
from .errors import ConfigError, SgfbError
from .evaluate import (
    DEFAULT_FRACTIONS,
    DEFAULT_LAMBDA_GRID,
    DEFAULT_LAMBDA1_GRID,
    EvalConfig,
    fraction_experiment,
    grid_search,
    kfold_cv,
    results_from_cv,
)
from .filterbank import DEFAULT_BAND_EDGES, DEFAULT_ORDER
from .pipeline import PipelineConfig
from .report import FoldResult, RunResults, write_report


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    """Parse the line-oriented config: bracketed sections, key = value."""
    sections: dict[str, dict[str, str]] = {}
    current: Optional[dict[str, str]] = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"line {no}: empty section name")
            if name in sections:
                raise ConfigError(f"line {no}: duplicate section [{name}]")
            current = {}
            sections[name] = current
            continue
        if "=" in line:
            if current is None:
                raise ConfigError(f"line {no}: key outside any [section]")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ConfigError(f"line {no}: empty key")
            if key in current:
                raise ConfigError(f"line {no}: duplicate key {key!r}")
            current[key] = value
            continue
        raise ConfigError(f"line {no}: expected 'key = value' or '[section]'")
    return sections


class _Conf:
    """Typed access to parsed config sections, with named errors."""

    def __init__(self, sections):
        self.sections = sections

    def has(self, section, key):
        return key in self.sections.get(section, {})

    def raw(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def _convert(self, section, key, conv, value, kind):
        try:
            return conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"{section}.{key}: cannot parse {value!r} as {kind}: {exc}"
            ) from exc

    def get_int(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        return self._convert(section, key, int, v, "int")

    def get_float(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        return self._convert(section, key, float, v, "float")

    def get_str(self, section, key, default=None):
        v = self.raw(section, key)
        return default if v is None else v

    def get_floats(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        return tuple(
            self._convert(section, key, float, part.strip(), "float")
            for part in v.split(",")
            if part.strip()
        )

    def get_bands(self, section, key, default=None):
        v = self.raw(section, key)
        if v is None:
            return default
        edges = []
        for part in v.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if not sep:
                raise ConfigError(
                    f"{section}.{key}: band {part!r} must look like LOW-HIGH"
                )
            edges.append(
                (
                    self._convert(section, key, float, lo, "float"),
                    self._convert(section, key, float, hi, "float"),
                )
            )
        if not edges:
            raise ConfigError(f"{section}.{key}: empty band list")
        return tuple(edges)


@dataclass
class RunConfig:
    """Fully resolved run configuration (fail-fast validated)."""

    dataset_path: Optional[str]
    synth: Optional[SynthConfig]
    pipeline: PipelineConfig
    eval_cfg: EvalConfig
    seed: int
    out: Optional[str]
    threads: int

    def config_echo(self) -> dict[str, str]:
        p, e = self.pipeline, self.eval_cfg
        echo = {
            "tool_version": __version__,
            "seed": str(self.seed),
            "threads": str(self.threads),
        }
        if self.dataset_path is not None:
            echo["dataset"] = self.dataset_path
        if self.synth is not None:
            s = self.synth
            echo.update(
                {
                    "synth_channels": str(s.channels),
                    "synth_trials_per_class": str(s.trials_per_class),
                    "synth_fs_hz": repr(s.fs_hz),
                    "synth_duration_s": repr(s.duration_s),
                    "synth_erd_band_hz": f"{s.erd_band_hz[0]!r}-{s.erd_band_hz[1]!r}",
                    "synth_snr_db": repr(s.snr_db),
                    "synth_seed": str(s.seed),
                }
            )
        echo.update(
            {
                "bands": ",".join(f"{lo:g}-{hi:g}" for lo, hi in p.band_edges),
                "filter_order": str(p.filter_order),
                "window_s": f"{p.window[0]!r},{p.window[1]!r}",
                "m_pairs": str(p.m_pairs),
                "shrinkage": repr(p.shrinkage),
                "lambda": repr(p.lam),
                "lambda1": repr(p.lam1),
                "max_outer_iters": str(p.max_outer_iters),
                "tol": repr(p.tol),
                "classifier": p.classifier,
                "folds": str(e.folds),
                "repeats": str(e.repeats),
                "fractions": ",".join(repr(f) for f in e.fractions),
                "lambda_grid": ",".join(repr(v) for v in e.lambda_grid),
                "lambda1_grid": ",".join(repr(v) for v in e.lambda1_grid),
            }
        )
        return echo


def build_run_config(sections, args) -> RunConfig:
    conf = _Conf(sections)
    seed = args.seed if args.seed is not None else conf.get_int("run", "seed", 0)
    threads = (
        args.threads if args.threads is not None else conf.get_int("run", "threads", 1)
    )
    out = args.out if args.out is not None else conf.get_str("run", "out")

    dataset_path = conf.get_str("data", "path")
    synth = None
    if "synth" in sections:
        erd_low = conf.get_float("synth", "erd_low_hz", 8.0)
        erd_high = conf.get_float("synth", "erd_high_hz", 12.0)
        synth = SynthConfig(
            channels=conf.get_int("synth", "channels", 8),
            trials_per_class=conf.get_int("synth", "trials_per_class", 50),
            fs_hz=conf.get_float("synth", "fs_hz", 100.0),
            duration_s=conf.get_float("synth", "duration_s", 3.5),
            erd_band_hz=(erd_low, erd_high),
            snr_db=conf.get_float("synth", "snr_db", 20.0),
            seed=conf.get_int("synth", "seed", seed),
        )
        synth.validate()

    pipeline = PipelineConfig(
        band_edges=conf.get_bands("bands", "edges", DEFAULT_BAND_EDGES),
        filter_order=conf.get_int("bands", "order", DEFAULT_ORDER),
        window=_window(conf),
        m_pairs=conf.get_int("pipeline", "m_pairs", 16),
        shrinkage=conf.get_float("pipeline", "shrinkage", 1e-4),
        lam=conf.get_float("pipeline", "lambda", 0.3),
        lam1=conf.get_float("pipeline", "lambda1", 0.1),
        max_outer_iters=conf.get_int("pipeline", "max_outer_iters", 200),
        tol=conf.get_float("pipeline", "tol", 1e-8),
        classifier=conf.get_str("pipeline", "classifier", "sgfb"),
    )
    pipeline.validate()

    eval_cfg = EvalConfig(
        folds=conf.get_int("eval", "folds", 10),
        lambda_grid=conf.get_floats("eval", "lambda_grid", DEFAULT_LAMBDA_GRID),
        lambda1_grid=conf.get_floats("eval", "lambda1_grid", DEFAULT_LAMBDA1_GRID),
        fractions=conf.get_floats("eval", "fractions", DEFAULT_FRACTIONS),
        seed=seed,
        repeats=conf.get_int("eval", "repeats", 10),
        threads=threads,
    )
    eval_cfg.validate()

    return RunConfig(
        dataset_path=dataset_path,
        synth=synth,
        pipeline=pipeline,
        eval_cfg=eval_cfg,
        seed=seed,
        out=out,
        threads=threads,
    )


def _window(conf: _Conf) -> tuple[float, float]:
    w = conf.get_floats("pipeline", "window", (1.0, 2.0))
    if len(w) != 2:
        raise ConfigError(f"pipeline.window must be 'start,end', got {w}")
    return (w[0], w[1])


def _load_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("missing required flag --config PATH")
    try:
        with open(args.config, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
    return build_run_config(parse_config_text(text), args)


def _obtain_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset_path is not None:
        try:
            return load_dataset(cfg.dataset_path)
        except FileNotFoundError as exc:
            raise ConfigError(
                f"data.path: dataset file {cfg.dataset_path!r} does not exist"
            ) from exc
    if cfg.synth is not None:
        return generate_synthetic(cfg.synth)
    raise ConfigError(
        "no input data: set data.path or provide a [synth] section"
    )


def _require_out(cfg: RunConfig) -> str:
    if cfg.out is None:
        raise ConfigError("missing output path: set run.out or pass --out")
    return cfg.out


def _print_timings(timings: dict) -> None:
    for stage, secs in timings.items():
        print(f"timing {stage} = {secs:.3f}s")


def _print_summary(summary: dict) -> None:
    for key in ("acc_mean", "sen_mean", "spe_mean"):
        v = summary.get(key)
        print(f"{key} = " + ("undef" if v is None else f"{v:.4f}"))


def cmd_run(args) -> int:
    cfg = _load_config(args)
    dataset = _obtain_dataset(cfg)
    cfg.pipeline.validate(dataset)  # fail fast with the data in hand
    out_path = _require_out(cfg)
    t0 = time.perf_counter()
    outcome = kfold_cv(dataset, cfg.pipeline, cfg.eval_cfg)
    echo = cfg.config_echo()
    echo["m_pairs_effective"] = str(
        cfg.pipeline.effective_m_pairs(dataset.channels)
    )
    results = results_from_cv(echo, outcome, cfg.pipeline)
    write_report(results, out_path)
    _print_summary(outcome.summary)
    _print_timings(
        {**outcome.stage_seconds, "total": time.perf_counter() - t0}
    )
    print(f"report written to {out_path}")
    return 0


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    if cfg.synth is None:
        raise ConfigError("gen requires a [synth] section in the config")
    out = _require_out(cfg)
    dataset = generate_synthetic(cfg.synth)
    save_dataset(dataset, out)
    print(
        f"wrote {dataset.n_trials} trials x {dataset.channels} channels "
        f"at {dataset.fs_hz:g} Hz to {out}"
    )
    return 0


def cmd_inspect(args) -> int:
    dataset = load_dataset(args.dataset)
    labels = dataset.labels
    print(f"subject = {dataset.subject_id}")
    print(f"channels = {dataset.channels}")
    print(f"samples_per_trial = {dataset.trials[0].samples}")
    print(f"trials = {dataset.n_trials}")
    print(f"fs_hz = {dataset.fs_hz:g}")
    print(f"cue_offset_s = {dataset.cue_offset_s:g}")
    print(f"class_names = {dataset.class_names[0]},{dataset.class_names[1]}")
    print(
        f"class_counts = {int((labels == 1).sum())},{int((labels == 2).sum())}"
    )
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _load_config(args)
    dataset = _obtain_dataset(cfg)
    cfg.pipeline.validate(dataset)
    out_path = _require_out(cfg)
    outcome = grid_search(dataset, cfg.pipeline, cfg.eval_cfg)
    echo = cfg.config_echo()
    echo["m_pairs_effective"] = str(
        cfg.pipeline.effective_m_pairs(dataset.channels)
    )
    folds = tuple(
        FoldResult(index=k, metrics=m, lam=lam, lam1=lam1)
        for k, (m, (lam, lam1)) in enumerate(
            zip(outcome.fold_metrics, outcome.grid.fold_choices)
        )
    )
    results = RunResults(
        config=echo,
        folds=folds,
        summary=outcome.summary,
        grid=outcome.grid,
        flags={
            "var_floor_hits": outcome.flags.var_floor_hits,
            "zero_dictionary_columns": outcome.flags.zero_dictionary_columns,
            "classification_ties": outcome.flags.classification_ties,
        },
    )
    write_report(results, out_path)
    _print_summary(outcome.summary)
    print(
        f"best lambda = {outcome.grid.best_lam:g}, "
        f"best lambda1 = {outcome.grid.best_lam1:g}"
    )
    _print_timings(outcome.stage_seconds)
    print(f"report written to {out_path}")
    return 0


def cmd_fractions(args) -> int:
    cfg = _load_config(args)
    dataset = _obtain_dataset(cfg)
    cfg.pipeline.validate(dataset)
    out_path = _require_out(cfg)
    rows, flags, timings = fraction_experiment(dataset, cfg.pipeline, cfg.eval_cfg)
    echo = cfg.config_echo()
    echo["m_pairs_effective"] = str(
        cfg.pipeline.effective_m_pairs(dataset.channels)
    )
    results = RunResults(
        config=echo,
        fractions=rows,
        flags={
            "var_floor_hits": flags.var_floor_hits,
            "zero_dictionary_columns": flags.zero_dictionary_columns,
            "classification_ties": flags.classification_ties,
        },
    )
    write_report(results, out_path)
    for row in rows:
        acc = f"{row.acc_mean:.4f}" if row.acc_mean is not None else "undef"
        print(f"fraction {row.fraction:g}: acc_mean = {acc}")
    _print_timings(timings)
    print(f"report written to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgfb",
        description="Sparse group filter bank pipeline for motor-imagery EEG",
    )
    parser.add_argument("--config", metavar="PATH", help="run config file")
    parser.add_argument("--out", metavar="PATH", help="output artifact path")
    parser.add_argument(
        "--seed", type=int, metavar="N", help="override the config seed"
    )
    parser.add_argument(
        "--threads", type=int, metavar="N", help="worker threads (0 = auto)"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", help="k-fold evaluation with fixed weights")
    sub.add_parser("gen", help="generate a synthetic dataset to --out")
    p_inspect = sub.add_parser("inspect", help="print a dataset header summary")
    p_inspect.add_argument("dataset", help="dataset path")
    sub.add_parser("gridsearch", help="nested hyperparameter search")
    sub.add_parser("fractions", help="training-fraction experiment")
    return parser


_COMMANDS = {
    "run": cmd_run,
    "gen": cmd_gen,
    "inspect": cmd_inspect,
    "gridsearch": cmd_gridsearch,
    "fractions": cmd_fractions,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        _err(exc)
        return 2
    except SgfbError as exc:
        _err(exc)
        return 1


def _err(exc: Exception) -> None:
    message = " ".join(str(exc).split())
    print(f"sgfb: error: {type(exc).__name__}: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
