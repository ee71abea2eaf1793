"""Command-line entry point: ``fss-surrogate <command> [options]``.

Commands: gen-dataset, fit-pit, train, eval, predict, export-plot.

Configuration comes from a ``key = value`` file (``--config``) with
``--set key=value`` overrides; dedicated flags (``--seed``, ``--threads``)
win over both. Every output file starts with a ``# config_hash=... seed=...``
comment line.

Exit codes: 0 success, 1 invalid input, 2 configuration error,
3 data-format error, 4 optimization divergence, 5 missing file / I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from .dataset import Geometry, SweepRange, SweepSpec, TruthMap
from .errors import ConfigError, DivergedOptimizationError, FormatError, FssError, InvalidInputError, PipelineError
from .fitting import FitConfig, fit_stack, initial_guess
from .pipeline import (
    PipelineConfig,
    transmission_cost,
    evaluate,
    fit_samples,
    predict,
    read_stage1_cache,
    stage1_key,
    train_surrogate,
    write_stage1_cache,
)
from .pit import UnitCellSpec

EXIT_INVALID = 1
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_DIVERGED = 4
EXIT_IO = 5

GEOMETRY_FILE = "geometry.csv"
RESPONSE_FILE = "response.csv"
METADATA_FILE = "metadata.txt"
MODEL_FILE = "model.txt"
STAGE1_FILE = "stage1_cache.txt"

DEFAULTS = {
    "period_mm": "18",
    "slot_width_mm": "1",
    "eps_r": "1",
    "f_min_hz": "2e9",
    "f_max_hz": "16e9",
    "n_freq": "200",
    "n_screens": "2",
    "slot_min_mm": "9.5",
    "slot_max_mm": "15",
    "slot_count": "9",
    "dist_min_mm": "7",
    "dist_max_mm": "15",
    "dist_count": "9",
    "fidelity": "3",
    "perturbation": "0.03",
    "train_fraction": "0.8",
    "seed": "0",
    "threads": "0",
    "lr": "1e-2",
    "beta1": "0.9",
    "beta2": "0.999",
    "adam_eps": "1e-8",
    "single_steps": "2000",
    "stack_steps": "5000",
    "patience": "50",
    "rel_tol": "1e-6",
    "lr_drops": "2",
    "hidden": "64,64",
    "mlp_steps": "20000",
    "mlp_lr": "1e-3",
    "batch_size": "0",
    "fine_tune_steps": "0",
    "fine_tune_lr": "1e-4",
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    out: Path = Path(".")

    def get(self, key, kind=float):
        try:
            return kind(self.values[key])
        except KeyError:
            raise ConfigError(f"missing configuration key {key!r}") from None
        except ValueError:
            raise ConfigError(f"cannot parse {key} = {self.values[key]!r}") from None

    @property
    def seed(self) -> int:
        seed = self.get("seed", int)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return seed

    @property
    def threads(self) -> int:
        n = self.get("threads", int)
        return n if n > 0 else (os.cpu_count() or 1)

    def cell(self) -> UnitCellSpec:
        try:
            return UnitCellSpec(self.get("period_mm") * 1e-3, self.get("slot_width_mm") * 1e-3, self.get("eps_r"))
        except FssError as exc:
            raise ConfigError(str(exc)) from None

    def sweep(self) -> SweepSpec:
        n = self.get("n_screens", int)
        if n < 1:
            raise ConfigError("n_screens must be >= 1")
        try:
            slot = SweepRange(self.get("slot_min_mm") * 1e-3, self.get("slot_max_mm") * 1e-3, self.get("slot_count", int))
            dist = SweepRange(self.get("dist_min_mm") * 1e-3, self.get("dist_max_mm") * 1e-3, self.get("dist_count", int))
        except FssError as exc:
            raise ConfigError(str(exc)) from None
        if slot.min <= 0 or dist.min <= 0 or slot.max >= self.cell().period:
            raise ConfigError("sweep ranges must be positive and slots shorter than the period")
        return SweepSpec((slot,) * n, (dist,) * (n - 1))

    def pipeline(self) -> PipelineConfig:
        try:
            hidden = tuple(int(h) for h in self.values["hidden"].split(",") if h.strip())
        except ValueError:
            raise ConfigError(f"cannot parse hidden = {self.values['hidden']!r}") from None
        fit = FitConfig(
            single_steps=self.get("single_steps", int),
            stack_steps=self.get("stack_steps", int),
            lr=self.get("lr"),
            beta1=self.get("beta1"),
            beta2=self.get("beta2"),
            eps=self.get("adam_eps"),
            patience=self.get("patience", int),
            rel_tol=self.get("rel_tol"),
            lr_drops=self.get("lr_drops", int),
        )
        cfg = PipelineConfig(
            cell=self.cell(),
            f_min=self.get("f_min_hz"),
            f_max=self.get("f_max_hz"),
            n_freq=self.get("n_freq", int),
            fit=fit,
            fidelity=self.get("fidelity", int),
            truth_map=TruthMap(perturbation=self.get("perturbation")),
            hidden=hidden,
            mlp_steps=self.get("mlp_steps", int),
            mlp_lr=self.get("mlp_lr"),
            batch_size=self.get("batch_size", int),
            train_fraction=self.get("train_fraction"),
            seed=self.seed,
            threads=self.threads,
            fine_tune_steps=self.get("fine_tune_steps", int),
            fine_tune_lr=self.get("fine_tune_lr"),
        )
        if not (cfg.f_min > 0 and cfg.f_max > cfg.f_min and cfg.n_freq >= 2):
            raise ConfigError("frequency band needs 0 < f_min < f_max and n_freq >= 2")
        if not 0 < cfg.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if cfg.fidelity < 1:
            raise ConfigError("fidelity must be >= 1")
        if not all(h > 0 for h in hidden):
            raise ConfigError("hidden layer sizes must be positive")
        if not (fit.lr > 0 and 0 <= fit.beta1 < 1 and 0 <= fit.beta2 < 1 and fit.eps > 0 and cfg.mlp_lr > 0):
            raise ConfigError("invalid optimizer hyperparameters")
        try:
            cfg.grid
        except FssError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def digest(self) -> str:
        # threads does not change results, so it stays out of the hash
        self.pipeline()
        items = sorted((k, v) for k, v in self.values.items() if k != "threads")
        return hashlib.sha256(repr(items).encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"config_hash={self.digest()} seed={self.seed}"

    def metadata(self) -> dict:
        cfg = self.pipeline()
        meta = {
            "period_mm": repr(cfg.cell.period * 1e3),
            "slot_width_mm": repr(cfg.cell.slot_width * 1e3),
            "eps_r": repr(cfg.cell.eps_r),
            "band": f"{cfg.f_min!r} {cfg.f_max!r}",
            "n_freq": str(cfg.n_freq),
            "oracle_fidelity": str(cfg.fidelity),
        }
        meta.update(cfg.truth_map.as_metadata())
        meta["seed"] = str(self.seed)
        return meta


def read_config_file(path) -> dict:
    try:
        raw = ds.read_metadata(path)
    except FormatError as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return raw


def build_config(args) -> RunConfig:
    values = dict(DEFAULTS)
    if args.config:
        values.update(read_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = (p.strip() for p in item.split("=", 1))
        if k not in DEFAULTS:
            raise ConfigError(f"unknown configuration key {k!r}")
        values[k] = v
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.threads is not None:
        values["threads"] = str(args.threads)
    run = RunConfig(values, Path(args.out))
    run.pipeline()
    return run


def parse_geometry(text: str, n_screens: int | None = None) -> Geometry:
    """``"l1,l2,...;d1,..."`` in millimetres."""
    try:
        parts = text.split(";")
        lengths = [float(x) * 1e-3 for x in parts[0].split(",") if x.strip()]
        dists = [float(x) * 1e-3 for x in parts[1].split(",") if x.strip()] if len(parts) > 1 else []
        geom = Geometry(tuple(lengths), tuple(dists))
    except (ValueError, FssError) as exc:
        raise ConfigError(f"bad geometry {text!r}: {exc}") from None
    if n_screens is not None and geom.n_screens != n_screens:
        raise ConfigError(f"geometry has {geom.n_screens} screens, expected {n_screens}")
    return geom


# ---------------------------------------------------------------- helpers


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_dataset(run: RunConfig):
    out = run.out
    for name in (GEOMETRY_FILE, RESPONSE_FILE, METADATA_FILE):
        if not (out / name).exists():
            raise FileNotFoundError(f"{out / name} not found; run gen-dataset first")
    meta = ds.read_metadata(out / METADATA_FILE)
    expected = run.metadata()
    for key in ("period_mm", "slot_width_mm", "eps_r", "band", "n_freq", "oracle_fidelity", "truth_perturbation"):
        if meta.get(key) != expected[key]:
            raise ConfigError(f"dataset metadata {key} = {meta.get(key)!r} differs from configuration {expected[key]!r}")
    samples = ds.read_dataset(out / GEOMETRY_FILE, out / RESPONSE_FILE)
    grid = run.pipeline().grid
    for s in samples[:1]:
        if s.freqs.shape != grid.points.shape or np.any(s.freqs != grid.points):
            raise FormatError("dataset frequency grid differs from the configured band", out / RESPONSE_FILE)
    return samples


def _load_model(run: RunConfig, path):
    path = Path(path) if path else run.out / MODEL_FILE
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run train first")
    return ds.read_model(path)


def _split(run: RunConfig, samples):
    return ds.split(samples, run.pipeline().train_fraction, run.seed)


def to_db(s21) -> np.ndarray:
    mag = np.abs(np.asarray(s21))
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(mag)


def plot_csv(freqs, model_s21, goal_s21, header: str) -> str:
    lines = [f"# {header}", "freq_hz,s21_model_db,s21_model_deg,s21_goal_db,s21_goal_deg"]
    m_db, g_db = to_db(model_s21), to_db(goal_s21)
    m_deg, g_deg = np.degrees(np.angle(model_s21)), np.degrees(np.angle(goal_s21))
    for row in zip(freqs, m_db, m_deg, g_db, g_deg):
        lines.append(",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands


def cmd_gen_dataset(run: RunConfig, args) -> list[Path]:
    cfg = run.pipeline()
    geoms = ds.generate_sweep(run.sweep())
    grid = cfg.grid
    samples = [ds.synth_oracle(g, cfg.cell, grid, cfg.fidelity, cfg.truth_map, i) for i, g in enumerate(geoms)]
    run.out.mkdir(parents=True, exist_ok=True)
    header = run.header()
    paths = [run.out / GEOMETRY_FILE, run.out / RESPONSE_FILE, run.out / METADATA_FILE]
    ds.write_dataset(samples, paths[0], paths[1], header, n_screens=run.sweep().n_screens)
    ds.write_metadata(paths[2], run.metadata(), header)
    print(f"wrote {len(samples)} samples x {len(grid)} frequencies to {run.out}")
    return paths


def cmd_fit_pit(run: RunConfig, args) -> Path:
    cfg = run.pipeline()
    grid = cfg.grid
    provider = ds.screen_oracle(cfg.cell, grid, cfg.fidelity, cfg.truth_map)
    if args.geometry:
        geom = parse_geometry(args.geometry)
        target = ds.synth_oracle(geom, cfg.cell, grid, cfg.fidelity, cfg.truth_map).s21_goal
        label = "geometry"
    else:
        samples = {s.id: s for s in _load_dataset(run)}
        if args.sample_id not in samples:
            raise InvalidInputError(f"unknown sample id {args.sample_id}")
        geom = samples[args.sample_id].geometry
        target = samples[args.sample_id].s21_goal
        label = f"sample{args.sample_id}"
    init = initial_guess(geom, provider, cfg.cell, grid, config=cfg.fit)
    report = fit_stack(target, init, grid, cfg.fit)
    path = Path(args.report) if args.report else run.out / f"fit_report_{label}.csv"
    _write(path, report.to_csv(run.header()))
    print(f"initial cost {report.initial_cost:.6g} -> final cost {report.final_cost:.6g} ({report.iterations} iterations); wrote {path}")
    return path


def cmd_train(run: RunConfig, args) -> Path:
    cfg = run.pipeline()
    samples = _load_dataset(run)
    train, _ = _split(run, samples)
    key = stage1_key(train, cfg)
    n = train[0].geometry.n_screens
    cached = read_stage1_cache(run.out / STAGE1_FILE, key, cfg.cell, n)
    if cached is not None and all(s.id in cached for s in train):
        reports = [cached[s.id] for s in train]
        print(f"stage 1: reusing {len(reports)} cached circuit fits")
    else:
        provider = ds.screen_oracle(cfg.cell, cfg.grid, cfg.fidelity, cfg.truth_map)
        reports = fit_samples(train, cfg.cell, cfg.grid, provider, cfg.fit, cfg.threads)
        write_stage1_cache(run.out / STAGE1_FILE, reports, [s.id for s in train], key)
        print(f"stage 1: fitted {len(reports)} circuits")
    model, reports, mse = train_surrogate(train, cfg, reports=reports)
    path = run.out / MODEL_FILE
    ds.write_model(model, path, run.header())
    print(f"stage 2: log-parameter MSE {mse:.6g}; wrote {path}")
    return path


def cmd_eval(run: RunConfig, args) -> Path:
    cfg = run.pipeline()
    model = _load_model(run, args.model)
    _, test = _split(run, _load_dataset(run))
    summary = evaluate(model, test, cfg.grid, cfg.cell)
    path = Path(args.report) if args.report else run.out / "eval.csv"
    _write(path, summary.to_csv(run.header()))
    print(f"test cost mean {summary.mean:.6g} std {summary.std:.6g} over {len(test)} samples; wrote {path}")
    return path


def cmd_predict(run: RunConfig, args) -> Path:
    cfg = run.pipeline()
    model = _load_model(run, args.model)
    geom = parse_geometry(args.geometry)
    s21 = predict(model, geom, cfg.grid, cfg.cell)
    lines = [f"# {run.header()}", "freq_hz,s21_re,s21_im"]
    lines += [f"{f!r},{float(v.real)!r},{float(v.imag)!r}" for f, v in zip(cfg.grid.points.tolist(), s21)]
    path = Path(args.report) if args.report else run.out / "predict.csv"
    _write(path, "\n".join(lines) + "\n")
    print(f"wrote {path}")
    return path


def cmd_export_plot(run: RunConfig, args) -> list[Path]:
    cfg = run.pipeline()
    model = _load_model(run, args.model)
    samples = _load_dataset(run)
    by_id = {s.id: s for s in samples}
    ids = list(args.ids or [])
    if args.extremes:
        _, test = _split(run, samples)
        summary = evaluate(model, test, cfg.grid, cfg.cell)
        ids += [summary.min_id, summary.max_id]
    if not ids:
        raise ConfigError("export-plot needs --ids and/or --extremes")
    paths = []
    for sid in ids:
        if sid not in by_id:
            raise InvalidInputError(f"sample id {sid} out of range")
        s = by_id[sid]
        model_s21 = predict(model, s.geometry, cfg.grid, cfg.cell)
        path = run.out / f"plot_{sid}.csv"
        _write(path, plot_csv(s.freqs, model_s21, s.s21_goal, f"{run.header()} id={sid} cost={transmission_cost(model_s21, s.s21_goal)!r}"))
        paths.append(path)
    print("wrote " + ", ".join(str(p) for p in paths))
    return paths


COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "fit-pit": cmd_fit_pit,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "export-plot": cmd_export_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker processes for circuit fits (default: all cores)")
    common.add_argument("--out", default=".", help="working directory for dataset, model and reports")

    parser = argparse.ArgumentParser(prog="fss-surrogate", description="Equivalent-circuit surrogate for stacked FSS")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-dataset", parents=[common], help="sweep geometries and label them with the synthetic oracle")
    p = sub.add_parser("fit-pit", parents=[common], help="fit the circuit of one geometry and report before/after values")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sample-id", type=int)
    g.add_argument("--geometry", help="'l1,l2,...;d1,...' in mm")
    p.add_argument("--report", help="output CSV path")
    sub.add_parser("train", parents=[common], help="circuit fits on the train split, then MLP regression")
    helps = {
        "eval": "cost of the trained surrogate on the test split",
        "predict": "surrogate S21 of one geometry",
        "export-plot": "model vs goal curves (dB and phase) for selected samples",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--model", help="model file (default: <out>/model.txt)")
        if name != "export-plot":
            p.add_argument("--report", help="output CSV path")
    sub.choices["predict"].add_argument("--geometry", required=True, help="'l1,l2,...;d1,...' in mm")
    sub.choices["export-plot"].add_argument("--ids", type=int, nargs="+")
    sub.choices["export-plot"].add_argument("--extremes", action="store_true", help="add the lowest- and highest-cost test samples")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = build_config(args)
        COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (DivergedOptimizationError, PipelineError) as exc:
        print(f"optimization diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return 0


if __name__ == "__main__":
    sys.exit(main())
