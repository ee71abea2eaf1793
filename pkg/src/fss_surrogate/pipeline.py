"""Two-stage surrogate workflow: per-sample circuit fits, then MLP regression."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import mlp as mlp_mod
from .dataset import Geometry, LabeledSample, TruthMap, screen_oracle
from .errors import DivergedOptimizationError, InvalidInputError, PipelineError
from .fitting import CANONICAL_SEED, FitConfig, FitReport, fit_single_screen, fit_stack
from .mlp import MlpModel
from .pit import FrequencyGrid, StackCircuit, StackEvaluator, UnitCellSpec, n_parameters, stack_s21


@dataclass(frozen=True)
class PipelineConfig:
    cell: UnitCellSpec = field(default_factory=UnitCellSpec)
    f_min: float = 2e9
    f_max: float = 16e9
    n_freq: int = 200
    fit: FitConfig = field(default_factory=FitConfig)
    fidelity: int = 3
    truth_map: TruthMap = field(default_factory=TruthMap)
    hidden: tuple[int, ...] = (64, 64)
    mlp_steps: int = 20000
    mlp_lr: float = 1e-3
    batch_size: int = 0  # 0 = full batch
    train_fraction: float = 0.8
    seed: int = 0
    threads: int = 1
    fine_tune_steps: int = 0
    fine_tune_lr: float = 1e-4

    @property
    def grid(self) -> FrequencyGrid:
        grid = FrequencyGrid.uniform(self.f_min, self.f_max, self.n_freq)
        grid.check(self.cell)
        return grid

    def stage1_key(self) -> dict:
        return {
            "cell": asdict(self.cell),
            "band": [self.f_min, self.f_max, self.n_freq],
            "fit": asdict(self.fit),
            "fidelity": self.fidelity,
            "truth_map": asdict(self.truth_map),
        }

    def digest(self) -> str:
        return _digest(json.dumps(_jsonable(asdict(self)), sort_keys=True))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def dataset_digest(samples: Sequence[LabeledSample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(str(s.id).encode())
        h.update(s.geometry.to_vector().tobytes())
        h.update(s.freqs.tobytes())
        h.update(s.s21_goal.tobytes())
    return h.hexdigest()[:16]


def transmission_cost(model_s21, goal_s21) -> float:
    """Mean complex-modulus deviation over all samples and frequencies."""
    a = np.asarray(model_s21, dtype=complex)
    b = np.asarray(goal_s21, dtype=complex)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InvalidInputError("cost of an empty set is undefined")
    return float(np.mean(np.abs(a - b)))


@dataclass(frozen=True)
class EvalSummary:
    ids: list[int]
    costs: list[float]
    mean: float
    std: float
    min_index: int
    max_index: int
    std_convention: str = "population"

    @property
    def min_id(self) -> int:
        return self.ids[self.min_index]

    @property
    def max_id(self) -> int:
        return self.ids[self.max_index]

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "cost"])
        for i, c in zip(self.ids, self.costs):
            w.writerow([i, repr(c)])
        buf.write(
            f"# summary n={len(self.costs)} mean={self.mean!r} std={self.std!r} "
            f"std_convention={self.std_convention} min_id={self.min_id} max_id={self.max_id}\n"
        )
        return buf.getvalue()


# ---------------------------------------------------------------- stage 1


def _fit_screen_job(args):
    target, cell, points, cfg = args
    return fit_single_screen(target, cell, FrequencyGrid(points), CANONICAL_SEED, cfg)


def _fit_stack_job(args):
    sid, target, init, points, cfg = args
    try:
        return fit_stack(target, init, FrequencyGrid(points), cfg)
    except DivergedOptimizationError as exc:
        raise PipelineError(f"fit of sample {sid} diverged: {exc}", sid) from exc


def _run_jobs(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def fit_samples(
    samples: Sequence[LabeledSample],
    cell: UnitCellSpec,
    grid: FrequencyGrid,
    screen_provider: Callable[[float], np.ndarray],
    config: FitConfig = FitConfig(),
    threads: int = 1,
) -> list[FitReport]:
    """Initial guess plus full-stack fit for every sample.

    Isolated-screen fits depend only on slot length, so each distinct length
    is fitted once and shared.
    """
    lengths = sorted({length for s in samples for length in s.geometry.slot_lengths})
    screen_jobs = [(screen_provider(length), cell, grid.points, config) for length in lengths]
    try:
        fitted = dict(zip(lengths, _run_jobs(_fit_screen_job, screen_jobs, threads)))
    except DivergedOptimizationError as exc:
        raise PipelineError(f"isolated-screen fit diverged: {exc}") from exc
    jobs = []
    for s in samples:
        g = s.geometry
        init = StackCircuit(tuple(fitted[length] for length in g.slot_lengths), g.distances, cell)
        jobs.append((s.id, s.s21_goal, init, grid.points, config))
    return _run_jobs(_fit_stack_job, jobs, threads)


def write_stage1_cache(path, reports: Sequence[FitReport], ids: Sequence[int], key: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# stage1 key={key}\n")
        for sid, rep in zip(ids, reports):
            vals = " ".join(repr(float(x)) for x in np.concatenate([rep.initial_params.to_vector(), rep.final_params.to_vector()]))
            fh.write(f"{sid} {rep.initial_cost!r} {rep.final_cost!r} {rep.iterations} {vals}\n")


def read_stage1_cache(path, key: str, cell: UnitCellSpec, n_screens: int) -> dict[int, FitReport] | None:
    """Cached reports by sample id, or ``None`` when the key does not match."""
    path = Path(path)
    if not path.exists():
        return None
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# stage1 key={key}":
            return None
        out = {}
        n_p = n_parameters(n_screens)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            vals = np.array([float(x) for x in parts[4:]])
            if vals.size != 2 * n_p:
                return None
            out[int(parts[0])] = FitReport(
                StackCircuit.from_vector(vals[:n_p], n_screens, cell),
                StackCircuit.from_vector(vals[n_p:], n_screens, cell),
                float(parts[1]),
                float(parts[2]),
                int(parts[3]),
            )
    return out


def stage1_key(samples: Sequence[LabeledSample], config: PipelineConfig) -> str:
    return _digest(dataset_digest(samples) + json.dumps(_jsonable(config.stage1_key()), sort_keys=True))


# ---------------------------------------------------------------- stage 2


def _check_consistent(samples: Sequence[LabeledSample]) -> int:
    if not samples:
        raise InvalidInputError("empty training set")
    n = samples[0].geometry.n_screens
    if any(s.geometry.n_screens != n for s in samples):
        raise InvalidInputError("all samples must have the same number of screens")
    return n


def _input_ranges(x: np.ndarray):
    lo, hi = x.min(axis=0), x.max(axis=0)
    flat = hi <= lo
    lo = np.where(flat, lo - 1e-4, lo)
    hi = np.where(flat, hi + 1e-4, hi)
    return lo, hi


def train_surrogate(
    train_set: Sequence[LabeledSample],
    config: PipelineConfig = PipelineConfig(),
    screen_provider: Callable[[float], np.ndarray] | None = None,
    reports: Sequence[FitReport] | None = None,
):
    """Stage 1 (circuit fits, skipped when ``reports`` is given) then stage 2 (MLP).

    Returns ``(model, reports, train_mse)``.
    """
    n = _check_consistent(train_set)
    grid = config.grid
    if reports is None:
        if screen_provider is None:
            screen_provider = screen_oracle(config.cell, grid, config.fidelity, config.truth_map)
        reports = fit_samples(train_set, config.cell, grid, screen_provider, config.fit, config.threads)
    x = np.array([s.geometry.to_vector() for s in train_set])
    y = np.log(np.array([r.final_params.to_vector() for r in reports]))
    lo, hi = _input_ranges(x)
    sizes = [2 * n - 1, *config.hidden, n_parameters(n)]
    model = mlp_mod.init_mlp(sizes, lo, hi, y.mean(axis=0), seed=config.seed)
    model, mse = mlp_mod.train_regression(
        model, x, y, steps=config.mlp_steps, lr=config.mlp_lr, batch_size=config.batch_size or None, seed=config.seed
    )
    if config.fine_tune_steps:
        model = fine_tune(model, train_set, config.cell, grid, config.fine_tune_steps, config.fine_tune_lr)
    return model, list(reports), mse


def fine_tune(model: MlpModel, samples: Sequence[LabeledSample], cell: UnitCellSpec, grid, steps: int, lr: float = 1e-4) -> MlpModel:
    """Joint training of the network through the circuit on the S21 cost."""
    from .optim import AdamState, adam_step

    n = _check_consistent(samples)
    ev = StackEvaluator(cell, grid, n)
    x = np.array([s.geometry.to_vector() for s in samples])
    goals = np.array([s.s21_goal for s in samples])
    flat = model.get_flat()
    state = AdamState.fresh(flat.size, lr=lr)
    scale = 1.0 / goals.size
    for _ in range(steps):
        log_p, cache = mlp_mod.forward_log(model, x)
        params = np.exp(log_p)
        grad_log = np.empty_like(log_p)
        for i, p in enumerate(params):
            s21, jac = ev.s21_jacobian(p)
            err = s21 - goals[i]
            mag = np.abs(err)
            w = np.divide(err, mag, out=np.zeros_like(err), where=mag > 0)
            grad_log[i] = np.real(jac @ np.conj(w)) * p * scale
        state, flat = adam_step(state, flat, mlp_mod.backward_log(model, cache, grad_log))
        model.set_flat(flat)
    return model


# ---------------------------------------------------------------- inference


def predict_circuit(model: MlpModel, geometry: Geometry, cell: UnitCellSpec) -> StackCircuit:
    return StackCircuit.from_vector(mlp_mod.mlp_forward(model, geometry), geometry.n_screens, cell)


def predict(model: MlpModel, geometry: Geometry, grid, cell: UnitCellSpec = UnitCellSpec()) -> np.ndarray:
    """Surrogate S21 of ``geometry`` on ``grid``."""
    if 2 * geometry.n_screens - 1 != model.n_inputs:
        raise InvalidInputError("geometry dimension does not match the model")
    return stack_s21(predict_circuit(model, geometry, cell), grid)


def evaluate(model: MlpModel, test_set: Sequence[LabeledSample], grid, cell: UnitCellSpec = UnitCellSpec()) -> EvalSummary:
    if not test_set:
        raise InvalidInputError("empty test set")
    costs = [transmission_cost(predict(model, s.geometry, grid, cell), s.s21_goal) for s in test_set]
    arr = np.array(costs)
    return EvalSummary(
        ids=[s.id for s in test_set],
        costs=costs,
        mean=float(arr.mean()),
        std=float(arr.std()),
        min_index=int(arr.argmin()),
        max_index=int(arr.argmax()),
    )
