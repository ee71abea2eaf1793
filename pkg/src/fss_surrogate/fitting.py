"""Circuit-parameter fitting against target S21 curves.

Stage one of surrogate training: every screen of a geometry is fitted alone to
get a starting circuit, then the whole stack (distances included) is refined
against the target transmission of the complete structure.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

from .errors import DivergedOptimizationError, InvalidInputError
from .optim import AdamState, adam_step
from .pit import FrequencyGrid, ScreenParams, StackCircuit, StackEvaluator, UnitCellSpec

# relative log-sensitivity below which the least-squares polish leaves a parameter alone
SENSITIVITY_FLOOR = 1e-3

CANONICAL_SEED = ScreenParams(l0=1.5e-9, c0=3e-13, alpha_l=(2e-7,), alpha_c=(4e-11,))


@dataclass(frozen=True)
class FitConfig:
    single_steps: int = 2000
    stack_steps: int = 5000
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 50
    rel_tol: float = 1e-6
    lr_drops: int = 2
    lr_drop_factor: float = 0.1
    polish_steps: int = 100  # least-squares evaluations after Adam; 0 disables


def mean_abs_deviation(model_s21, target_s21) -> float:
    return float(np.mean(np.abs(np.asarray(model_s21) - np.asarray(target_s21))))


@dataclass(frozen=True)
class FitReport:
    initial_params: StackCircuit
    final_params: StackCircuit
    initial_cost: float
    final_cost: float
    iterations: int  # Adam updates plus least-squares evaluations

    @property
    def names(self) -> list[str]:
        return self.initial_params.parameter_names()

    @property
    def variations(self) -> np.ndarray:
        """Percent change per parameter, ``100 * (final - initial) / initial``."""
        a = self.initial_params.to_vector()
        b = self.final_params.to_vector()
        return 100.0 * (b - a) / a

    def table_rows(self) -> list[tuple[str, float, float, float]]:
        """Rows of (name, initial, final, variation %); distances are reported in mm."""
        rows = []
        n_d = len(self.initial_params.distances)
        a = self.initial_params.to_vector()
        b = self.final_params.to_vector()
        for k, (name, x, y, var) in enumerate(zip(self.names, a, b, self.variations)):
            if k >= len(a) - n_d:
                rows.append((f"{name} (mm)", x * 1e3, y * 1e3, var))
            elif name.startswith("L0"):
                rows.append((f"{name} (H)", x, y, var))
            elif name.startswith("C0"):
                rows.append((f"{name} (F)", x, y, var))
            else:
                rows.append((name, x, y, var))
        return rows

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write(f"# initial_cost={self.initial_cost!r} final_cost={self.final_cost!r} iterations={self.iterations}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Parameter", "Initial", "Final", "Variation(%)"])
        for name, x, y, var in self.table_rows():
            w.writerow([name, f"{x:.6e}", f"{y:.6e}", f"{var:+.2f}"])
        return buf.getvalue()


def _adam_fit(evaluator: StackEvaluator, start, target, steps: int, cfg: FitConfig):
    """Minimize mean |s21 - target| in log-parameter space.

    A plateau (best cost improving by less than ``rel_tol`` relative over
    ``patience`` steps) restarts Adam from the best iterate with the learning
    rate scaled by ``lr_drop_factor``; after ``lr_drops`` restarts a plateau
    ends the fit. ``steps`` bounds the total number of updates.

    Returns ``(best_params, initial_cost, best_cost, iterations)``.
    """
    target = np.asarray(target, dtype=complex)
    if target.shape != evaluator.freqs.shape:
        raise InvalidInputError("target and grid lengths differ")
    x = np.log(np.asarray(start, dtype=float))
    lr = cfg.lr
    drops_left = cfg.lr_drops
    state = AdamState.fresh(x.size, lr, cfg.beta1, cfg.beta2, cfg.eps)
    n_f = target.size
    best_x, best_cost, initial_cost = x, np.inf, None
    history = []
    since_restart = 0
    it = 0
    while True:
        theta = np.exp(x)
        s21, jac = evaluator.s21_jacobian(theta)
        err = s21 - target
        mag = np.abs(err)
        cost = float(mag.mean())
        if not np.isfinite(cost):
            raise DivergedOptimizationError(f"cost became non-finite after {it} iterations")
        if initial_cost is None:
            initial_cost = cost
        if cost < best_cost:
            best_cost, best_x = cost, x
        history.append(best_cost)
        if it >= steps or best_cost == 0.0:
            break
        if since_restart >= cfg.patience:
            old = history[it - cfg.patience]
            if old - best_cost < cfg.rel_tol * old:
                if drops_left == 0:
                    break
                drops_left -= 1
                lr *= cfg.lr_drop_factor
                state = AdamState.fresh(x.size, lr, cfg.beta1, cfg.beta2, cfg.eps)
                x = best_x
                since_restart = 0
                continue
        w = np.divide(err, mag, out=np.zeros_like(err), where=mag > 0)
        grad = np.real(jac @ np.conj(w)) * theta / n_f
        state, x = adam_step(state, x, grad)
        it += 1
        since_restart += 1
    return np.exp(best_x), initial_cost, best_cost, it


def _polish(evaluator: StackEvaluator, params, target, cost: float, max_evals: int):
    """Trust-region least squares on the complex residual, kept only if it lowers ``cost``.

    Adam's diagonal scaling crawls along valleys that couple several
    parameters (near-identical screens trading L0 against C0); a Gauss-Newton
    step crosses them directly. Returns ``(params, cost, evaluations)``.
    """
    if max_evals <= 0 or cost == 0.0:
        return params, cost, 0

    base = np.log(np.asarray(params, dtype=float))

    def split(z):
        return np.concatenate([z.real, z.imag])

    def log_jacobian(x):
        theta = np.exp(x)
        _, jac = evaluator.s21_jacobian(theta)
        return split((jac * theta[:, None]).T)

    # parameters the curve barely sees would only drift along flat directions
    norms = np.linalg.norm(log_jacobian(base), axis=0)
    free = norms > SENSITIVITY_FLOOR * norms.max()

    def full(x):
        out = base.copy()
        out[free] = x
        return out

    def residual(x):
        return split(evaluator.s21(np.exp(full(x))) - target)

    def jacobian(x):
        return log_jacobian(full(x))[:, free]

    try:
        with np.errstate(all="ignore"):
            sol = least_squares(residual, base[free], jac=jacobian, method="trf", max_nfev=max_evals)
    except (ValueError, np.linalg.LinAlgError):
        return params, cost, 0
    sol.x = full(sol.x)
    cand = np.exp(sol.x)
    if not np.all(np.isfinite(cand)) or not np.all(cand > 0):
        return params, cost, sol.nfev
    cand_cost = mean_abs_deviation(evaluator.s21(cand), target)
    if np.isfinite(cand_cost) and cand_cost < cost:
        return cand, cand_cost, sol.nfev
    return params, cost, sol.nfev


def _fit(evaluator: StackEvaluator, start, target, steps: int, cfg: FitConfig):
    best, c0, c1, iters = _adam_fit(evaluator, start, target, steps, cfg)
    best, c1, evals = _polish(evaluator, best, np.asarray(target, dtype=complex), c1, cfg.polish_steps)
    return best, c0, c1, iters + evals


def fit_single_screen(
    target_s21,
    cell: UnitCellSpec,
    grid,
    init: ScreenParams = CANONICAL_SEED,
    config: FitConfig = FitConfig(),
) -> ScreenParams:
    """Fit one isolated screen to its transmission curve."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    ev = StackEvaluator(cell, grid, 1, init.n_te, init.n_tm)
    best, _, _, _ = _fit(ev, init.to_vector(), target_s21, config.single_steps, config)
    return ScreenParams.from_vector(best, init.n_te, init.n_tm)


def initial_guess(
    geometry,
    oracle: Callable[[float], np.ndarray],
    cell: UnitCellSpec,
    grid,
    seed: ScreenParams = CANONICAL_SEED,
    config: FitConfig = FitConfig(),
    screen_cache: dict | None = None,
) -> StackCircuit:
    """Per-screen fits with distances set to the geometric separations.

    ``oracle(slot_length)`` returns the isolated-screen S21 on ``grid``.
    ``screen_cache`` maps slot lengths to already fitted screens.
    """
    screens = []
    for length in geometry.slot_lengths:
        if screen_cache is not None and length in screen_cache:
            screens.append(screen_cache[length])
            continue
        fitted = fit_single_screen(oracle(length), cell, grid, seed, config)
        if screen_cache is not None:
            screen_cache[length] = fitted
        screens.append(fitted)
    return StackCircuit(tuple(screens), tuple(geometry.distances), cell)


def fit_stack(target_s21, init: StackCircuit, grid, config: FitConfig = FitConfig()) -> FitReport:
    """Refine every circuit parameter of a stack, distances included."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    ev = StackEvaluator(init.cell, grid, init.n_screens, init.n_te, init.n_tm)
    best, c0, c1, iters = _fit(ev, init.to_vector(), target_s21, config.stack_steps, config)
    final = StackCircuit.from_vector(best, init.n_screens, init.cell, init.n_te, init.n_tm)
    return FitReport(init, final, c0, c1, iters)
