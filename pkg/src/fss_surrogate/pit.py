"""Equivalent circuit of a stack of perforated screens.

Each screen is a shunt admittance built from a lumped inductor, a lumped
capacitor and weighted evanescent Floquet-mode admittances; consecutive screens
are joined by vacuum (or dielectric) line sections. Transmission is taken
between Floquet ports with the medium's wave impedance as reference.

Circuit parameter vectors use one frozen layout::

    [L0_1, C0_1, aL_1.., aC_1.., L0_2, ..., L0_N, C0_N, aL_N.., aC_N.., d_1 .. d_{N-1}]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import netalg
from .errors import CutoffSingularityError, InvalidInputError
from .netalg import C0, EPS0, ETA0, MU0

CUTOFF_GUARD = 1e-6


@dataclass(frozen=True)
class UnitCellSpec:
    period: float = 18e-3
    slot_width: float = 1e-3
    eps_r: float = 1.0

    def __post_init__(self):
        if not (self.period > 0 and self.slot_width > 0 and self.slot_width < self.period):
            raise InvalidInputError("unit cell needs 0 < slot_width < period")
        if not self.eps_r >= 1:
            raise InvalidInputError("eps_r must be >= 1")

    def cutoff(self, k: int = 1) -> float:
        """Cutoff of harmonic ``k`` (the grating-lobe onset for k = 1)."""
        return k * C0 / (self.period * math.sqrt(self.eps_r))

    @property
    def z_ref(self) -> float:
        return ETA0 / math.sqrt(self.eps_r)


@dataclass(frozen=True)
class ScreenParams:
    l0: float
    c0: float
    alpha_l: tuple[float, ...]
    alpha_c: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha_l", tuple(float(x) for x in np.atleast_1d(self.alpha_l)))
        object.__setattr__(self, "alpha_c", tuple(float(x) for x in np.atleast_1d(self.alpha_c)))
        values = (self.l0, self.c0, *self.alpha_l, *self.alpha_c)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise InvalidInputError(f"screen parameters must be finite and > 0: {values}")
        if not self.alpha_l or not self.alpha_c:
            raise InvalidInputError("at least one TE and one TM harmonic weight required")

    @property
    def n_te(self) -> int:
        return len(self.alpha_l)

    @property
    def n_tm(self) -> int:
        return len(self.alpha_c)

    def to_vector(self) -> np.ndarray:
        return np.array([self.l0, self.c0, *self.alpha_l, *self.alpha_c])

    @classmethod
    def from_vector(cls, vec, n_te: int = 1, n_tm: int = 1) -> "ScreenParams":
        vec = np.asarray(vec, dtype=float)
        return cls(float(vec[0]), float(vec[1]), tuple(vec[2 : 2 + n_te]), tuple(vec[2 + n_te : 2 + n_te + n_tm]))


@dataclass(frozen=True)
class StackCircuit:
    screens: tuple[ScreenParams, ...]
    distances: tuple[float, ...]
    cell: UnitCellSpec = field(default_factory=UnitCellSpec)

    def __post_init__(self):
        object.__setattr__(self, "screens", tuple(self.screens))
        object.__setattr__(self, "distances", tuple(float(dist) for dist in self.distances))
        if not self.screens:
            raise InvalidInputError("a stack needs at least one screen")
        if len(self.distances) != len(self.screens) - 1:
            raise InvalidInputError("need exactly one distance between each pair of screens")
        if not all(math.isfinite(dist) and dist > 0 for dist in self.distances):
            raise InvalidInputError("distances must be finite and > 0")
        n_te, n_tm = self.screens[0].n_te, self.screens[0].n_tm
        if any(s.n_te != n_te or s.n_tm != n_tm for s in self.screens):
            raise InvalidInputError("all screens must use the same harmonic counts")

    @property
    def n_screens(self) -> int:
        return len(self.screens)

    @property
    def n_te(self) -> int:
        return self.screens[0].n_te

    @property
    def n_tm(self) -> int:
        return self.screens[0].n_tm

    def to_vector(self) -> np.ndarray:
        return np.concatenate([s.to_vector() for s in self.screens] + [np.asarray(self.distances, dtype=float)])

    @classmethod
    def from_vector(cls, vec, n_screens: int, cell: UnitCellSpec, n_te: int = 1, n_tm: int = 1) -> "StackCircuit":
        vec = np.asarray(vec, dtype=float)
        per = 2 + n_te + n_tm
        if vec.shape != (n_screens * per + n_screens - 1,):
            raise InvalidInputError(f"parameter vector has length {vec.size}, expected {n_screens * per + n_screens - 1}")
        screens = [ScreenParams.from_vector(vec[i * per : (i + 1) * per], n_te, n_tm) for i in range(n_screens)]
        return cls(tuple(screens), tuple(vec[n_screens * per :]), cell)

    def parameter_names(self) -> list[str]:
        return parameter_names(self.n_screens, self.n_te, self.n_tm)


def parameter_names(n_screens: int, n_te: int = 1, n_tm: int = 1) -> list[str]:
    names = []
    for i in range(1, n_screens + 1):
        names += [f"L0_{i}", f"C0_{i}"]
        names += [f"alphaL_{i}" if n_te == 1 else f"alphaL_{i}_{k}" for k in range(1, n_te + 1)]
        names += [f"alphaC_{i}" if n_tm == 1 else f"alphaC_{i}_{k}" for k in range(1, n_tm + 1)]
    names += [f"d_{i}" for i in range(1, n_screens)]
    return names


def n_parameters(n_screens: int, n_te: int = 1, n_tm: int = 1) -> int:
    return n_screens * (2 + n_te + n_tm) + n_screens - 1


@dataclass(frozen=True)
class FrequencyGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if pts.size == 0 or not np.all(np.isfinite(pts)) or not np.all(pts > 0):
            raise InvalidInputError("frequency grid must be non-empty, finite and > 0")
        if np.any(np.diff(pts) <= 0):
            raise InvalidInputError("frequency grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.size

    @classmethod
    def uniform(cls, f_min: float = 2e9, f_max: float = 16e9, n: int = 200) -> "FrequencyGrid":
        return cls(np.linspace(f_min, f_max, n))

    def check(self, cell: UnitCellSpec) -> None:
        if self.points[-1] >= cell.cutoff(1) * (1 - CUTOFF_GUARD):
            raise CutoffSingularityError(
                f"grid reaches {self.points[-1]:.6g} Hz, at or above the first harmonic cutoff {cell.cutoff(1):.6g} Hz"
            )


def _as_points(grid) -> np.ndarray:
    if isinstance(grid, FrequencyGrid):
        return grid.points
    return FrequencyGrid(grid).points


def floquet_admittances(cell: UnitCellSpec, k: int, freq):
    """Wave admittances ``(y_te, y_tm)`` of the evanescent harmonic ``k``.

    Below cutoff ``y_te`` is inductive (negative imaginary) and ``y_tm``
    capacitive (positive imaginary).
    """
    if int(k) != k or k < 1:
        raise InvalidInputError(f"harmonic index must be a positive integer, got {k!r}")
    f = np.asarray(freq, dtype=float)
    if not np.all(f > 0):
        raise InvalidInputError("frequency must be > 0")
    fc = cell.cutoff(k)
    if np.any(f >= fc * (1 - CUTOFF_GUARD)):
        raise CutoffSingularityError(f"frequency at or above harmonic {k} cutoff {fc:.6g} Hz")
    omega = 2 * math.pi * f
    k0 = omega * math.sqrt(cell.eps_r) / C0
    kt = 2 * math.pi * k / cell.period
    kz = -1j * np.sqrt(kt**2 - k0**2)
    y_te = kz / (omega * MU0)
    y_tm = omega * EPS0 * cell.eps_r / kz
    if f.ndim == 0:
        return complex(y_te), complex(y_tm)
    return y_te, y_tm


def y_eq(screen: ScreenParams, cell: UnitCellSpec, freq):
    """Equivalent shunt admittance of one screen."""
    f = np.asarray(freq, dtype=float)
    omega = 2 * math.pi * f
    y = 1 / (1j * omega * screen.l0) + 1j * omega * screen.c0
    for k, a in enumerate(screen.alpha_l, start=1):
        y = y + a * floquet_admittances(cell, k, f)[0]
    for k, a in enumerate(screen.alpha_c, start=1):
        y = y + a * floquet_admittances(cell, k, f)[1]
    return complex(y) if f.ndim == 0 else y


def stack_network(stack: StackCircuit, grid) -> netalg.ComplexTwoPort:
    f = _as_points(grid)
    cell = stack.cell
    nets = []
    for i, screen in enumerate(stack.screens):
        nets.append(netalg.abcd_shunt(y_eq(screen, cell, f)))
        if i < len(stack.distances):
            nets.append(netalg.abcd_tline(stack.distances[i], f, cell.eps_r))
    return netalg.cascade(nets)


def stack_sparams(stack: StackCircuit, grid) -> netalg.SMatrix:
    return netalg.abcd_to_s(stack_network(stack, grid), stack.cell.z_ref)


def stack_s21(stack: StackCircuit, grid) -> np.ndarray:
    return np.asarray(stack_sparams(stack, grid).s21)


def stack_s21_grad(stack: StackCircuit, grid, cost_adjoint) -> np.ndarray:
    """Gradient of ``Re(sum(conj(w) * s21))`` over the circuit parameter layout."""
    f = _as_points(grid)
    w = np.asarray(cost_adjoint, dtype=complex)
    if w.shape != f.shape:
        raise InvalidInputError("adjoint must have one weight per frequency")
    ev = StackEvaluator(stack.cell, f, stack.n_screens, stack.n_te, stack.n_tm)
    _, jac = ev.s21_jacobian(stack.to_vector())
    return np.real(jac @ np.conj(w))


class StackEvaluator:
    """Fast S21 and Jacobian evaluation on a fixed grid and topology.

    Frequency-only quantities (modal admittances, propagation constant) are
    cached, so a fitting loop only pays for the cascade itself.
    """

    def __init__(self, cell: UnitCellSpec, grid, n_screens: int, n_te: int = 1, n_tm: int = 1):
        self.cell = cell
        self.freqs = _as_points(grid)
        self.n_screens = n_screens
        self.n_te = n_te
        self.n_tm = n_tm
        self.n_params = n_parameters(n_screens, n_te, n_tm)
        self.omega = 2 * math.pi * self.freqs
        n_h = max(n_te, n_tm)
        modes = [floquet_admittances(cell, k, self.freqs) for k in range(1, n_h + 1)]
        self.y_te = np.array([m[0] for m in modes[:n_te]])
        self.y_tm = np.array([m[1] for m in modes[:n_tm]])
        self.beta = self.omega * math.sqrt(cell.eps_r) / C0
        self.z_line = ETA0 / math.sqrt(cell.eps_r)
        self.z_ref = cell.z_ref

    def _screen_admittance(self, block):
        l0, c0 = block[0], block[1]
        a_l = block[2 : 2 + self.n_te]
        a_c = block[2 + self.n_te : 2 + self.n_te + self.n_tm]
        return 1 / (1j * self.omega * l0) + 1j * self.omega * c0 + a_l @ self.y_te + a_c @ self.y_tm

    def s21(self, params) -> np.ndarray:
        return self.s21_jacobian(params, jacobian=False)[0]

    def s21_jacobian(self, params, jacobian: bool = True):
        """Return ``s21`` and ``d s21 / d params`` with shape ``(n_params, n_freq)``."""
        vec = np.asarray(params, dtype=float)
        n, per = self.n_screens, 2 + self.n_te + self.n_tm
        ys = [self._screen_admittance(vec[i * per : (i + 1) * per]) for i in range(n)]
        dists = vec[n * per :]
        z = self.z_line
        trig = [(np.cos(self.beta * dist), np.sin(self.beta * dist)) for dist in dists]

        # Delta = r . M_1 ... M_k . q with r = [1, z_ref], q = [1, 1/z_ref]
        ones = np.ones_like(self.omega, dtype=complex)
        pre = [(ones, self.z_ref * ones)]
        for i in range(n):
            p0, p1 = pre[-1]
            pre.append((p0 + p1 * ys[i], p1))
            if i < n - 1:
                c, s = trig[i]
                p0, p1 = pre[-1]
                pre.append((p0 * c + p1 * (1j / z) * s, p0 * (1j * z) * s + p1 * c))
        p0, p1 = pre[-1]
        delta = p0 + p1 / self.z_ref
        s21 = 2.0 / delta
        if not jacobian:
            return s21, None

        # suffixes, built right to left; suf[e] is the vector after element e
        n_el = 2 * n - 1
        suf = [None] * n_el
        q = (ones, ones / self.z_ref)
        for e in range(n_el - 1, -1, -1):
            suf[e] = q
            q0, q1 = q
            if e % 2 == 0:
                q = (q0, ys[e // 2] * q0 + q1)
            else:
                c, s = trig[e // 2]
                q = (c * q0 + (1j * z) * s * q1, (1j / z) * s * q0 + c * q1)

        ds21_ddelta = -2.0 / delta**2
        jac = np.empty((self.n_params, self.freqs.size), dtype=complex)
        for i in range(n):
            e = 2 * i
            g = pre[e][1] * suf[e][0] * ds21_ddelta  # d s21 / d Y_i
            base = i * per
            l0 = vec[base]
            jac[base] = g * (1j / (self.omega * l0**2))
            jac[base + 1] = g * (1j * self.omega)
            jac[base + 2 : base + 2 + self.n_te] = g * self.y_te
            jac[base + 2 + self.n_te : base + per] = g * self.y_tm
        for i in range(n - 1):
            e = 2 * i + 1
            c, s = trig[i]
            p0, p1 = pre[e]
            q0, q1 = suf[e]
            dd = p0 * (-s * q0 + 1j * z * c * q1) + p1 * ((1j / z) * c * q0 - s * q1)
            jac[n * per + i] = dd * self.beta * ds21_ddelta
        return s21, jac
