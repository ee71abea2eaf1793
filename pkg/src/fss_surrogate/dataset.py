"""Labeled S21 datasets: sweep generation, synthetic ground truth, split, file I/O.

File formats (all plain text, ``#`` lines are comments):

* geometry CSV  ``id,n_screens,l_1_mm..l_N_mm,d_1_mm..d_{N-1}_mm``
* response CSV  ``id,freq_hz,s21_re,s21_im``, rows grouped by id, one grid shared by all ids
* metadata      ``key = value`` lines
* model         line-oriented text, see :func:`write_model`
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import FormatError, InvalidInputError
from .pit import FrequencyGrid, ScreenParams, StackCircuit, UnitCellSpec, stack_s21

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Geometry:
    """Slot lengths and screen separations, in metres."""

    slot_lengths: tuple[float, ...]
    distances: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slot_lengths", tuple(float(x) for x in self.slot_lengths))
        object.__setattr__(self, "distances", tuple(float(x) for x in self.distances))
        if not self.slot_lengths:
            raise InvalidInputError("geometry needs at least one slot")
        if len(self.distances) != len(self.slot_lengths) - 1:
            raise InvalidInputError("geometry needs N-1 distances for N slots")
        if not all(math.isfinite(x) and x > 0 for x in self.slot_lengths + self.distances):
            raise InvalidInputError("geometry values must be finite and > 0")

    @property
    def n_screens(self) -> int:
        return len(self.slot_lengths)

    def to_vector(self) -> np.ndarray:
        return np.array(self.slot_lengths + self.distances)

    @classmethod
    def from_vector(cls, vec, n_screens: int) -> "Geometry":
        vec = [float(x) for x in vec]
        return cls(tuple(vec[:n_screens]), tuple(vec[n_screens:]))

    def check_cell(self, cell: UnitCellSpec) -> None:
        if any(length >= cell.period for length in self.slot_lengths):
            raise InvalidInputError("slot length must be shorter than the cell period")


@dataclass(frozen=True)
class LabeledSample:
    id: int
    geometry: Geometry
    s21_goal: np.ndarray
    freqs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s21_goal, dtype=complex)
        f = np.asarray(self.freqs, dtype=float)
        if s.shape != f.shape or s.ndim != 1:
            raise InvalidInputError("s21_goal must have one value per frequency")
        if np.any(np.abs(s) > 1 + 1e-6):
            raise InvalidInputError(f"sample {self.id}: |s21| exceeds 1 (target must be passive)")
        object.__setattr__(self, "s21_goal", s)
        object.__setattr__(self, "freqs", f)


@dataclass(frozen=True)
class SweepRange:
    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise InvalidInputError("sweep count must be >= 1")
        if self.min > self.max:
            raise InvalidInputError("sweep min must not exceed max")

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class SweepSpec:
    slot_lengths: tuple[SweepRange, ...]
    distances: tuple[SweepRange, ...] = ()

    @property
    def n_screens(self) -> int:
        return len(self.slot_lengths)

    @property
    def size(self) -> int:
        return math.prod(r.count for r in self.slot_lengths + self.distances)

    @classmethod
    def uniform(cls, n_screens, slot=(9.5e-3, 15e-3, 9), dist=(7e-3, 15e-3, 9)) -> "SweepSpec":
        return cls(tuple(SweepRange(*slot) for _ in range(n_screens)), tuple(SweepRange(*dist) for _ in range(n_screens - 1)))


def generate_sweep(spec: SweepSpec) -> list[Geometry]:
    """Cartesian product in lexicographic order (last parameter varies fastest)."""
    ranges = tuple(spec.slot_lengths) + tuple(spec.distances)
    if len(spec.distances) != len(spec.slot_lengths) - 1:
        raise InvalidInputError("sweep needs N-1 distance ranges for N slot ranges")
    for r in ranges:
        if r.count < 1:
            raise InvalidInputError("zero-count sweep dimension")
    n = spec.n_screens
    return [Geometry.from_vector(combo, n) for combo in itertools.product(*(r.values() for r in ranges))]


@dataclass(frozen=True)
class TruthMap:
    """Ground-truth circuit of a geometry for the synthetic oracle.

    For slot length ``length``: ``L0 = l0_per_m*length``,
    ``C0 = c0_coef/(l_max + delta - length)``, ``aL = al_per_m*length``,
    ``aC = ac_per_m*length``; harmonic k > 1 weights fall off as ``1/k**2``. Every
    parameter (distances too) then gets a fixed pseudo-random relative
    perturbation of up to ``perturbation``, seeded from the geometry.
    """

    l0_per_m: float = 1.075e-7
    c0_coef: float = 8.62e-16
    l_max: float = 17e-3
    delta: float = 1e-3
    al_per_m: float = 1.48e-5
    ac_per_m: float = 2.78e-9
    perturbation: float = 0.03

    def __call__(self, geometry: Geometry, cell: UnitCellSpec, fidelity: int) -> StackCircuit:
        decay = np.array([1.0 / k**2 for k in range(1, fidelity + 1)])
        screens = []
        for length in geometry.slot_lengths:
            if length >= self.l_max + self.delta:
                raise InvalidInputError(f"slot length {length} outside truth map domain")
            screens.append(
                ScreenParams(
                    self.l0_per_m * length,
                    self.c0_coef / (self.l_max + self.delta - length),
                    tuple(self.al_per_m * length * decay),
                    tuple(self.ac_per_m * length * decay),
                )
            )
        stack = StackCircuit(tuple(screens), geometry.distances, cell)
        if self.perturbation == 0:
            return stack
        vec = stack.to_vector()
        rng = np.random.default_rng(geometry_seed(geometry))
        vec = vec * (1 + rng.uniform(-self.perturbation, self.perturbation, vec.size))
        return StackCircuit.from_vector(vec, stack.n_screens, cell, fidelity, fidelity)

    def as_metadata(self) -> dict[str, str]:
        return {f"truth_{k}": repr(getattr(self, k)) for k in self.__dataclass_fields__}

    @classmethod
    def from_metadata(cls, meta: dict[str, str]) -> "TruthMap":
        kw = {k: float(meta[f"truth_{k}"]) for k in cls.__dataclass_fields__ if f"truth_{k}" in meta}
        return cls(**kw)


def geometry_seed(geometry: Geometry) -> int:
    """Platform-stable seed from geometry values rounded to 1 nm."""
    key = ",".join(f"{round(x * 1e9)}" for x in geometry.slot_lengths + geometry.distances)
    key += f"|{geometry.n_screens}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


TruthSource = Union[StackCircuit, Callable[[Geometry, UnitCellSpec, int], StackCircuit]]


def synth_oracle(
    geometry: Geometry,
    cell: UnitCellSpec,
    grid,
    fidelity: int = 3,
    truth_map: TruthSource | None = None,
    sample_id: int = 0,
) -> LabeledSample:
    """Stand-in for a full-wave solver: the circuit evaluated with ``fidelity`` harmonics."""
    if fidelity < 1:
        raise InvalidInputError("oracle fidelity must be >= 1")
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(grid)
    geometry.check_cell(cell)
    if truth_map is None:
        truth_map = TruthMap()
    stack = truth_map if isinstance(truth_map, StackCircuit) else truth_map(geometry, cell, fidelity)
    return LabeledSample(sample_id, geometry, stack_s21(stack, grid), grid.points.copy())


def screen_oracle(cell: UnitCellSpec, grid, fidelity: int = 3, truth_map: TruthSource | None = None):
    """Isolated-screen S21 provider built on :func:`synth_oracle`."""

    def provider(slot_length: float) -> np.ndarray:
        return synth_oracle(Geometry((slot_length,)), cell, grid, fidelity, truth_map).s21_goal

    return provider


def split(samples: Sequence[LabeledSample], train_fraction: float = 0.8, seed: int = 0):
    """Seeded shuffle into ``(train, test)`` with ``floor(train_fraction * n)`` train samples."""
    if not 0 < train_fraction < 1:
        raise InvalidInputError("train_fraction must lie in (0, 1)")
    if len(samples) == 0:
        raise InvalidInputError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = math.floor(train_fraction * len(samples))
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


# ---------------------------------------------------------------- file I/O


def _mm(x: float) -> str:
    # 15 significant digits keep write -> read -> write byte-stable through the mm/m scaling
    return f"{x * 1e3:.15g}"


def geometry_header(n_screens: int) -> list[str]:
    return ["id", "n_screens"] + [f"l_{i}_mm" for i in range(1, n_screens + 1)] + [f"d_{i}_mm" for i in range(1, n_screens)]


RESPONSE_HEADER = ["id", "freq_hz", "s21_re", "s21_im"]


def write_dataset(samples: Sequence[LabeledSample], geometry_file, response_file, header_comment: str | None = None, n_screens: int | None = None):
    samples = list(samples)
    if samples:
        n_screens = samples[0].geometry.n_screens
    with open(geometry_file, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(geometry_header(n_screens) if n_screens else ["id", "n_screens"])
        for s in samples:
            if s.geometry.n_screens != n_screens:
                raise InvalidInputError("all samples must share the number of screens")
            g = s.geometry
            w.writerow([s.id, g.n_screens] + [_mm(x) for x in g.slot_lengths + g.distances])
    with open(response_file, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESPONSE_HEADER)
        for s in samples:
            for f, v in zip(s.freqs, s.s21_goal):
                w.writerow([s.id, repr(float(f)), repr(float(v.real)), repr(float(v.imag))])


def _data_lines(path):
    """Yield ``(line_number, fields)`` for non-comment, non-blank lines."""
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, next(csv.reader([stripped]))


def _num(text, path, lineno, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise FormatError(f"cannot parse {text!r} as {kind.__name__}", path, lineno) from None
    if kind is float and not math.isfinite(value):
        raise FormatError(f"non-finite value {text!r}", path, lineno)
    return value


def read_geometries(path) -> dict[int, Geometry]:
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise FormatError("missing header", path, 1) from None
    if header[:2] != ["id", "n_screens"]:
        raise FormatError(f"bad header {header}", path, lineno)
    n_l = sum(1 for h in header if h.startswith("l_"))
    if header != geometry_header(n_l) and not (n_l == 0 and header == ["id", "n_screens"]):
        raise FormatError(f"bad header {header}, expected {geometry_header(n_l)}", path, lineno)
    out = {}
    for lineno, row in lines:
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        sid = _num(row[0], path, lineno, int)
        n = _num(row[1], path, lineno, int)
        if n != n_l:
            raise FormatError(f"n_screens={n} inconsistent with header ({n_l} screens)", path, lineno)
        if sid in out:
            raise FormatError(f"duplicate id {sid}", path, lineno)
        vals = [_num(x, path, lineno) / 1e3 for x in row[2:]]
        try:
            out[sid] = Geometry.from_vector(vals, n)
        except InvalidInputError as exc:
            raise FormatError(str(exc), path, lineno) from None
    return out


def read_dataset(geometry_file, response_file) -> list[LabeledSample]:
    geoms = read_geometries(geometry_file)
    lines = _data_lines(response_file)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise FormatError("missing header", response_file, 1) from None
    if header != RESPONSE_HEADER:
        raise FormatError(f"bad header {header}, expected {RESPONSE_HEADER}", response_file, lineno)
    groups: dict[int, tuple[list, list]] = {}
    first_line: dict[int, int] = {}
    current = None
    for lineno, row in lines:
        if len(row) != 4:
            raise FormatError(f"expected 4 fields, got {len(row)}", response_file, lineno)
        sid = _num(row[0], response_file, lineno, int)
        f = _num(row[1], response_file, lineno)
        re_, im_ = _num(row[2], response_file, lineno), _num(row[3], response_file, lineno)
        if sid != current:
            if sid in groups:
                raise FormatError(f"rows of id {sid} are not contiguous", response_file, lineno)
            if sid not in geoms:
                raise FormatError(f"id {sid} has no geometry row", response_file, lineno)
            groups[sid] = ([], [])
            first_line[sid] = lineno
            current = sid
        fs, vs = groups[sid]
        if fs and f <= fs[-1]:
            raise FormatError("frequencies must be strictly increasing within an id", response_file, lineno)
        fs.append(f)
        vs.append(complex(re_, im_))
    missing = sorted(set(geoms) - set(groups))
    if missing:
        raise FormatError(f"geometry ids without responses: {missing[:5]}", response_file, None)
    grid = None
    samples = []
    for sid, (fs, vs) in groups.items():
        fs = np.array(fs)
        if grid is None:
            grid = fs
        elif fs.shape != grid.shape or np.any(fs != grid):
            raise FormatError(f"id {sid} uses a different frequency grid", response_file, first_line[sid])
        try:
            samples.append(LabeledSample(sid, geoms[sid], np.array(vs), fs))
        except InvalidInputError as exc:
            raise FormatError(str(exc), response_file, first_line[sid]) from None
    return samples


def write_metadata(path, meta: dict, header_comment: str | None = None) -> None:
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        for k, v in meta.items():
            fh.write(f"{k} = {v}\n")


def read_metadata(path) -> dict[str, str]:
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError("expected 'key = value'", path, lineno)
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


# ---------------------------------------------------------------- model files


def write_model(model, path, header_comment: str | None = None) -> None:
    """Persist an :class:`~fss_surrogate.mlp.MlpModel` as diffable text.

    Layout: ``format_version``, ``layer_sizes``, ``input_min``, ``input_max``,
    ``output_offset``, then per layer a ``layer i`` line, one line per weight
    row (row-major, shape ``(fan_in, fan_out)``) and a ``bias`` line.
    """

    def fmt(values):
        return " ".join(repr(float(x)) for x in values)

    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"format_version {MODEL_FORMAT_VERSION}\n")
        fh.write("layer_sizes " + " ".join(str(n) for n in model.layer_sizes) + "\n")
        fh.write("input_min " + fmt(model.input_min) + "\n")
        fh.write("input_max " + fmt(model.input_max) + "\n")
        fh.write("output_offset " + fmt(model.output_offset) + "\n")
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            fh.write(f"layer {i}\n")
            for row in w:
                fh.write(fmt(row) + "\n")
            fh.write("bias " + fmt(b) + "\n")


def read_model(path):
    from .mlp import MlpModel

    with open(path) as fh:
        lines = [(n, text.strip()) for n, text in enumerate(fh, start=1) if text.strip() and not text.lstrip().startswith("#")]
    pos = 0

    def take(key):
        nonlocal pos
        if pos >= len(lines):
            raise FormatError(f"unexpected end of file, expected '{key}'", path, None)
        lineno, line = lines[pos]
        parts = line.split()
        if not parts or parts[0] != key:
            raise FormatError(f"expected '{key}' line", path, lineno)
        pos += 1
        return lineno, parts[1:]

    def floats(parts, lineno, n=None):
        vals = np.array([_num(x, path, lineno) for x in parts])
        if n is not None and vals.size != n:
            raise FormatError(f"expected {n} values, got {vals.size}", path, lineno)
        return vals

    lineno, v = take("format_version")
    if v != [str(MODEL_FORMAT_VERSION)]:
        raise FormatError(f"unsupported format_version {v}", path, lineno)
    lineno, v = take("layer_sizes")
    sizes = [_num(x, path, lineno, int) for x in v]
    if len(sizes) < 2 or min(sizes) < 1:
        raise FormatError("layer_sizes needs at least two positive sizes", path, lineno)
    lineno, v = take("input_min")
    in_min = floats(v, lineno, sizes[0])
    lineno, v = take("input_max")
    in_max = floats(v, lineno, sizes[0])
    lineno, v = take("output_offset")
    offset = floats(v, lineno, sizes[-1])
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lineno, v = take("layer")
        if v != [str(i)]:
            raise FormatError(f"expected 'layer {i}'", path, lineno)
        rows = []
        for _ in range(n_in):
            if pos >= len(lines):
                raise FormatError("unexpected end of file inside weight matrix", path, None)
            lineno, line = lines[pos]
            rows.append(floats(line.split(), lineno, n_out))
            pos += 1
        weights.append(np.array(rows))
        lineno, v = take("bias")
        biases.append(floats(v, lineno, n_out))
    if pos != len(lines):
        raise FormatError("trailing content after last layer", path, lines[pos][0])
    try:
        return MlpModel(sizes, weights, biases, in_min, in_max, offset)
    except InvalidInputError as exc:
        raise FormatError(str(exc), path, None) from None
