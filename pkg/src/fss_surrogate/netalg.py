"""Two-port network algebra: ABCD primitives, cascading, ABCD <-> S conversion.

Every function accepts complex scalars or numpy arrays for the matrix entries;
arrays broadcast elementwise, which is how whole frequency grids are evaluated
in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence, Union

import numpy as np

from .errors import InvalidInputError, SingularConversionError

C0 = 299_792_458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0**2)
ETA0 = math.sqrt(MU0 / EPS0)

Number = Union[complex, float, np.ndarray]


@dataclass(frozen=True)
class ComplexTwoPort:
    """ABCD (chain) matrix ``[[a, b], [c, d]]``; b in ohms, c in siemens."""

    a: Number
    b: Number
    c: Number
    d: Number

    def __matmul__(self, other: "ComplexTwoPort") -> "ComplexTwoPort":
        return ComplexTwoPort(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def det(self) -> Number:
        return self.a * self.d - self.b * self.c

    def to_array(self) -> np.ndarray:
        """Entries stacked as ``(..., 2, 2)``."""
        a, b, c, d = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (self.a, self.b, self.c, self.d)))
        return np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)


@dataclass(frozen=True)
class SMatrix:
    s11: Number
    s21: Number
    s12: Number
    s22: Number
    z_ref: float


def identity() -> ComplexTwoPort:
    return ComplexTwoPort(1.0 + 0j, 0j, 0j, 1.0 + 0j)


def abcd_shunt(y: Number) -> ComplexTwoPort:
    """Shunt admittance ``y`` (siemens) to ground."""
    y = np.asarray(y, dtype=complex)
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("shunt admittance must be finite")
    one = np.ones_like(y)
    zero = np.zeros_like(y)
    if y.ndim == 0:
        return ComplexTwoPort(1.0 + 0j, 0j, complex(y), 1.0 + 0j)
    return ComplexTwoPort(one, zero, y, one)


def abcd_series(z: Number) -> ComplexTwoPort:
    """Series impedance ``z`` (ohms)."""
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("series impedance must be finite")
    if z.ndim == 0:
        return ComplexTwoPort(1.0 + 0j, complex(z), 0j, 1.0 + 0j)
    return ComplexTwoPort(np.ones_like(z), z, np.zeros_like(z), np.ones_like(z))


def abcd_tline(d: float, freq: Number, eps_r: float = 1.0, z_ref_medium: float = ETA0) -> ComplexTwoPort:
    """Lossless TEM line of length ``d`` metres filled with relative permittivity ``eps_r``.

    The line impedance is ``z_ref_medium / sqrt(eps_r)``; ``z_ref_medium`` is the
    vacuum wave impedance by default.
    """
    freq = np.asarray(freq, dtype=float)
    if not (np.isfinite(d) and d >= 0):
        raise InvalidInputError(f"line length must be >= 0, got {d!r}")
    if not np.all(freq > 0) or not np.all(np.isfinite(freq)):
        raise InvalidInputError("frequency must be > 0")
    if eps_r < 1:
        raise InvalidInputError(f"eps_r must be >= 1, got {eps_r!r}")
    n = math.sqrt(eps_r)
    beta = 2 * math.pi * freq * n / C0
    z = z_ref_medium / n
    cos = np.cos(beta * d)
    sin = np.sin(beta * d)
    if freq.ndim == 0:
        cos, sin = float(cos), float(sin)
    return ComplexTwoPort(cos + 0j, 1j * z * sin, 1j * sin / z, cos + 0j)


def cascade(nets: Sequence[ComplexTwoPort]) -> ComplexTwoPort:
    """Chain ``nets`` left to right; port 1 is the first element's input."""
    nets = list(nets)
    if not nets:
        raise InvalidInputError("cascade needs at least one network")
    return reduce(lambda x, y: x @ y, nets)


def abcd_to_s(net: ComplexTwoPort, z_ref: float) -> SMatrix:
    if not z_ref > 0:
        raise InvalidInputError(f"z_ref must be > 0, got {z_ref!r}")
    a, b, c, d = net.a, net.b, net.c, net.d
    bz = b / z_ref
    cz = c * z_ref
    delta = a + bz + cz + d
    if np.any(np.abs(delta) < 1e-30):
        raise SingularConversionError("ABCD to S conversion denominator vanishes")
    return SMatrix(
        s11=(a + bz - cz - d) / delta,
        s21=2.0 / delta,
        s12=2.0 * (a * d - b * c) / delta,
        s22=(-a + bz - cz + d) / delta,
        z_ref=z_ref,
    )


def s_to_abcd(s: SMatrix) -> ComplexTwoPort:
    """Inverse of :func:`abcd_to_s` for the same reference impedance."""
    z0 = s.z_ref
    s11, s12, s21, s22 = s.s11, s.s12, s.s21, s.s22
    den = 2.0 * s21
    if np.any(np.abs(den) < 1e-30):
        raise SingularConversionError("S21 vanishes; no ABCD representation")
    return ComplexTwoPort(
        ((1 + s11) * (1 - s22) + s12 * s21) / den,
        z0 * ((1 + s11) * (1 + s22) - s12 * s21) / den,
        ((1 - s11) * (1 - s22) - s12 * s21) / (z0 * den),
        ((1 - s11) * (1 + s22) + s12 * s21) / den,
    )
