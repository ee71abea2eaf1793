import math

import numpy as np
import pytest

import scripted_oracle
from fd_checks import power_transmission_gradient_check
from conftest import REFERENCE_SCREENS, REFERENCE_DISTANCES, random_stack
from fss_surrogate.errors import CutoffSingularityError, InvalidInputError
from fss_surrogate.pit import (
    FrequencyGrid,
    ScreenParams,
    StackCircuit,
    StackEvaluator,
    UnitCellSpec,
    floquet_admittances,
    parameter_names,
    stack_s21,
    stack_s21_grad,
    stack_sparams,
    y_eq,
)


class TestTypes:
    def test_cell_validation(self):
        with pytest.raises(InvalidInputError):
            UnitCellSpec(period=1e-3, slot_width=2e-3)
        with pytest.raises(InvalidInputError):
            UnitCellSpec(eps_r=0.5)

    def test_screen_validation(self):
        with pytest.raises(InvalidInputError):
            ScreenParams(-1e-9, 1e-13, (1e-7,), (1e-11,))
        with pytest.raises(InvalidInputError):
            ScreenParams(1e-9, 1e-13, (), (1e-11,))

    def test_stack_distance_count(self, cell):
        s = ScreenParams(1e-9, 1e-13, (1e-7,), (1e-11,))
        with pytest.raises(InvalidInputError):
            StackCircuit((s, s), (), cell)

    def test_grid_validation(self, cell):
        with pytest.raises(InvalidInputError):
            FrequencyGrid([1e9, 1e9])
        with pytest.raises(InvalidInputError):
            FrequencyGrid([0.0, 1e9])
        with pytest.raises(CutoffSingularityError):
            FrequencyGrid.uniform(2e9, 17e9).check(cell)
        FrequencyGrid.uniform().check(cell)

    def test_vector_round_trip(self, reference_stack, cell):
        vec = reference_stack.to_vector()
        assert vec.size == 19
        assert StackCircuit.from_vector(vec, 4, cell) == reference_stack

    def test_parameter_names_layout(self):
        assert parameter_names(2) == ["L0_1", "C0_1", "alphaL_1", "alphaC_1", "L0_2", "C0_2", "alphaL_2", "alphaC_2", "d_1"]
        assert len(parameter_names(4)) == 19


class TestFloquet:
    def test_cutoff(self, cell):
        assert cell.cutoff(1) == pytest.approx(16.655136555555557e9, rel=1e-12)
        assert UnitCellSpec(period=36e-3).cutoff(1) == pytest.approx(cell.cutoff(1) / 2)

    def test_signs_below_cutoff(self, cell):
        y_te, y_tm = floquet_admittances(cell, 1, 10e9)
        assert y_te.imag < 0 < y_tm.imag
        assert abs(y_te.real) == 0 and abs(y_tm.real) == 0

    def test_matches_scripted(self, cell):
        ref = scripted_oracle.modal_admittances(18e-3, 2, 7.3e9)
        got = floquet_admittances(cell, 2, 7.3e9)
        assert got[0] == pytest.approx(ref[0], rel=1e-13)
        assert got[1] == pytest.approx(ref[1], rel=1e-13)

    @pytest.mark.parametrize("f", [16.655136555555557e9, 16.655136555555557e9 * (1 - 5e-7), 20e9])
    def test_cutoff_guard(self, cell, f):
        with pytest.raises(CutoffSingularityError):
            floquet_admittances(cell, 1, f)

    def test_higher_harmonic_allows_higher_frequency(self, cell):
        floquet_admittances(cell, 2, 20e9)

    def test_bad_index(self, cell):
        with pytest.raises(InvalidInputError):
            floquet_admittances(cell, 0, 1e9)


class TestScreenAdmittance:
    def test_lc_resonance_in_zero_mode_limit(self, cell):
        l0, c0 = 1.6e-9, 2.8e-13
        s = ScreenParams(l0, c0, (1e-300,), (1e-300,))
        f_res = 1 / (2 * math.pi * math.sqrt(l0 * c0))
        assert abs(y_eq(s, cell, f_res)) < 1e-12
        w = 2 * math.pi * 5e9
        assert y_eq(s, cell, 5e9) == pytest.approx(1 / (1j * w * l0) + 1j * w * c0, rel=1e-14)

    def test_reference_screen(self, cell):
        l0, c0, al, ac = REFERENCE_SCREENS[0]
        ref = scripted_oracle.screen_admittance(l0, c0, [al], [ac], 18e-3, 10e9)
        assert y_eq(ScreenParams(l0, c0, (al,), (ac,)), cell, 10e9) == pytest.approx(ref, rel=1e-13)

    def test_purely_imaginary(self, cell, grid):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = random_stack(rng, cell, 1, n_te=2, n_tm=2, strong_modes=True).screens[0]
            assert np.all(y_eq(s, cell, grid.points).real == 0)


class TestStackResponse:
    def test_reference_stack_matches_scripted(self, reference_stack, grid):
        screens = [(l0, c0, [al], [ac]) for l0, c0, al, ac in REFERENCE_SCREENS]
        ref = np.array([scripted_oracle.stack_s21(screens, REFERENCE_DISTANCES, 18e-3, f) for f in grid.points])
        assert np.max(np.abs(stack_s21(reference_stack, grid) - ref)) < 1e-10

    def test_transparent_at_screen_resonance(self, cell):
        s = ScreenParams(1.6e-9, 2.8e-13, (2e-7,), (4e-11,))
        from scipy.optimize import brentq

        f0 = brentq(lambda f: y_eq(s, cell, f).imag, 3e9, 12e9, xtol=1e-3)
        s21 = stack_s21(StackCircuit((s,), (), cell), [f0])[0]
        assert s21 == pytest.approx(1.0, abs=1e-9)

    def test_coincident_screens_add(self, cell, grid):
        a = ScreenParams(1.6e-9, 2.8e-13, (2e-7,), (4e-11,))
        b = ScreenParams(1.2e-9, 3.4e-13, (1e-7,), (5e-11,))
        two = stack_s21(StackCircuit((a, b), (1e-12,), cell), grid)
        ya = y_eq(a, cell, grid.points)
        yb = y_eq(b, cell, grid.points)
        from fss_surrogate.netalg import abcd_shunt, abcd_to_s

        one = abcd_to_s(abcd_shunt(ya + yb), cell.z_ref).s21
        assert np.max(np.abs(two - one)) < 1e-9

    def test_evaluator_agrees_with_cascade(self, cell, grid):
        rng = np.random.default_rng(1)
        for _ in range(20):
            st = random_stack(rng, cell, strong_modes=bool(rng.integers(2)))
            ev = StackEvaluator(cell, grid, st.n_screens)
            assert np.max(np.abs(ev.s21(st.to_vector()) - stack_s21(st, grid))) < 1e-12

    def test_properties_random(self, cell, grid):
        rng = np.random.default_rng(2)
        for _ in range(200):
            st = random_stack(rng, cell, n_te=int(rng.integers(1, 3)), n_tm=int(rng.integers(1, 3)), strong_modes=bool(rng.integers(2)))
            s = stack_sparams(st, grid)
            assert np.all(np.isfinite(s.s21))
            assert np.max(np.abs(np.abs(s.s11) ** 2 + np.abs(s.s21) ** 2 - 1)) < 1e-9
            assert np.max(np.abs(s.s12 - s.s21)) < 1e-9
            assert np.max(np.abs(s.s21)) <= 1 + 1e-9

    def test_palindromic_stack(self, cell, grid):
        rng = np.random.default_rng(3)
        for _ in range(50):
            half = random_stack(rng, cell, int(rng.integers(1, 3)))
            d_mid = rng.uniform(2e-3, 20e-3)
            if half.n_screens == 1:
                st = StackCircuit(half.screens * 2, (d_mid,), cell)
            else:
                st = StackCircuit(half.screens + half.screens[::-1], half.distances + (d_mid,) + half.distances[::-1], cell)
            s = stack_sparams(st, grid)
            assert np.max(np.abs(s.s11 - s.s22)) < 1e-9

    def test_continuity(self, reference_stack):
        fine = FrequencyGrid.uniform(2e9, 16e9, 20001)
        s21 = stack_s21(reference_stack, fine)
        assert np.all(np.isfinite(s21))
        assert np.max(np.abs(np.diff(s21))) < 0.05


class TestGradient:
    def test_zero_adjoint(self, reference_stack, grid):
        assert np.all(stack_s21_grad(reference_stack, grid, np.zeros(len(grid))) == 0)

    def test_adjoint_length_checked(self, reference_stack, grid):
        with pytest.raises(InvalidInputError):
            stack_s21_grad(reference_stack, grid, np.ones(3))

    def test_symmetric_pair(self, cell, grid):
        s = ScreenParams(1.6e-9, 2.8e-13, (0.3,), (0.2,))
        st = StackCircuit((s, s), (9e-3,), cell)
        g = stack_s21_grad(st, grid, 2 * stack_s21(st, grid))
        assert np.allclose(g[:4], g[4:8], rtol=1e-9, atol=0)

    def test_linear_in_adjoint(self, reference_stack, grid):
        rng = np.random.default_rng(4)
        w1 = rng.normal(size=len(grid)) + 1j * rng.normal(size=len(grid))
        w2 = rng.normal(size=len(grid)) + 1j * rng.normal(size=len(grid))
        g = stack_s21_grad(reference_stack, grid, w1 + 2 * w2)
        g1 = stack_s21_grad(reference_stack, grid, w1)
        g2 = stack_s21_grad(reference_stack, grid, w2)
        assert np.allclose(g, g1 + 2 * g2, rtol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, cell, grid, seed):
        rng = np.random.default_rng(100 + seed)
        st = random_stack(rng, cell, n_te=int(rng.integers(1, 3)), n_tm=int(rng.integers(1, 3)), strong_modes=True)
        rel, _ = power_transmission_gradient_check(st, grid)
        assert np.max(rel) < 1e-5
