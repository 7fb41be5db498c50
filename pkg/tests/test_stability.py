import numpy as np
import pytest

from hivlatent.analysis import EquilibriumKind, equilibria_3cm, equilibria_4cm, r_l
from hivlatent.errors import EndemicAbsentError, InvalidStateError
from hivlatent.model import Efficacy, State3, State4, rhs_3cm, rhs_4cm
from hivlatent.presets import TABLE1
from hivlatent.stability import (
    CharCoeffsCubic,
    CharCoeffsQuartic,
    Verdict,
    char_coeffs_endemic,
    char_coeffs_noninfective,
    classify_equilibrium,
    classify_equilibrium_3cm,
    eigen_spectrum,
    jacobian_3cm,
    jacobian_4cm,
    routh_hurwitz_cubic,
    routh_hurwitz_quartic,
)

from _support import central_jacobian, divide_linear, faddeev_leverrier, random_latent_params

CORE = TABLE1.core
E_NI = State4(1e6, 0.0, 0.0, 0.0)


# -- Jacobians --------------------------------------------------------------------


def test_jacobian_4cm_noninfective_entries():
    J = jacobian_4cm(TABLE1, Efficacy(), E_NI)
    assert J[0, 3] == pytest.approx(-2.4e-2, rel=1e-14)
    assert J[3, 1] == 2000.0
    assert J[0, 0] == -0.01


def test_jacobian_3cm_noninfective_entry():
    J = jacobian_3cm(CORE, Efficacy(), State3(1e6, 0.0, 0.0))
    assert J[2, 1] == CORE.N * CORE.d_I


def _random_state(rng, scale):
    return np.array([s * 10 ** rng.uniform(-2, 1) for s in scale])


def test_jacobian_4cm_matches_finite_differences():
    rng = np.random.default_rng(21)
    for _ in range(100):
        lp = random_latent_params(rng)
        eff = Efficacy(*rng.uniform(0, 0.9, 2))
        x = _random_state(rng, (lp.core.T0, 1e3, 1e3, 1e5))
        J = jacobian_4cm(lp, eff, State4(*x))
        Jfd = central_jacobian(lambda y: rhs_4cm(lp, eff, State4(*y)), x)
        scale = np.max(np.abs(J))
        assert np.max(np.abs(J - Jfd)) <= 1e-5 * scale


def test_jacobian_3cm_matches_finite_differences():
    rng = np.random.default_rng(22)
    for _ in range(100):
        lp = random_latent_params(rng)
        eff = Efficacy(*rng.uniform(0, 0.9, 2))
        x = _random_state(rng, (lp.core.T0, 1e3, 1e5))
        J = jacobian_3cm(lp.core, eff, State3(*x))
        Jfd = central_jacobian(lambda y: rhs_3cm(lp.core, eff, State3(*y)), x)
        assert np.max(np.abs(J - Jfd)) <= 1e-5 * np.max(np.abs(J))


# -- characteristic coefficients ------------------------------------------------------


def test_noninfective_coefficients_table1():
    c = char_coeffs_noninfective(TABLE1, Efficacy())
    assert c.A1 == pytest.approx(24.014, rel=1e-14)
    RL = r_l(TABLE1)
    assert c.A3 == pytest.approx(0.014 * 1.0 * 23.0 * (1 - RL), rel=1e-12)
    assert c.A3 < 0


def test_noninfective_a3_vanishes_at_threshold():
    eps = 1 - 1 / r_l(TABLE1)
    c = char_coeffs_noninfective(TABLE1, Efficacy(0.0, eps))
    assert abs(c.A3) <= 1e-12 * max(abs(a) for a in c)


def test_endemic_coefficients_table1():
    c = char_coeffs_endemic(TABLE1, Efficacy())
    RL = r_l(TABLE1)
    assert c.A4 == pytest.approx(0.01 * 0.014 * 1.0 * 23.0 * (RL - 1), rel=1e-12)
    assert c.A4 == pytest.approx(3.307e-3, rel=1e-3)
    assert c.A1 == pytest.approx(24.034, abs=1e-3)


def test_endemic_coefficients_need_endemic_state():
    with pytest.raises(EndemicAbsentError):
        char_coeffs_endemic(TABLE1, Efficacy(0.0, 0.519))


def _rel(a, b):
    return abs(a - b) / abs(b)


def test_coefficients_match_exact_characteristic_polynomial():
    rng = np.random.default_rng(23)
    done = 0
    while done < 200:
        lp = random_latent_params(rng)
        eff = Efficacy(*rng.uniform(0, 0.5, 2))
        J_ni = jacobian_4cm(lp, eff, State4(lp.core.T0, 0.0, 0.0, 0.0))
        exact = divide_linear(faddeev_leverrier(J_ni), -lp.core.d_T)
        for got, want in zip(char_coeffs_noninfective(lp, eff), exact):
            assert _rel(got, want) <= 1e-9
        if r_l(lp, eff) > 1.0 + 1e-6:
            e = equilibria_4cm(lp, eff)[1]
            exact4 = faddeev_leverrier(jacobian_4cm(lp, eff, e.state))
            for got, want in zip(char_coeffs_endemic(lp, eff), exact4):
                assert _rel(got, want) <= 1e-9
            done += 1


# -- Routh-Hurwitz -----------------------------------------------------------------------


def test_rh_cubic_triple_root():
    rep = routh_hurwitz_cubic(CharCoeffsCubic(3.0, 3.0, 1.0))
    assert rep.verdict is Verdict.LOCALLY_STABLE
    assert all(rep.positive) and all(rep.composite) and rep.all_hold


def test_rh_cubic_table1_unstable():
    rep = routh_hurwitz_cubic(char_coeffs_noninfective(TABLE1, Efficacy()))
    assert rep.verdict is Verdict.UNSTABLE
    # A2 = 23.3 - 43.2 is negative as well
    assert rep.positive == (True, False, False)


def test_rh_cubic_strong_therapy_stable():
    eff = Efficacy(0.0, 0.6)
    assert r_l(TABLE1, eff) == pytest.approx(0.81, abs=0.005)
    assert routh_hurwitz_cubic(char_coeffs_noninfective(TABLE1, eff)).verdict is Verdict.LOCALLY_STABLE


def test_rh_quartic_quadruple_root():
    rep = routh_hurwitz_quartic(CharCoeffsQuartic(4.0, 6.0, 4.0, 1.0))
    assert rep.verdict is Verdict.LOCALLY_STABLE
    assert len(rep.composite) == 2 and all(rep.composite)


def test_rh_quartic_table1_endemic_stable():
    rep = routh_hurwitz_quartic(char_coeffs_endemic(TABLE1, Efficacy()))
    assert rep.verdict is Verdict.LOCALLY_STABLE


def test_rh_quartic_negative_a4_fails():
    rep = routh_hurwitz_quartic(CharCoeffsQuartic(4.0, 6.0, 4.0, -0.1))
    assert rep.verdict is Verdict.UNSTABLE
    assert rep.positive[3] is False


def test_rh_zero_coefficient_is_marginal():
    assert routh_hurwitz_cubic(CharCoeffsCubic(2.0, 1.0, 0.0)).verdict is Verdict.MARGINAL


# -- eigenvalues ---------------------------------------------------------------------------


def test_eigen_spectrum_diagonal():
    spec = eigen_spectrum(np.diag([-1.0, -2.0, -3.0, -4.0]))
    assert sorted(spec.eigenvalues.real) == [-4.0, -3.0, -2.0, -1.0]
    assert np.all(spec.eigenvalues.imag == 0)


def test_eigen_spectrum_noninfective_saddle():
    J = jacobian_4cm(TABLE1, Efficacy(), E_NI)
    spec = eigen_spectrum(J)
    assert spec.count_unstable() == 1
    assert np.min(np.abs(spec.eigenvalues + 0.01)) <= 1e-9


def test_eigen_spectrum_rejects_nonfinite():
    with pytest.raises(InvalidStateError):
        eigen_spectrum(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_spectrum_residual_conjugacy_and_trace():
    rng = np.random.default_rng(24)
    for _ in range(200):
        lp = random_latent_params(rng)
        x = _random_state(rng, (lp.core.T0, 1e3, 1e3, 1e5))
        J = jacobian_4cm(lp, Efficacy(), State4(*x))
        spec = eigen_spectrum(J)
        w = spec.eigenvalues
        assert len(w) == 4
        assert spec.max_residual <= 1e-8 * np.linalg.norm(J, 2)
        # each eigenvalue has a partner conjugate
        for z in w:
            assert np.min(np.abs(w - np.conj(z))) <= 1e-9 * max(1.0, abs(z))
        assert np.sum(w).real == pytest.approx(np.trace(J), rel=1e-9)


def test_spectrum_of_3cm_jacobian_has_small_residual():
    J = jacobian_3cm(CORE, Efficacy(), equilibria_3cm(CORE)[1].state)
    spec = eigen_spectrum(J)
    assert spec.max_residual <= 1e-8 * np.linalg.norm(J, 2)


# -- classification ----------------------------------------------------------------------------


def test_classify_table1():
    ni = classify_equilibrium(TABLE1, Efficacy(), EquilibriumKind.NON_INFECTIVE)
    ei = classify_equilibrium(TABLE1, Efficacy(), EquilibriumKind.ENDEMIC)
    assert ni.verdict is Verdict.UNSTABLE
    assert ni.factored_root == -0.01
    assert len(ni.eigenvalues) == 4
    assert ei.verdict is Verdict.LOCALLY_STABLE
    assert ei.numeric_verdict is Verdict.LOCALLY_STABLE


@pytest.mark.parametrize("offset", [1e-13, -1e-13])
def test_classify_at_threshold_is_marginal(offset):
    eps = 1 - (1 + offset) / r_l(TABLE1)
    eff = Efficacy(0.0, eps)
    assert abs(r_l(TABLE1, eff) - 1) <= 1e-12
    assert classify_equilibrium(TABLE1, eff, EquilibriumKind.NON_INFECTIVE).verdict is Verdict.MARGINAL


def test_classify_endemic_absent():
    with pytest.raises(EndemicAbsentError):
        classify_equilibrium(TABLE1, Efficacy(0.0, 0.519), EquilibriumKind.ENDEMIC)


def test_classify_3cm():
    assert classify_equilibrium_3cm(CORE, Efficacy(), EquilibriumKind.NON_INFECTIVE).verdict is Verdict.UNSTABLE
    assert classify_equilibrium_3cm(CORE, Efficacy(), EquilibriumKind.ENDEMIC).verdict is Verdict.LOCALLY_STABLE
    # 0.519 keeps the three-component model just above threshold
    fig3 = Efficacy(0.0, 0.519)
    assert classify_equilibrium_3cm(CORE, fig3, EquilibriumKind.NON_INFECTIVE).verdict is Verdict.UNSTABLE
    with pytest.raises(EndemicAbsentError):
        classify_equilibrium_3cm(CORE, Efficacy(0.0, 0.6), EquilibriumKind.ENDEMIC)


def test_classification_agrees_on_random_draws():
    rng = np.random.default_rng(25)
    for _ in range(300):
        lp = random_latent_params(rng)
        eff = Efficacy(0.0, float(rng.uniform(0, 0.9)))
        R = r_l(lp, eff)
        ni = classify_equilibrium(lp, eff, EquilibriumKind.NON_INFECTIVE)
        assert ni.verdict is (Verdict.LOCALLY_STABLE if R < 1 else Verdict.UNSTABLE)
        assert ni.numeric_verdict is ni.verdict
        if R > 1:
            ei = classify_equilibrium(lp, eff, EquilibriumKind.ENDEMIC)
            assert ei.verdict is Verdict.LOCALLY_STABLE
            assert ei.numeric_verdict is Verdict.LOCALLY_STABLE
