import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.regularity.errors import DegenerateInputError, InputError
from src.regularity.orlicz import (
    Envelope,
    GrowthModel,
    OrliczFunction,
    bregman_gap,
    conjugate,
    directional_ratio,
    energy_F,
    equiv_integral_ratio,
    hammer2_ratio,
    lemma_t_backward_ratio,
    lemma_t_ratio,
    lemma_t_symmetric,
    monotonicity_ratio,
    sample_envelope,
    sample_matrix_pairs,
    stress_A,
    v_map,
    young_gap,
)

QUADRATIC = GrowthModel.p_growth(2.0, 0.0)
MODELS = [
    GrowthModel.p_growth(p, mu) for p in (1.25, 1.5, 2.0, 3.0, 4.0) for mu in (0.0, 0.1, 1.0)
]
ORLICZ_MODELS = [
    GrowthModel.orlicz(OrliczFunction("power", 3.0), 0.5),
    GrowthModel.orlicz(OrliczFunction("max_power", 1.5, q_exp=3.0), 0.2),
    GrowthModel.orlicz(OrliczFunction("carreau", 1.5, nu=1.0, nu_inf=0.1, mu=0.5), 0.0),
]


def _one(x: float) -> np.ndarray:
    return np.array([[x]])


def test_quadratic_model_is_the_identity():
    Q = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(stress_A(QUADRATIC, Q), Q)
    np.testing.assert_allclose(v_map(QUADRATIC, Q), Q, rtol=1e-15)
    assert math.isclose(energy_F(QUADRATIC, Q), 30.0 / 2.0)


def test_stress_hand_values():
    assert math.isclose(float(stress_A(GrowthModel.p_growth(4.0), _one(2.0))[0, 0]), 8.0)


def test_v_map_follows_the_shifted_power_formula():
    # (mu^2 + |Q|^2)^{(p-2)/4} Q with p=4, Q=2 is 4^{1/2} * 2
    model = GrowthModel.p_growth(4.0)
    assert math.isclose(float(v_map(model, _one(2.0))[0, 0]), 4.0)
    rng = np.random.default_rng(3)
    Q = rng.standard_normal((50, 2, 3))
    for m in (GrowthModel.p_growth(1.5, 0.1), GrowthModel.p_growth(3.0, 1.0)):
        V = v_map(m, Q)
        r2 = np.sum(Q * Q, axis=(-2, -1))
        expected = (m.mu**2 + r2) ** ((m.p - 2.0) / 2.0) * r2
        np.testing.assert_allclose(np.sum(V * V, axis=(-2, -1)), expected, rtol=1e-12)


@pytest.mark.parametrize("model", MODELS + ORLICZ_MODELS, ids=lambda m: m.label)
def test_zero_gradient_is_a_fixed_point(model):
    Z = np.zeros((2, 2))
    np.testing.assert_array_equal(stress_A(model, Z), Z)
    np.testing.assert_array_equal(v_map(model, Z), Z)
    assert energy_F(model, Z) == 0.0


def test_energy_hand_values():
    assert math.isclose(energy_F(QUADRATIC, np.array([[3.0, 0.0], [0.0, 0.0]])), 4.5)
    assert math.isclose(energy_F(GrowthModel.p_growth(3.0), _one(2.0)), 8.0 / 3.0)
    mu = 0.5
    expected = ((mu**2 + 1.0) ** 1.5 - mu**3) / 3.0
    assert math.isclose(energy_F(GrowthModel.p_growth(3.0, mu), _one(1.0)), expected)


@pytest.mark.parametrize("model", MODELS[::4] + ORLICZ_MODELS, ids=lambda m: m.label)
def test_stress_is_the_gradient_of_the_energy(model):
    rng = np.random.default_rng(11)
    Q = rng.standard_normal((20, 2, 2)) * 10.0 ** rng.uniform(-1, 1, (20, 1, 1))
    h = 1e-5 * np.sqrt(np.sum(Q * Q, axis=(-2, -1)))
    fd = np.empty_like(Q)
    for i in range(2):
        for j in range(2):
            E = np.zeros((1, 2, 2))
            E[0, i, j] = 1.0
            step = h[:, None, None] * E
            fd[:, i, j] = (energy_F(model, Q + step) - energy_F(model, Q - step)) / (2 * h)
    A = stress_A(model, Q)
    rel = np.linalg.norm((fd - A).reshape(20, -1), axis=1) / np.linalg.norm(
        A.reshape(20, -1), axis=1
    )
    assert np.max(rel) <= 1e-4


def test_non_finite_input_is_rejected():
    with pytest.raises(InputError):
        stress_A(QUADRATIC, np.array([[np.nan]]))


def test_conjugate_closed_forms():
    square, cube = OrliczFunction("power", 2.0), OrliczFunction("power", 3.0)
    assert math.isclose(conjugate(square, 3.0), 4.5)
    assert conjugate(square, 0.0) == 0.0
    assert math.isclose(conjugate(cube, 1.0), 2.0 / 3.0)


def test_conjugate_by_maximization_dominates_every_affine_minorant():
    phi = OrliczFunction("max_power", 1.5, q_exp=3.0)
    a = np.linspace(0.0, 20.0, 4001)
    for s in (0.3, 1.0, 4.0):
        star = conjugate(phi, s)
        brute = np.max(a * s - np.asarray(phi.value(a)))
        assert star >= brute - 1e-12
        assert star - brute < 1e-3


def test_young_gap_values():
    phi = OrliczFunction("power", 2.0)
    assert abs(young_gap(phi, 1.0, 1.0)) < 1e-15
    assert math.isclose(young_gap(phi, 2.0, 1.0), 0.5)
    assert young_gap(phi, 0.0, 0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(0.0, 100.0),
    b=st.floats(0.0, 100.0),
    p=st.sampled_from([1.25, 1.5, 2.0, 3.0, 4.0]),
)
def test_young_gap_is_non_negative(a, b, p):
    assert young_gap(OrliczFunction("power", p), a, b) >= -1e-8 * max(1.0, a * b)


@settings(max_examples=50, deadline=None)
@given(b=st.floats(0.0, 100.0))
def test_young_is_sharp_at_the_derivative(b):
    phi = OrliczFunction("carreau", 1.5, nu=1.0, nu_inf=0.1, mu=0.5)
    a = float(phi.first(b))
    assert abs(young_gap(phi, a, b)) <= 1e-8 * max(1.0, a * b)


def test_monotonicity_ratio_trivial_cases():
    rng = np.random.default_rng(0)
    Q, P = sample_matrix_pairs(rng, 100)
    np.testing.assert_allclose(monotonicity_ratio(QUADRATIC, Q, P).v_ratio, 1.0, rtol=1e-12)
    cube = GrowthModel.p_growth(3.0)
    assert math.isclose(monotonicity_ratio(cube, _one(1.0), _one(0.0)).v_ratio, 1.0)


def test_monotonicity_ratio_rejects_equal_arguments():
    with pytest.raises(DegenerateInputError):
        monotonicity_ratio(QUADRATIC, np.eye(2), np.eye(2))


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.label)
def test_monotonicity_envelope_is_positive_and_bounded(model):
    env = sample_envelope(model, "monotonicity", 5_000, seed=7)
    assert env.samples == 5_000
    assert env.lower > 0.0 and math.isfinite(env.upper)
    assert sample_envelope(model, "monotonicity", 5_000, seed=7) == env


def test_equivalence_ratio():
    square = OrliczFunction("power", 2.0)
    assert math.isclose(equiv_integral_ratio(square, [1.0, 0.0], [0.0, 1.0]), 1.0)
    cube = OrliczFunction("power", 3.0)
    v = np.array([0.3, -0.4])
    expected = float(cube.second(1.0)) / float(cube.second(0.5))
    assert math.isclose(equiv_integral_ratio(cube, v, v), expected, rel_tol=1e-10)
    # int_0^1 2 |(theta, 1 - theta)| dtheta in closed form, against phi''(2) = 4
    reference = 2.0 * (0.5 + math.sqrt(2.0) * math.log1p(math.sqrt(2.0)) / 4.0)
    ratio = equiv_integral_ratio(cube, [1.0, 0.0], [0.0, 1.0])
    assert math.isclose(ratio, 4.0 / reference, rel_tol=1e-9)


def test_equivalence_ratio_through_the_origin():
    phi = OrliczFunction("power", 1.5)
    assert equiv_integral_ratio(phi, [1.0, 0.0], [-1.0, 0.0]) > 0.0
    with pytest.raises(DegenerateInputError):
        equiv_integral_ratio(phi, [0.0, 0.0], [0.0, 0.0])


def test_lemma_t_quadratic_is_one_half():
    rng = np.random.default_rng(1)
    Q, P = sample_matrix_pairs(rng, 200)
    for h in (1e-3, 1.0, 7.0):
        np.testing.assert_allclose(lemma_t_ratio(QUADRATIC, Q, P, h), 0.5, atol=1e-12)


def test_lemma_t_hand_value():
    cube = GrowthModel.p_growth(3.0)
    assert math.isclose(lemma_t_ratio(cube, _one(0.0), _one(1.0), 0.1), 1.0 / 3.0)


def test_bregman_gap_matches_its_definition():
    model = GrowthModel.p_growth(3.0, 0.1)
    rng = np.random.default_rng(5)
    Q, P = sample_matrix_pairs(rng, 30)
    direct = energy_F(model, P) - energy_F(model, Q) - np.sum(
        stress_A(model, Q) * (P - Q), axis=(-2, -1)
    )
    np.testing.assert_allclose(bregman_gap(model, Q, P), direct, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_lemma_t_forms_have_the_right_signs(p):
    model = GrowthModel.p_growth(p, 0.1)
    rng = np.random.default_rng(int(p * 10))
    Q, P = sample_matrix_pairs(rng, 500)
    assert np.all(lemma_t_ratio(model, Q, P, 0.5) > 0.0)
    assert np.all(np.asarray(lemma_t_backward_ratio(model, P, Q, 0.5)) < 0.0)


def test_symmetric_form_sits_inside_the_measured_sandwich():
    model = GrowthModel.p_growth(3.0)
    rng = np.random.default_rng(9)
    now, nxt = sample_matrix_pairs(rng, 400)
    prev = 2.0 * now - nxt
    forward = Envelope.of(lemma_t_ratio(model, now, nxt, 1.0))
    backward = Envelope.of(-np.asarray(lemma_t_backward_ratio(model, prev, now, 1.0)))
    form = lemma_t_symmetric(model, prev, now, nxt, 1.0)
    assert np.all(form.within(forward, backward))


def test_symmetric_form_for_quadratic_energy():
    form = lemma_t_symmetric(QUADRATIC, _one(0.0), _one(1.0), _one(3.0), 1.0)
    # B(1, 3) - B(1, 0) = 4/2 - 1/2
    assert math.isclose(form.value, 1.5)
    assert math.isclose(form.forward_gap, 4.0)
    assert math.isclose(form.backward_gap, 1.0)


def test_lemma_t_rejects_equal_pair():
    with pytest.raises(DegenerateInputError):
        lemma_t_ratio(QUADRATIC, np.eye(2), np.eye(2), 1.0)
    with pytest.raises(InputError):
        lemma_t_ratio(QUADRATIC, np.eye(2), 2 * np.eye(2), 0.0)


def test_directional_ratio_on_a_smooth_gradient_field():
    x = np.linspace(0.0, 1.0, 64)
    grads = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)], axis=-1)[:, None, :]
    ratios = directional_ratio(GrowthModel.p_growth(3.0), grads, axis=0, steps=2)
    assert ratios.shape == (62,)
    assert np.all(ratios > 0.0)
    np.testing.assert_allclose(directional_ratio(QUADRATIC, grads, 0, 3), 0.5, atol=1e-12)


def test_hammer2_ratio_is_bounded():
    rng = np.random.default_rng(2)
    Q, P = sample_matrix_pairs(rng, 1000)
    np.testing.assert_allclose(hammer2_ratio(QUADRATIC, Q, P - Q), 1.0, rtol=1e-6)
    ratio = np.asarray(hammer2_ratio(GrowthModel.p_growth(3.0, 0.1), Q, P - Q))
    assert np.all(ratio > 0.0) and np.all(np.isfinite(ratio))


@pytest.mark.parametrize(
    "phi",
    [
        OrliczFunction("power", 1.25),
        OrliczFunction("power", 4.0, scale=2.0),
        OrliczFunction("max_power", 1.5, q_exp=3.0),
        OrliczFunction("carreau", 1.5, nu=1.0, nu_inf=0.1, mu=0.5),
    ],
    ids=lambda f: f.kind,
)
def test_delta2_envelope_is_finite_and_positive(phi):
    env = phi.delta2_envelope()
    assert env.samples == 241
    assert 0.0 < env.lower <= env.upper < math.inf


def test_power_delta2_is_exact():
    env = OrliczFunction("power", 3.0).delta2_envelope()
    assert math.isclose(env.lower, 6.0) and math.isclose(env.upper, 6.0)


def test_model_sections_round_trip():
    for model in MODELS[:3] + ORLICZ_MODELS:
        assert GrowthModel.from_section(model.to_section()) == model


def test_from_section_rejects_unknown_kind():
    with pytest.raises(InputError):
        GrowthModel.from_section({"variant": "orlicz", "kind": "cosh", "p": "2"})
    with pytest.raises(InputError):
        GrowthModel.from_section({"variant": "p_growth"})
