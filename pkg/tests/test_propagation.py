import numpy as np
import pytest

from onlinevis.misc.errors import ConfigurationError, ContractError
from onlinevis.propagation import InstanceState, PriorPropagation, PropagationConfig
from onlinevis.tensorcore import F, RngState, Tensor, check_mode, parameter


WIDTH, QUERIES, CLASSES = 8, 5, 3


def make_prior(seed: int=0, **config) -> PriorPropagation:
    return PriorPropagation(WIDTH, QUERIES, CLASSES, PropagationConfig(**config), RngState(seed))


def empty_state(depth: int=4) -> InstanceState:
    return InstanceState.empty(history_depth=depth, memory_frames=4, memory_tokens=4)


def test_init_queries_are_deterministic_and_inside_the_unit_square():
    q0, ref0 = make_prior(seed=3).init_queries()
    q0_again, ref0_again = make_prior(seed=3).init_queries()
    assert q0.shape == (QUERIES, WIDTH) and ref0.shape == (QUERIES, 2)
    assert ((ref0.data > 0) & (ref0.data < 1)).all()
    np.testing.assert_array_equal(q0.data, q0_again.data)
    np.testing.assert_array_equal(ref0.data, ref0_again.data)


def test_init_queries_with_zero_ref_projection_start_in_the_centre():
    prior = make_prior()
    prior.ref_proj.weight.data[...] = 0.0
    _, ref0 = prior.init_queries()
    np.testing.assert_allclose(ref0.data, 0.5)


def test_propagate_queries_hands_over_the_last_embeddings():
    prior = make_prior()
    state = empty_state()
    with pytest.raises(ContractError):
        prior.propagate_queries(state)
    state.q = parameter(RngState(1).normal((QUERIES, WIDTH)))
    assert prior.propagate_queries(state) is state.q


def test_gradient_reaches_the_previous_frame_through_the_hand_off():
    with check_mode():
        prior = make_prior()
        q_prev = parameter(RngState(2).normal((QUERIES, WIDTH)))
        state = empty_state()
        state.q = F.mul(q_prev, 1.0)
        ref = prior.propagate_reference_points(prior.propagate_queries(state), np.full((QUERIES, 2), 0.4))
        F.sum(ref).backward()
        assert np.abs(q_prev.grad).sum() > 0
        assert np.abs(prior.ref_proj.weight.grad).sum() > 0


def test_offset_mode_with_zero_offset_is_the_identity():
    with check_mode():
        prior = make_prior()
        prior.ref_proj.weight.data[...] = 0.0
        ref = RngState(3).uniform(0.05, 0.95, (QUERIES, 2))
        q = Tensor(RngState(4).normal((QUERIES, WIDTH)))
        out = ref
        for _ in range(10):
            out = prior.propagate_reference_points(q, out, mode='offset').data
        np.testing.assert_allclose(out, ref, atol=1e-9)


def test_offset_mode_direct_formula():
    with check_mode():
        prior = make_prior()
        prior.ref_proj.weight.data[...] = 0.0
        prior.ref_proj.bias.data[...] = [2.0, -2.0]
        ref = prior.propagate_reference_points(Tensor(np.zeros((1, WIDTH))), [[0.5, 0.5]], mode='offset')
        np.testing.assert_allclose(ref.data[0], [0.8808, 0.1192], atol=1e-4)


def test_literal_mode_is_confined_to_a_narrow_band():
    rng = RngState(5)
    with check_mode():
        prior = make_prior(ref_mode='literal')
        for _ in range(20):
            q = Tensor(rng.normal((QUERIES, WIDTH)))
            ref = prior.propagate_reference_points(q, rng.uniform(0.01, 0.99, (QUERIES, 2))).data
            assert ((ref > 0.5) & (ref < 0.7311)).all()


def test_reference_points_never_leave_the_open_unit_square():
    rng = RngState(6)
    for mode in ('offset', 'literal'):
        prior = make_prior(seed=7, ref_mode=mode)
        prior.ref_proj.weight.data[...] = rng.normal((WIDTH, 2), scale=5.0)
        ref = rng.uniform(0, 1, (QUERIES, 2))
        ref[0] = [0.0, 1.0]
        for _ in range(10_000):
            ref = prior.propagate_reference_points(Tensor(rng.normal((QUERIES, WIDTH), scale=4.0)), ref).data
            assert ((ref > 0) & (ref < 1)).all()


def test_class_prior_without_history_returns_c_hat():
    prior = make_prior()
    state = empty_state()
    c_hat = Tensor(RngState(8).uniform(0.05, 0.95, (QUERIES, CLASSES)))
    c = prior.class_prior(c_hat, state)
    assert c is c_hat
    assert len(state.class_history) == 1


def test_class_prior_with_one_frame_multiplies_by_it():
    with check_mode():
        prior = make_prior()
        state = empty_state()
        previous = RngState(9).uniform(0.05, 0.95, (QUERIES, CLASSES))
        state.class_history.append(previous)
        c_hat = Tensor(RngState(10).uniform(0.05, 0.95, (QUERIES, CLASSES)))
        np.testing.assert_allclose(prior.class_prior(c_hat, state).data, c_hat.data * previous, atol=1e-12)


def test_class_prior_with_identical_history_rows():
    with check_mode():
        prior = make_prior()
        prior.temporal_weight.data[...] = RngState(11).normal((4, 4))
        state = empty_state()
        p = RngState(12).uniform(0.05, 0.95, (QUERIES, CLASSES))
        for _ in range(3):
            state.class_history.append(p.copy())
        c_hat = Tensor(RngState(13).uniform(0.05, 0.95, (QUERIES, CLASSES)))
        np.testing.assert_allclose(prior.class_prior(c_hat, state).data, c_hat.data * p, atol=1e-12)


def test_class_prior_is_a_convex_combination_within_bounds():
    rng = RngState(14)
    prior = make_prior()
    prior.temporal_weight.data[...] = rng.normal((4, 4))
    state = empty_state()
    for _ in range(6):
        c_hat = Tensor(rng.uniform(0.01, 1.0, (QUERIES, CLASSES)))
        history = np.stack(state.class_history) if state.class_history else None
        c = prior.class_prior(c_hat, state).data
        assert ((c >= 0) & (c <= 1)).all()
        if history is not None:
            prior_rows = c / np.maximum(c_hat.data, 1e-12)
            assert (prior_rows <= history.max(axis=0) + 1e-5).all()
            assert (prior_rows >= history.min(axis=0) - 1e-5).all()
    assert len(state.class_history) == 4


def test_class_history_receives_no_gradient():
    with check_mode():
        prior = make_prior()
        state = empty_state()
        c0 = parameter(RngState(15).uniform(0.1, 0.9, (QUERIES, CLASSES)))
        prior.class_prior(c0, state)
        c1 = parameter(RngState(16).uniform(0.1, 0.9, (QUERIES, CLASSES)))
        F.sum(prior.class_prior(c1, state)).backward()
        assert c0.grad is None
        assert c1.grad is not None
        assert not isinstance(state.class_history[0], Tensor)


def test_disabled_class_prior_passes_scores_through():
    prior = make_prior(use_class_prior=False)
    state = empty_state()
    state.class_history.append(np.full((QUERIES, CLASSES), 0.5))
    c_hat = Tensor(np.full((QUERIES, CLASSES), 0.3))
    np.testing.assert_array_equal(prior.class_prior(c_hat, state).data, c_hat.data)


def test_propagation_config_validates():
    with pytest.raises(ConfigurationError):
        PropagationConfig(history_depth=0)
    with pytest.raises(ConfigurationError):
        PropagationConfig(ref_mode='sideways')


def test_state_footprint_is_bounded():
    state = empty_state(depth=2)
    for _ in range(10):
        state.class_history.append(np.zeros((QUERIES, CLASSES)))
    assert len(state.class_history) == 2
    assert state.footprint() == 2 * QUERIES * CLASSES
