import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harness import (
    AbsorptionOccurred,
    Box,
    Epoch,
    EpochList,
    HeightField,
    ModelParams,
    backward_weights,
    generate_epochs,
    noise_variance_accumulator,
    reconstruct,
    reconstruct_all,
    run_epochs,
    simulate,
    survival_mass,
)
from harness.verify import survival_proxy_box

from conftest import random_field, random_instance


class TestBackwardWeights:
    def test_no_epochs(self, nn1d, params_half):
        box = Box((-2,), (2,), 2)
        ep = EpochList.from_epochs((0.0, 1.0), [])
        table = backward_weights(ep, box, (0,), params_half, nn1d)
        assert table.b_final == {(0,): 1.0}
        assert not table.a_killed and not table.a_absorbed
        assert table.total_mass() == 1.0

    def test_one_epoch_split(self, nn1d, params_half):
        box = Box((-2,), (2,), 2)
        ep = EpochList.from_epochs((0.0, 1.0), [Epoch((0,), 0.5, 0.9)])
        table = backward_weights(ep, box, (0,), params_half, nn1d)
        assert table.a_killed == {0: ((0,), pytest.approx(0.5))}
        assert table.b_final == {(-1,): pytest.approx(0.25), (1,): pytest.approx(0.25)}
        assert not table.a_absorbed

    def test_epoch_off_origin_is_noop(self, nn1d, params_half):
        box = Box((-2,), (2,), 2)
        ep = EpochList.from_epochs((0.0, 1.0), [Epoch((2,), 0.5, 0.9)])
        table = backward_weights(ep, box, (0,), params_half, nn1d)
        assert table.b_final == {(0,): 1.0}
        assert not table.a_killed

    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=25, deadline=None)
    def test_mass_conservation(self, seed, nn1d, params_half):
        box = Box((-3,), (3,), 2)
        ep = generate_epochs(box, (0.0, 6.0), params_half, seed=seed)
        table = backward_weights(ep, box, (0,), params_half, nn1d)
        assert table.total_mass() == pytest.approx(1.0, abs=1e-12)

    def test_per_epoch_killed_fraction(self, nn1d, params_half):
        # killed mass at an epoch is exactly (1 - alpha) times the mass alive
        # at that site over the remaining suffix of the window
        box = Box((-4,), (4,), 2)
        epochs = generate_epochs(box, (0.0, 5.0), params_half, seed=3)
        i = (0,)
        table = backward_weights(epochs, box, i, params_half, nn1d)
        for e, (site, mass) in table.a_killed.items():
            tau = float(epochs.times[e])
            _, suffix = epochs.split(tau)  # epochs strictly after tau
            pre = backward_weights(suffix, box, i, params_half, nn1d)
            assert mass == params_half.h * pre.b_final.get(site, 0.0)

    def test_weights_ignore_noise_marks(self, nn1d, params_half):
        box = Box((-3,), (3,), 2)
        epochs = generate_epochs(box, (0.0, 4.0), params_half, seed=11)
        permuted = epochs.with_noises(epochs.noises[::-1].copy())
        t1 = backward_weights(epochs, box, (1,), params_half, nn1d)
        t2 = backward_weights(permuted, box, (1,), params_half, nn1d)
        assert t1.b_final == t2.b_final
        assert t1.a_killed == t2.a_killed
        assert t1.a_absorbed == t2.a_absorbed

    def test_markov_splice(self, nn1d, params_half):
        # weights over the whole window compose through any interior time
        box = Box((-2,), (2,), 2)
        epochs = generate_epochs(box, (0.0, 4.0), params_half, seed=13)
        lower, upper = epochs.split(2.0)
        for i in box.sites():
            full = backward_weights(epochs, box, i, params_half, nn1d).b_final
            top = backward_weights(upper, box, i, params_half, nn1d).b_final
            composed: dict = {}
            for k, w_top in top.items():
                bottom = backward_weights(lower, box, k, params_half, nn1d).b_final
                for j, w_bot in bottom.items():
                    composed[j] = composed.get(j, 0.0) + w_top * w_bot
            sites = set(full) | set(composed)
            for j in sites:
                assert full.get(j, 0.0) == pytest.approx(composed.get(j, 0.0), abs=1e-12)


class TestReconstruct:
    def test_no_epochs_returns_initial(self, nn1d, params_half):
        box = Box((-2,), (2,), 2)
        z = HeightField({s: float(s[0]) for s in box.sites()})
        y = HeightField.zeros(box.shell(2))
        d = HeightField.zeros(box.sites())
        ep = EpochList.from_epochs((0.0, 1.0), [])
        value, (A, B, C, D) = reconstruct(ep, box, (1,), z, y, d, params_half, nn1d)
        assert (A, B, C) == (0.0, 0.0, 0.0)
        assert D == value == 1.0

    def test_one_epoch_matches_update_rule(self, nn1d, params_half):
        rng = np.random.default_rng(43)
        box = Box((-1,), (1,), 2)
        z = random_field(box.sites(), rng)
        y = random_field(box.shell(2), rng)
        d = random_field(box.sites(), rng)
        noise = 0.37
        ep = EpochList.from_epochs((0.0, 1.0), [Epoch((0,), 0.5, noise)])
        value, _ = reconstruct(ep, box, (0,), z, y, d, params_half, nn1d)
        expected = (0.5 * (0.5 * z.value((-1,)) + 0.5 * z.value((1,)))
                    + 0.5 * d.value((0,)) + noise)
        assert value == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_forward_simulation(self, seed, nn1d, params_half):
        rng = np.random.default_rng(seed + 900)
        box = Box((-3,), (2,), 2)
        z = random_field(box.sites(), rng)
        y = random_field(box.shell(2), rng)
        d = random_field(box.sites(), rng)
        final, epochs = simulate(box, z, y, d, params_half, nn1d, (0.0, 200 / 6), seed=seed)
        for i in box.sites():
            value, _ = reconstruct(epochs, box, i, z, y, d, params_half, nn1d)
            assert value == pytest.approx(final.value(i), abs=1e-9)

    def test_reconstruct_all_bit_identical(self, params_half, nn2d):
        rng = np.random.default_rng(47)
        box = Box((0, 0), (3, 3), 2)
        z = random_field(box.sites(), rng)
        y = random_field(box.shell(2), rng)
        d = random_field(box.sites(), rng)
        epochs = generate_epochs(box, (0.0, 6.0), params_half, seed=17)
        values, terms = reconstruct_all(epochs, box, z, y, d, params_half, nn2d)
        for idx, i in enumerate(box.sites()):
            value, (A, B, C, D) = reconstruct(epochs, box, i, z, y, d, params_half, nn2d)
            assert value == values[idx]
            assert (A, B, C, D) == (terms[0][idx], terms[1][idx], terms[2][idx], terms[3][idx])


class TestSurvivalMass:
    def test_empty_window_is_one(self, nn1d, params_half):
        box = survival_proxy_box((0,), 1.0, nn1d)
        ep = EpochList.from_epochs((0.0, 1.0), [])
        assert survival_mass(ep, box, (0,), params_half, nn1d) == 1.0

    def test_mean_matches_generating_function(self, nn1d, params_half):
        # killed-count over a window of length u is Poisson(u); mean survival
        # is exp(-u (1 - alpha))
        u = 2.0
        box = survival_proxy_box((0,), u, nn1d)
        n_seeds = 2000
        values = []
        for seed in range(n_seeds):
            ep = generate_epochs(box, (0.0, u), params_half, seed=seed)
            values.append(survival_mass(ep, box, (0,), params_half, nn1d))
        mean = np.mean(values)
        se = np.std(values, ddof=1) / math.sqrt(n_seeds)
        assert abs(mean - math.exp(-1.0)) <= 5 * se

    def test_monotone_in_window_length(self, nn1d, params_half):
        box = survival_proxy_box((0,), 4.0, nn1d)
        epochs = generate_epochs(box, (0.0, 4.0), params_half, seed=71)
        values = []
        for u in (1.0, 2.0, 3.0, 4.0):
            lower, upper = (epochs.split(4.0 - u) if u < 4.0 else (None, epochs))
            values.append(survival_mass(upper, box, (0,), params_half, nn1d))
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_absorption_raises(self, nn1d, params_half):
        box = Box((0,), (0,), 2)
        ep = generate_epochs(box, (0.0, 50.0), params_half, seed=5)
        assert len(ep) > 0
        with pytest.raises(AbsorptionOccurred):
            survival_mass(ep, box, (0,), params_half, nn1d)


class TestNoiseVariance:
    def test_no_epochs_zero(self, nn1d, params_half):
        box = Box((-2,), (2,), 2)
        ep = EpochList.from_epochs((0.0, 1.0), [])
        assert noise_variance_accumulator(ep, box, (0,), params_half, nn1d) == 0.0

    def test_single_epoch_is_sigma2(self, nn1d, params_half):
        box = Box((-2,), (2,), 2)
        ep = EpochList.from_epochs((0.0, 1.0), [Epoch((0,), 0.5, 0.0)])
        v = noise_variance_accumulator(ep, box, (0,), params_half, nn1d)
        assert v == pytest.approx(params_half.sigma2, abs=1e-15)

    @pytest.mark.parametrize("alpha", [0.5, 0.9])
    def test_bounded_by_sigma2_over_h(self, alpha, nn1d):
        params = ModelParams(alpha, 0.5)
        bound = params.sigma2 / params.h
        box = survival_proxy_box((0,), 2.0, nn1d)
        worst = 0.0
        for seed in range(300):
            ep = generate_epochs(box, (0.0, 2.0), params, seed=seed)
            worst = max(worst, noise_variance_accumulator(ep, box, (0,), params, nn1d))
        assert worst <= bound + 1e-12


class TestDualityRandomInstances:
    @pytest.mark.parametrize("seed", range(6))
    def test_forward_equals_backward(self, seed):
        box, kernel, params, d, y, z = random_instance(seed)
        rng = np.random.default_rng(seed)
        length = float(rng.uniform(5.0, 20.0))
        final, epochs = simulate(box, z, y, d, params, kernel, (0.0, length), seed=seed + 1)
        values, _ = reconstruct_all(epochs, box, z, y, d, params, kernel)
        forward = final.vector(box.sites())
        assert np.max(np.abs(forward - values)) <= 1e-9
