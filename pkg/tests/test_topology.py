from __future__ import annotations

import numpy as np
import pytest

from fetaleval.phantoms import PhantomSpec, brute_components, generate
from fetaleval.topology import (
    DEFAULT_EC_TARGETS,
    TopologySummary,
    betti_numbers,
    euler_characteristic,
    euler_difference,
)


def ball_mask(dims=(16, 16, 16), radius=5.0):
    return generate(PhantomSpec(kind="SolidBall", dims=dims, radii=(radius,))).data != 0


class TestEulerCharacteristic:
    def test_empty_mask_is_zero(self):
        assert euler_characteristic(np.zeros((4, 4, 4), dtype=bool)) == 0

    def test_single_voxel_counts_8_12_6_1(self):
        mask = np.zeros((3, 3, 3), dtype=bool)
        mask[1, 1, 1] = True
        assert euler_characteristic(mask) == 1

    def test_solid_ball(self):
        assert euler_characteristic(ball_mask()) == 1

    def test_hollow_sphere_is_two(self):
        vol = generate(PhantomSpec(kind="HollowSphere", dims=(24, 24, 24)))
        assert euler_characteristic(vol.data != 0) == 2

    def test_torus_is_zero(self):
        vol = generate(PhantomSpec(kind="Torus", dims=(32, 32, 32)))
        assert euler_characteristic(vol.data != 0) == 0

    def test_additive_over_disjoint_components(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = rng.random((6, 6, 6)) < 0.3
            b = rng.random((6, 6, 6)) < 0.3
            combined = np.zeros((14, 6, 6), dtype=bool)
            combined[:6] = a
            combined[8:] = b  # two-voxel gap: not even diagonally adjacent
            assert euler_characteristic(combined) == euler_characteristic(a) + euler_characteristic(b)


class TestBettiNumbers:
    @pytest.mark.parametrize(
        "kind,expected",
        [("SolidBall", (1, 0, 0)), ("HollowSphere", (1, 0, 1)), ("Torus", (1, 1, 0))],
    )
    def test_phantom_shapes(self, kind, expected):
        vol = generate(PhantomSpec(kind=kind, dims=(28, 28, 28)))
        t = betti_numbers(vol.data != 0)
        assert (t.b0, t.b1, t.b2) == expected
        assert t.euler == t.b0 - t.b1 + t.b2

    def test_two_components(self):
        vol = generate(PhantomSpec(kind="TwoComponents", dims=(40, 24, 24)))
        assert betti_numbers(vol.data != 0).b0 == 2

    def test_empty(self):
        t = betti_numbers(np.zeros((4, 4, 4), dtype=bool))
        assert (t.b0, t.b1, t.b2, t.euler) == (0, 0, 0, 0)

    def test_full_grid(self):
        t = betti_numbers(np.ones((4, 4, 4), dtype=bool))
        assert (t.b0, t.b1, t.b2, t.euler) == (1, 0, 0, 1)

    def test_random_masks_match_flood_fill_oracles(self):
        # Cavity oracle: pad with one background layer so every
        # border-touching background pocket merges into a single outer
        # component; cavities are whatever flood fill finds beyond it.
        rng = np.random.default_rng(123)
        for _ in range(60):
            dims = tuple(rng.integers(3, 14, 3))
            mask = rng.random(dims) < rng.uniform(0.1, 0.7)
            t = betti_numbers(mask)
            assert t.euler == t.b0 - t.b1 + t.b2
            assert t.b0 == brute_components(mask, 26)
            padded = np.pad(mask, 1, constant_values=False)
            expected_b2 = brute_components(~padded, 6) - 1 if mask.size else 0
            assert t.b2 == expected_b2

    def test_summary_invariant_enforced(self):
        with pytest.raises(ValueError):
            TopologySummary(b0=1, b1=0, b2=0, euler=2)
        with pytest.raises(ValueError):
            TopologySummary(b0=-1, b1=0, b2=0, euler=-1)


class TestEulerDifference:
    def test_single_component_matches_most_targets(self):
        mask = ball_mask()
        assert euler_difference(mask, 3) == 0  # WM expects one component

    def test_gm_expects_two_components(self):
        mask = ball_mask()
        assert euler_difference(mask, 2) == 1

    def test_two_balls_plus_torus_against_single_target(self):
        two = generate(PhantomSpec(kind="TwoComponents", dims=(40, 24, 24))).data != 0
        torus = generate(PhantomSpec(kind="Torus", dims=(32, 32, 32))).data != 0
        combined = np.zeros((40, 24 + 34, 32), dtype=bool)
        combined[:, :24, :24] |= two
        combined[:32, 26:58, :] |= torus
        # EC = 2 (two balls) + 0 (torus) = 2; WM target is 1
        assert euler_characteristic(combined) == 2
        assert euler_difference(combined, 3) == 1

    def test_empty_prediction_scores_target(self):
        empty = np.zeros((4, 4, 4), dtype=bool)
        assert euler_difference(empty, 2) == 2
        assert euler_difference(empty, 5) == 1

    def test_unknown_code_rejected(self):
        with pytest.raises(KeyError):
            euler_difference(np.zeros((2, 2, 2), dtype=bool), 0)

    def test_default_targets_shape(self):
        assert DEFAULT_EC_TARGETS == {1: 1, 2: 2, 3: 1, 4: 1, 5: 1, 6: 1, 7: 1}
