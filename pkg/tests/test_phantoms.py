from __future__ import annotations

import numpy as np
import pytest

from fetaleval.phantoms import (
    ORACLE_VOXEL_CAP,
    OracleScopeError,
    PhantomSpec,
    PhantomSpecError,
    brute_components,
    brute_edt,
    brute_hausdorff,
    generate,
)
from fetaleval.segmetrics import edt, hd95
from fetaleval.topology import betti_numbers, euler_characteristic


class TestGenerate:
    def test_zero_radius_ball_is_one_voxel(self):
        vol = generate(PhantomSpec(kind="SolidBall", dims=(9, 9, 9), radii=(0.0,)))
        assert int((vol.data != 0).sum()) == 1

    def test_hollow_sphere_topology(self):
        vol = generate(PhantomSpec(kind="HollowSphere", dims=(26, 26, 26)))
        t = betti_numbers(vol.data != 0)
        assert (t.b0, t.b1, t.b2) == (1, 0, 1)

    def test_torus_topology(self):
        vol = generate(PhantomSpec(kind="Torus", dims=(30, 30, 30)))
        t = betti_numbers(vol.data != 0)
        assert (t.b0, t.b1, t.b2) == (1, 1, 0)

    def test_nested_shells_have_all_seven_labels(self):
        vol = generate(PhantomSpec(kind="NestedShells", dims=(48, 48, 48)))
        present = set(np.unique(vol.data).tolist())
        assert present == set(range(8))

    def test_analytic_euler_for_every_kind(self):
        expectations = {
            "SolidBall": 1,
            "HollowSphere": 2,
            "Torus": 0,
            "TwoComponents": 2,
        }
        for kind, expected in expectations.items():
            vol = generate(PhantomSpec(kind=kind, dims=(32, 32, 32)))
            assert euler_characteristic(vol.data != 0) == expected, kind

    def test_overflowing_shape_rejected(self):
        with pytest.raises(PhantomSpecError, match="overflow"):
            generate(PhantomSpec(kind="SolidBall", dims=(10, 10, 10), radii=(6.0,)))

    def test_deterministic_voxelization(self):
        spec = PhantomSpec(kind="Torus", dims=(24, 24, 24))
        assert np.array_equal(generate(spec).data, generate(spec).data)

    def test_unknown_kind_rejected(self):
        with pytest.raises(PhantomSpecError):
            PhantomSpec(kind="Cube")

    def test_spacing_carried_into_affine(self):
        vol = generate(PhantomSpec(kind="SolidBall", dims=(12, 12, 12), spacing=(0.5, 0.8, 1.2)))
        assert np.allclose(np.diag(vol.affine), (0.5, 0.8, 1.2, 1.0))


class TestBruteComponents:
    def test_empty(self):
        assert brute_components(np.zeros((3, 3, 3), dtype=bool), 6) == 0

    def test_diagonal_pair_connectivity(self):
        m = np.zeros((2, 2, 2), dtype=bool)
        m[0, 0, 0] = True
        m[1, 1, 1] = True
        assert brute_components(m, 26) == 1
        assert brute_components(m, 6) == 2

    def test_size_cap(self):
        with pytest.raises(OracleScopeError):
            brute_components(np.zeros((33, 33, 33), dtype=bool), 6)
        assert ORACLE_VOXEL_CAP == 32 ** 3

    def test_bad_connectivity(self):
        with pytest.raises(ValueError):
            brute_components(np.zeros((2, 2, 2), dtype=bool), 18)


class TestOracleAgreement:
    def test_brute_hausdorff_identical_masks(self):
        m = np.zeros((6, 6, 6), dtype=bool)
        m[2:4, 2:4, 2:4] = True
        assert brute_hausdorff(m, m, (1, 1, 1)) == 0.0

    def test_translated_copies_constant_multiset(self):
        # single voxels d apart: every pooled distance equals d
        a = np.zeros((9, 3, 3), dtype=bool)
        b = np.zeros((9, 3, 3), dtype=bool)
        a[1, 1, 1] = True
        b[6, 1, 1] = True
        assert brute_hausdorff(a, b, (2.0, 1.0, 1.0)) == 10.0

    def test_hd95_equivalence_on_seeded_pairs(self):
        rng = np.random.default_rng(2001)
        checked = 0
        while checked < 50:
            dims = tuple(int(v) for v in rng.integers(4, 17, 3))
            a = rng.random(dims) < rng.uniform(0.05, 0.3)
            b = rng.random(dims) < rng.uniform(0.05, 0.3)
            if not a.any() or not b.any():
                continue
            spacing = tuple(rng.uniform(0.3, 2.5, 3))
            assert abs(hd95(a, b, spacing) - brute_hausdorff(a, b, spacing)) < 1e-9
            checked += 1

    def test_edt_equivalence_on_seeded_masks(self):
        rng = np.random.default_rng(2002)
        checked = 0
        while checked < 30:
            dims = tuple(int(v) for v in rng.integers(3, 15, 3))
            m = rng.random(dims) < rng.uniform(0.05, 0.5)
            if not m.any():
                continue
            spacing = tuple(rng.uniform(0.3, 2.5, 3))
            assert np.max(np.abs(edt(m, spacing) - brute_edt(m, spacing))) < 1e-9
            checked += 1

    def test_component_equivalence_on_seeded_masks(self):
        from scipy import ndimage

        rng = np.random.default_rng(2003)
        for _ in range(30):
            dims = tuple(int(v) for v in rng.integers(3, 13, 3))
            m = rng.random(dims) < rng.uniform(0.1, 0.7)
            assert brute_components(m, 26) == ndimage.label(m, structure=np.ones((3, 3, 3)))[1]
            assert brute_components(m, 6) == ndimage.label(m)[1]
