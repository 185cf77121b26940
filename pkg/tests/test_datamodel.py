from __future__ import annotations

import numpy as np
import pytest

from fetaleval.datamodel import (
    DEFAULT_SCHEMA,
    CaseMetadata,
    LabelSchema,
    LabelVolume,
    Point3,
    SchemaError,
    TissueLabel,
    binary_mask,
    default_schema,
    read_metadata_csv,
    world_coords,
)


def make_volume(data, spacing=(1.0, 1.0, 1.0), affine=None):
    data = np.asarray(data, dtype=np.uint8)
    if affine is None:
        affine = np.diag([spacing[0], spacing[1], spacing[2], 1.0])
    return LabelVolume(data=data, spacing=spacing, affine=affine)


class TestSchema:
    def test_default_has_eight_contiguous_codes(self):
        schema = default_schema()
        assert schema.codes == tuple(range(8))
        assert schema.name_of(0) == "Background"
        assert schema.name_of(2) == "GM"

    def test_ranked_labels_exclude_background(self):
        assert DEFAULT_SCHEMA.ranked_codes == tuple(range(1, 8))

    def test_gm_euler_target_is_two_others_one(self):
        targets = DEFAULT_SCHEMA.ec_targets
        assert targets[2] == 2
        assert all(targets[c] == 1 for c in (1, 3, 4, 5, 6, 7))

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "schema.json"
        DEFAULT_SCHEMA.to_json(path)
        loaded = LabelSchema.from_json(path)
        assert loaded == DEFAULT_SCHEMA

    def test_non_contiguous_codes_rejected(self):
        with pytest.raises(SchemaError):
            LabelSchema(labels=(TissueLabel(0, "a"), TissueLabel(2, "b")), ranked_codes=())

    def test_unknown_ranked_code_rejected(self):
        with pytest.raises(SchemaError):
            LabelSchema(labels=(TissueLabel(0, "a"),), ranked_codes=(3,))


class TestLabelVolume:
    def test_unknown_codes_are_hard_error(self):
        vol = make_volume(np.full((2, 2, 2), 9))
        with pytest.raises(SchemaError, match="9"):
            vol.validate_codes(DEFAULT_SCHEMA)

    def test_spacing_must_match_affine_norms(self):
        with pytest.raises(ValueError, match="spacing"):
            LabelVolume(
                data=np.zeros((2, 2, 2), dtype=np.uint8),
                spacing=(1.0, 1.0, 1.0),
                affine=np.diag([2.0, 1.0, 1.0, 1.0]),
            )

    def test_immutable_after_construction(self):
        vol = make_volume(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            vol.data[0, 0, 0] = 1
        with pytest.raises(ValueError):
            vol.affine[0, 0] = 5.0

    def test_non_integer_data_rejected(self):
        with pytest.raises(ValueError, match="integer"):
            LabelVolume(
                data=np.zeros((2, 2, 2), dtype=np.float32),
                spacing=(1, 1, 1),
                affine=np.eye(4),
            )


class TestWorldCoords:
    def test_identity_at_origin(self):
        vol = make_volume(np.zeros((3, 3, 3)))
        assert world_coords(vol, (0, 0, 0)) == Point3(0.0, 0.0, 0.0)

    def test_scaled_translated_affine(self):
        # 0.8 mm isotropic with translation (-100, -100, -100):
        # index (10, 0, 0) -> (0.8 * 10 - 100, -100, -100) = (-92, -100, -100)
        affine = np.diag([0.8, 0.8, 0.8, 1.0])
        affine[:3, 3] = (-100.0, -100.0, -100.0)
        vol = make_volume(np.zeros((16, 16, 16)), spacing=(0.8, 0.8, 0.8), affine=affine)
        p = world_coords(vol, (10, 0, 0))
        assert np.allclose([p.x, p.y, p.z], [-92.0, -100.0, -100.0])

    def test_pure_translation(self):
        affine = np.eye(4)
        affine[:3, 3] = (5.0, 6.0, 7.0)
        vol = make_volume(np.zeros((4, 4, 4)), affine=affine)
        p = world_coords(vol, (1, 2, 3))
        assert (p.x, p.y, p.z) == (6.0, 8.0, 10.0)

    def test_out_of_bounds_raises(self):
        vol = make_volume(np.zeros((2, 2, 2)))
        with pytest.raises(IndexError):
            world_coords(vol, (2, 0, 0))
        with pytest.raises(IndexError):
            world_coords(vol, (-1, 0, 0))

    def test_affine_additivity_for_identity_translation(self):
        affine = np.eye(4)
        affine[:3, 3] = (1.5, -2.0, 3.0)
        vol = make_volume(np.zeros((8, 8, 8)), affine=affine)
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.integers(0, 4, 3)
            b = rng.integers(0, 4, 3)
            pa = world_coords(vol, tuple(a)).as_array()
            pb = world_coords(vol, tuple(b)).as_array()
            p0 = world_coords(vol, (0, 0, 0)).as_array()
            pab = world_coords(vol, tuple(a + b)).as_array()
            assert np.allclose(pa + pb - p0, pab)


class TestBinaryMask:
    def test_all_zero_volume(self):
        vol = make_volume(np.zeros((3, 3, 3)))
        assert not binary_mask(vol, 3).any()

    def test_uniform_volume(self):
        vol = make_volume(np.full((3, 3, 3), 3))
        assert binary_mask(vol, 3).all()

    def test_two_voxel_enumeration(self):
        vol = make_volume(np.array([2, 3], dtype=np.uint8).reshape(2, 1, 1))
        assert binary_mask(vol, 2).ravel().tolist() == [True, False]

    def test_masks_partition_the_grid(self):
        rng = np.random.default_rng(11)
        vol = make_volume(rng.integers(0, 8, size=(6, 5, 4)))
        total = np.zeros(vol.dims, dtype=int)
        for code in DEFAULT_SCHEMA.codes:
            total += binary_mask(vol, code).astype(int)
        assert (total == 1).all()

    def test_unknown_code_rejected(self):
        vol = make_volume(np.zeros((2, 2, 2)))
        with pytest.raises(SchemaError):
            binary_mask(vol, 9)


class TestMetadata:
    def test_round_trip_csv(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text(
            "case_id,site,sr_method,ga_weeks,condition,quality,in_domain\n"
            "sub-001,KISPI,MIALSRTK,25.5,neurotypical,3.0,1\n"
            "sub-002,KCL,SVRTK,30.0,pathological,0.5,0\n"
        )
        meta = read_metadata_csv(path)
        assert meta["sub-001"].site == "KISPI"
        assert meta["sub-001"].condition == "Neurotypical"
        assert meta["sub-001"].in_domain is True
        assert not meta["sub-001"].is_poor_quality
        assert meta["sub-002"].is_poor_quality
        assert meta["sub-002"].site_sr == "KCL-SVRTK"

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("case_id,site\nx,KISPI\n")
        with pytest.raises(ValueError, match="header"):
            read_metadata_csv(path)

    def test_bad_condition_rejected(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text(
            "case_id,site,sr_method,ga_weeks,condition,quality,in_domain\n"
            "x,KISPI,MIALSRTK,25.5,healthy,3.0,1\n"
        )
        with pytest.raises(ValueError, match="condition"):
            read_metadata_csv(path)

    @pytest.mark.parametrize(
        "field,value",
        [("ga_weeks", 50.0), ("ga_weeks", 10.0), ("quality", 4.5), ("quality", -0.1)],
    )
    def test_range_checks(self, field, value):
        kwargs = dict(
            case_id="x",
            site="CHUV",
            sr_method="NiftyMIC",
            ga_weeks=28.0,
            condition="Pathological",
            quality=2.0,
            in_domain=False,
        )
        kwargs[field] = value
        with pytest.raises(ValueError):
            CaseMetadata(**kwargs)
