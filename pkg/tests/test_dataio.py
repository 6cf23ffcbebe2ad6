import math

import numpy as np
import pytest

from geocontrast.dataio import (LabeledDataset, PairDataset, SplitSpec,
                                SyntheticWorldSpec, derived_rng, generate_world,
                                jitter, read_labels, read_pairs, split,
                                write_labels, write_pairs)


def haversine_km(a, b):
    """Great-circle distance in km between (n,2) lon/lat degree arrays."""
    lon1, lat1 = np.radians(a[:, 0]), np.radians(a[:, 1])
    lon2, lat2 = np.radians(b[:, 0]), np.radians(b[:, 1])
    h = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * 6371.0 * np.arcsin(np.sqrt(h))


class TestGenerateWorld:
    def test_deterministic_per_seed(self):
        spec = SyntheticWorldSpec(seed=5)
        p1, l1 = generate_world(spec, 50)
        p2, l2 = generate_world(SyntheticWorldSpec(seed=5), 50)
        assert p1.coords.tobytes() == p2.coords.tobytes()
        assert p1.feats.tobytes() == p2.feats.tobytes()
        assert l1.targets.tobytes() == l2.targets.tobytes()

    def test_feature_at_bump_center_is_mixing_row(self):
        spec = SyntheticWorldSpec(bump_count=4, bump_width=0.01, noise_sigma=0.0,
                                  seed=1)
        # evaluate the noiseless feature map directly at a center
        from geocontrast.dataio import bump_activations
        act = bump_activations(spec.bump_centers[2:3], spec)
        feats = act @ spec.mixing
        # narrow bumps: activation is one-hot in the limit
        np.testing.assert_allclose(feats[0], spec.mixing[2], atol=1e-6)

    def test_area_uniform_sampling(self):
        _, labels = generate_world(SyntheticWorldSpec(seed=3), 100_000)
        frac = np.mean(np.abs(labels.coords[:, 1]) > 60.0)
        # spherical-cap area: P(|lat| > 60) = 1 - sin(60 deg)
        assert abs(frac - (1.0 - math.sin(math.radians(60)))) < 0.01

    def test_target_exactly_linear_in_activations(self):
        from geocontrast.dataio import bump_activations
        spec = SyntheticWorldSpec(seed=9)
        _, labels = generate_world(spec, 100)
        act = bump_activations(labels.coords, spec)
        np.testing.assert_allclose(labels.targets, act @ spec.readout, atol=1e-12)

    def test_features_smooth_in_space(self):
        # nearby points have closer features than random pairs, by a wide margin
        spec = SyntheticWorldSpec(seed=13, noise_sigma=0.0)
        pairs, _ = generate_world(spec, 4000)
        rng = np.random.default_rng(0)
        i = rng.integers(0, 4000, 40_000)
        j = rng.integers(0, 4000, 40_000)
        # elementwise angular distance without the 40k x 40k cross matrix
        def unit(c):
            lon, lat = np.radians(c[:, 0]), np.radians(c[:, 1])
            return np.column_stack([np.cos(lat) * np.cos(lon),
                                    np.cos(lat) * np.sin(lon), np.sin(lat)])
        dots = (unit(pairs.coords[i]) * unit(pairs.coords[j])).sum(axis=1)
        d = np.arccos(np.clip(dots, -1.0, 1.0))
        feat_d = np.linalg.norm(pairs.feats[i] - pairs.feats[j], axis=1)
        near = d < spec.bump_width / 4
        assert near.sum() >= 10
        assert feat_d[near].mean() * 2 < feat_d[~near].mean()

    def test_world_spec_json_round_trip(self):
        spec = SyntheticWorldSpec(seed=21)
        again = SyntheticWorldSpec.from_json(spec.to_json())
        assert np.array_equal(spec.bump_centers, again.bump_centers)
        assert np.array_equal(spec.mixing, again.mixing)
        assert np.array_equal(spec.readout, again.readout)
        p1, _ = generate_world(spec, 20)
        p2, _ = generate_world(again, 20)
        assert p1.feats.tobytes() == p2.feats.tobytes()

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            SyntheticWorldSpec(bump_width=0.0)
        with pytest.raises(ValueError):
            generate_world(SyntheticWorldSpec(), 1)


class TestJitter:
    def test_zero_width_rng_leaves_coordinate_unchanged(self):
        class DegenerateRng:
            def uniform(self, lo, hi, size=None):
                return np.zeros(size)

        coords = np.array([[10.0, 20.0]])
        np.testing.assert_array_equal(jitter(coords, DegenerateRng()), coords)

    def test_equator_displacement_bounded(self):
        rng = np.random.default_rng(2)
        coords = np.tile([[0.0, 0.0]], (10_000, 1))
        moved = jitter(coords, rng)
        d = haversine_km(coords, moved)
        assert d.max() <= 1.42 + 0.02  # diagonal of the +-0.009 deg box

    def test_displacement_bounded_up_to_lat85(self):
        rng = np.random.default_rng(4)
        lat = rng.uniform(-85, 85, 100_000)
        lon = rng.uniform(-180, 180, 100_000)
        coords = np.column_stack([lon, lat])
        d = haversine_km(coords, jitter(coords, rng))
        assert d.max() <= 1.5

    def test_polar_latitude_clamped(self):
        rng = np.random.default_rng(6)
        coords = np.tile([[0.0, 89.999]], (1000, 1))
        moved = jitter(coords, rng)
        assert np.all(moved[:, 1] <= 90.0)
        assert np.all(moved[:, 0] >= -180.0) and np.all(moved[:, 0] < 180.0)


class TestSplit:
    def test_random_split_exact_sizes(self):
        spec = SplitSpec(kind="random", fractions=(0.9, 0.1, 0.0))
        train, val, test = split(1000, spec, seed=0)
        assert len(train) == 900 and len(val) == 100 and len(test) == 0

    def test_partition_property(self):
        spec = SplitSpec(kind="random", fractions=(0.3, 0.1, 0.6))
        train, val, test = split(997, spec, seed=3)
        merged = np.concatenate([train, val, test])
        assert len(np.unique(merged)) == 997

    def test_region_holdout_contains_all_band_points(self):
        rng = np.random.default_rng(8)
        coords = np.column_stack([rng.uniform(-180, 180, 2000),
                                  rng.uniform(-90, 90, 2000)])
        spec = SplitSpec(kind="region-holdout", holdout_lon=(0.0, 60.0))
        train, val, test = split(2000, spec, seed=1, coords=coords)
        in_band = np.flatnonzero((coords[:, 0] >= 0) & (coords[:, 0] < 60))
        assert np.array_equal(np.sort(in_band), test)
        band_lons = coords[np.concatenate([train, val]), 0]
        assert not np.any((band_lons >= 0) & (band_lons < 60))

    def test_fewshot_leaks_exact_count(self):
        rng = np.random.default_rng(10)
        # half the longitude range in-band so the holdout has ~10k points
        coords = np.column_stack([rng.uniform(0, 120, 20_000),
                                  rng.uniform(-90, 90, 20_000)])
        coords[:10_000, 0] = rng.uniform(0, 60, 10_000)
        coords[10_000:, 0] = rng.uniform(60, 120, 10_000)
        spec = SplitSpec(kind="region-holdout", holdout_lon=(0.0, 60.0),
                         fewshot_fraction=0.01)
        train, val, test = split(20_000, spec, seed=2, coords=coords)
        in_band = (coords[:, 0] >= 0) & (coords[:, 0] < 60)
        leaked = np.sum(in_band[train])
        assert leaked == 100
        assert len(test) == 10_000 - 100

    def test_split_determinism(self):
        spec = SplitSpec(kind="random", fractions=(0.5, 0.25, 0.25))
        a = split(100, spec, seed=7)
        b = split(100, spec, seed=7)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_empty_split_is_error(self):
        with pytest.raises(ValueError):
            split(3, SplitSpec(kind="random", fractions=(0.9, 0.1, 0.0)), seed=0)

    def test_bad_fractions_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(kind="random", fractions=(0.5, 0.2, 0.2))
        with pytest.raises(ValueError):
            SplitSpec(kind="region-holdout", holdout_lon=(60.0, 60.0))


class TestFileFormats:
    def test_pairs_round_trip_bit_identical(self, tmp_path):
        pairs, _ = generate_world(SyntheticWorldSpec(seed=2), 25)
        path = tmp_path / "w.pairs.csv"
        write_pairs(path, pairs)
        again = read_pairs(path)
        assert again.coords.tobytes() == pairs.coords.tobytes()
        assert again.feats.tobytes() == pairs.feats.tobytes()

    def test_labels_round_trip_regression(self, tmp_path):
        _, labels = generate_world(SyntheticWorldSpec(seed=2), 25)
        path = tmp_path / "w.labels.csv"
        write_labels(path, labels)
        again = read_labels(path)
        assert again.task_kind == "regression"
        assert again.targets.tobytes() == labels.targets.tobytes()

    def test_labels_round_trip_classification_with_extra_features(self, tmp_path):
        rng = np.random.default_rng(3)
        labels = LabeledDataset(
            coords=np.column_stack([rng.uniform(-180, 180, 30),
                                    rng.uniform(-90, 90, 30)]),
            targets=rng.integers(0, 4, 30), task_kind="classification",
            class_count=4, extra_feats=rng.normal(size=(30, 2)))
        path = tmp_path / "c.labels.csv"
        write_labels(path, labels)
        again = read_labels(path)
        assert again.task_kind == "classification"
        assert np.array_equal(again.targets, labels.targets)
        assert again.extra_feats.tobytes() == labels.extra_feats.tobytes()

    def test_nan_row_names_the_line(self, tmp_path):
        path = tmp_path / "bad.pairs.csv"
        path.write_text("lon,lat,f0\n1.0,2.0,3.0\n4.0,nan,6.0\n")
        with pytest.raises(ValueError, match=":3"):
            read_pairs(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "ragged.pairs.csv"
        path.write_text("lon,lat,f0\n1.0,2.0,3.0\n4.0,5.0\n")
        with pytest.raises(ValueError, match="ragged"):
            read_pairs(path)

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "hdr.pairs.csv"
        path.write_text("lon,lat,g0\n1.0,2.0,3.0\n1.0,2.0,3.0\n")
        with pytest.raises(ValueError, match="header"):
            read_pairs(path)


def test_derived_rng_streams_are_independent():
    a = derived_rng(0, "alpha").uniform(size=4)
    b = derived_rng(0, "beta").uniform(size=4)
    a2 = derived_rng(0, "alpha").uniform(size=4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, a2)
