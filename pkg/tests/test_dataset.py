from collections import defaultdict

import numpy as np
import pytest

from ranklab.dataset import (
    BASE_QUALITY_BOUNDS,
    CsvFormatError,
    DatasetConfig,
    SENSITIVITY_BOUNDS,
    generate_dataset,
    make_content_specs,
    read_csv,
    severity_curve,
    split_by_content,
    true_mos,
    write_csv,
)


@pytest.fixture(scope="module")
def default_dataset():
    return generate_dataset(DatasetConfig())


class TestGeneration:
    def test_size_and_shapes(self, default_dataset):
        cfg = DatasetConfig()
        assert len(default_dataset) == cfg.n_samples == 1500
        assert all(len(s.features) == cfg.feature_dim for s in default_dataset[:10])

    def test_same_seed_is_byte_identical(self):
        a = generate_dataset(DatasetConfig(seed=9))
        b = generate_dataset(DatasetConfig(seed=9))
        for sa, sb in zip(a, b):
            assert sa.content_id == sb.content_id
            assert sa.mos == sb.mos
            assert sa.features.tobytes() == sb.features.tobytes()

    def test_different_seed_differs(self):
        a = generate_dataset(DatasetConfig(seed=9))
        b = generate_dataset(DatasetConfig(seed=10))
        assert any(sa.mos != sb.mos for sa, sb in zip(a, b))

    def test_content_factors_within_bounds(self):
        specs = make_content_specs(DatasetConfig(), np.random.default_rng(0))
        for spec in specs:
            assert BASE_QUALITY_BOUNDS[0] <= spec.base_quality <= BASE_QUALITY_BOUNDS[1]
            assert np.all(spec.sensitivity >= SENSITIVITY_BOUNDS[0])
            assert np.all(spec.sensitivity <= SENSITIVITY_BOUNDS[1])
            assert np.linalg.norm(spec.embedding) == pytest.approx(1.0, abs=1e-9)

    def test_minimum_level_always_distorts(self):
        assert severity_curve(1, 5) > 0.0

    def test_mos_within_range(self, default_dataset):
        mos = np.array([s.mos for s in default_dataset])
        assert mos.min() >= 1.0 and mos.max() <= 5.0

    def test_sensitivity_extremes_separate_contents(self):
        # same type and maximum level, extreme sensitivities, no noise
        for base_a in (3.5, 4.2, 5.0):
            for base_b in (3.5, 4.2, 5.0):
                diff = true_mos(base_a, 0.3, 5, 5) - true_mos(base_b, 1.7, 5, 5)
                assert diff >= 1.0

    def test_monotone_in_severity_without_noise(self):
        cfg = DatasetConfig(n_contents=12, mos_noise_sd=0.0, seed=3)
        data = generate_dataset(cfg)
        per_cell = defaultdict(list)
        for s in data:
            per_cell[(s.content_id, s.distortion_type)].append((s.severity, s.mos))
        for series in per_cell.values():
            series.sort()
            mos = [m for _, m in series]
            assert all(a >= b for a, b in zip(mos, mos[1:]))

    def test_noiseless_mos_is_function_of_features(self):
        cfg = DatasetConfig(n_contents=8, feature_noise_sd=0.0, mos_noise_sd=0.0, seed=4)
        seen = {}
        for s in generate_dataset(cfg):
            key = s.features.tobytes()
            assert seen.setdefault(key, s.mos) == s.mos

    def test_content_effect_residual_variance(self, default_dataset):
        mos = np.array([s.mos for s in default_dataset])
        cells = defaultdict(list)
        for s in default_dataset:
            cells[(s.distortion_type, s.severity)].append(s.mos)
        means = {k: np.mean(v) for k, v in cells.items()}
        residual = mos - np.array(
            [means[(s.distortion_type, s.severity)] for s in default_dataset]
        )
        assert np.var(residual) / np.var(mos) >= 0.20

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            generate_dataset(DatasetConfig(n_contents=0))
        with pytest.raises(ValueError):
            generate_dataset(DatasetConfig(mos_noise_sd=-1.0))


class TestSplit:
    def test_seventy_thirty(self, default_dataset):
        train, test = split_by_content(default_dataset, 0.7, seed=1)
        assert len({s.content_id for s in train}) == 42
        assert len({s.content_id for s in test}) == 18

    def test_disjoint_contents(self, default_dataset):
        train, test = split_by_content(default_dataset, 0.7, seed=1)
        assert {s.content_id for s in train} & {s.content_id for s in test} == set()

    def test_same_seed_same_split(self, default_dataset):
        a = split_by_content(default_dataset, 0.7, seed=2)
        b = split_by_content(default_dataset, 0.7, seed=2)
        assert [s.content_id for s in a[0]] == [s.content_id for s in b[0]]

    def test_bad_fraction_rejected(self, default_dataset):
        with pytest.raises(ValueError):
            split_by_content(default_dataset, 1.0, seed=0)

    def test_too_few_contents_rejected(self):
        data = generate_dataset(DatasetConfig(n_contents=1))
        with pytest.raises(ValueError):
            split_by_content(data, 0.7, seed=0)


class TestCsv:
    def test_round_trip_is_lossless(self, default_dataset, tmp_path):
        path = tmp_path / "data.csv"
        write_csv(default_dataset, path)
        loaded = read_csv(path)
        assert len(loaded) == len(default_dataset)
        for a, b in zip(default_dataset, loaded):
            assert (a.content_id, a.distortion_type, a.severity) == (
                b.content_id, b.distortion_type, b.severity)
            assert a.mos == b.mos
            assert a.features.tobytes() == b.features.tobytes()

    def test_header_is_exact(self, default_dataset, tmp_path):
        path = tmp_path / "data.csv"
        write_csv(default_dataset[:5], path)
        header = path.read_text().splitlines()[0]
        assert header.startswith("content_id,distortion_type,severity,mos,f_0,")
        assert header.endswith(",f_12")

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("content_id,distortion_type,mos,f_0\n1,0,3.0,0.1\n")
        with pytest.raises(CsvFormatError, match="severity"):
            read_csv(path)

    def test_mos_range_violation_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "content_id,distortion_type,severity,mos,f_0\n"
            "1,0,1,3.0,0.1\n"
            "1,0,2,7.0,0.2\n"
        )
        with pytest.raises(CsvFormatError, match=":3:"):
            read_csv(path)

    def test_unparseable_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "content_id,distortion_type,severity,mos,f_0\n"
            "1,0,1,abc,0.1\n"
        )
        with pytest.raises(CsvFormatError, match=":2:"):
            read_csv(path)
