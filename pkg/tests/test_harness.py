import io
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from hdrpcal.calibrate import GammaCorrectionSpec, build_correction_cube
from hdrpcal.cubelut import (CubeTonemap, DELTA_KNOTS, default_knot_grid,
                             separable_cube)
from hdrpcal.display import AchromaticDisplay, ChromaticDisplay
from hdrpcal.errors import SampleFormatError, ValidationError
from hdrpcal.harness import (CAMERA_DIRECTION, SceneSample, generate_samples,
                             load_samples, save_samples,
                             simulate_characterization, validate_model)


def cube_tonemap():
    grid = default_knot_grid()
    lut = separable_cube(grid, lambda x: np.clip(x / 60.0, 0, 1))
    return CubeTonemap(grid, lut)


class TestGeneration:
    def test_deterministic(self):
        a = generate_samples(25, seed=42)
        b = generate_samples(25, seed=42)
        for s, t in zip(a, b):
            assert np.array_equal(s.value, t.value)
            assert np.array_equal(s.normal, t.normal)

    def test_counter_based_prefix_property(self):
        # the first k samples do not depend on the requested count
        long = generate_samples(20, seed=9)
        short = generate_samples(8, seed=9)
        for s, t in zip(short, long):
            assert np.array_equal(s.material, t.material)
            assert np.array_equal(s.light_direction, t.light_direction)

    def test_seed_changes_output(self):
        a = generate_samples(5, seed=1)
        b = generate_samples(5, seed=2)
        assert not np.array_equal(a[0].material, b[0].material)

    def test_unlit_ignores_lighting_fields(self):
        samples = generate_samples(10, seed=3, kind="unlit")
        for s in samples:
            assert s.kind == "unlit"
            assert np.array_equal(s.normal, np.zeros(3))
            assert s.light_intensity == 0.0
            assert np.allclose(s.value, s.material, atol=1e-12)

    def test_normals_face_camera(self):
        samples = generate_samples(200, seed=4)
        for s in samples:
            assert np.dot(s.normal, CAMERA_DIRECTION) >= 0

    def test_unit_vectors(self):
        samples = generate_samples(100, seed=5)
        for s in samples:
            assert abs(np.linalg.norm(s.normal) - 1) < 1e-9
            assert abs(np.linalg.norm(s.light_direction) - 1) < 1e-9

    def test_ranges_respected(self):
        samples = generate_samples(300, seed=6,
                                   directional_intensity_range=(0.5, 1.5),
                                   ambient_intensity_range=(0.0, 0.25),
                                   ambient_color_max=2.0,
                                   exposure_choices=(-1.0, 3.0))
        for s in samples:
            assert 0.5 <= s.light_intensity <= 1.5
            assert 0.0 <= s.ambient_intensity <= 0.25
            assert np.all(s.ambient_color <= 2.0)
            assert s.exposure in (-1.0, 3.0)

    def test_invalid_ranges(self):
        with pytest.raises(ValidationError):
            generate_samples(10, seed=0, directional_intensity_range=(2.0, 1.0))
        with pytest.raises(ValidationError):
            generate_samples(0, seed=0)

    def test_quantized_values_on_grid(self):
        samples = generate_samples(50, seed=7, quantize=True)
        v = np.array([s.value for s in samples]) * 255
        assert np.allclose(v, np.round(v), atol=1e-9)


class TestSampleCsv:
    def test_round_trip(self):
        samples = generate_samples(40, seed=8) + generate_samples(10, seed=9,
                                                                  kind="unlit")
        buf = io.StringIO()
        save_samples(samples, buf)
        buf.seek(0)
        back = load_samples(buf)
        assert len(back) == len(samples)
        for s, t in zip(samples, back):
            assert s.kind == t.kind
            assert t.value == pytest.approx(s.value, abs=1e-9)
            assert t.normal == pytest.approx(s.normal, abs=1e-9)
            assert t.exposure == s.exposure

    def test_bad_normal_rejected_with_row(self):
        samples = generate_samples(3, seed=10)
        buf = io.StringIO()
        save_samples(samples, buf)
        lines = buf.getvalue().splitlines()
        parts = lines[2].split(",")
        parts[4:7] = ["0", "0", "0.9"]
        lines[2] = ",".join(parts)
        with pytest.raises(SampleFormatError) as info:
            load_samples(io.StringIO("\n".join(lines) + "\n"))
        assert info.value.rows == (3,)

    def test_non_numeric_field(self):
        samples = generate_samples(2, seed=11)
        buf = io.StringIO()
        save_samples(samples, buf)
        text = buf.getvalue().replace(f"{samples[1].exposure:.17g}", "oops", 1)
        with pytest.raises(SampleFormatError):
            load_samples(io.StringIO(text))

    def test_header_mismatch(self):
        with pytest.raises(SampleFormatError, match="header"):
            load_samples(io.StringIO("kind,m_r\nlambertian,0\n"))

    def test_empty_data_section(self):
        buf = io.StringIO()
        save_samples([], buf)
        buf.seek(0)
        assert load_samples(buf) == []

    def test_ingest_tolerance_renormalizes(self):
        samples = generate_samples(1, seed=12)
        buf = io.StringIO()
        save_samples(samples, buf)
        lines = buf.getvalue().splitlines()
        parts = lines[1].split(",")
        n = samples[0].normal * (1 + 5e-7)  # within the 1e-6 ingest tolerance
        parts[4:7] = [f"{x:.17g}" for x in n]
        back = load_samples(io.StringIO("\n".join([lines[0], ",".join(parts)]) + "\n"))
        assert abs(np.linalg.norm(back[0].normal) - 1.0) < 1e-12


class TestValidateModel:
    def test_oracle_self_consistency_identity(self):
        samples = generate_samples(300, seed=13)
        report = validate_model(samples)
        assert report.median_abs_255 <= 1e-9 * 255

    def test_oracle_self_consistency_with_cube(self):
        tm = cube_tonemap()
        samples = generate_samples(300, seed=14, tonemap=tm)
        report = validate_model(samples, tonemap=tm)
        assert report.median_abs_255 <= 1e-9 * 255

    def test_oracle_self_consistency_unlit(self):
        samples = generate_samples(200, seed=15, kind="unlit")
        assert validate_model(samples).median_abs_255 <= 1e-9 * 255

    def test_quantization_envelope(self):
        samples = generate_samples(400, seed=16, quantize=True)
        report = validate_model(samples)
        assert np.max(np.abs(report.errors)) <= 0.5 / 255 + 1e-12
        assert report.median_abs_255 <= 0.5

    def test_quantize_assumption_matches_generation(self):
        samples = generate_samples(200, seed=28, quantize=True)
        report = validate_model(samples, quantize=True)
        assert report.median_abs_255 == 0.0

    def test_median_definition(self):
        samples = generate_samples(1, seed=17, kind="unlit")
        s = samples[0]
        errs = np.array([1.0, 2.0, 3.0]) / 255.0
        doctored = SceneSample(kind=s.kind, material=s.material, normal=s.normal,
                               light_color=s.light_color,
                               light_intensity=s.light_intensity,
                               light_direction=s.light_direction,
                               ambient_color=s.ambient_color,
                               ambient_intensity=s.ambient_intensity,
                               exposure=s.exposure,
                               value=np.clip(s.value - errs, 0, 1))
        report = validate_model([doctored])
        assert report.median_abs_255 == pytest.approx(2.0, abs=1e-6)

    def test_material_filter_counts(self):
        samples = generate_samples(500, seed=18)
        report = validate_model(samples, material_floor=0.2)
        med_m = np.array([s.material for s in samples]).min(axis=1)
        assert report.n_excluded == int(np.sum(med_m < 0.2))

    def test_association_table_covers_all_channels(self):
        samples = generate_samples(300, seed=27, quantize=True)
        report = validate_model(samples)
        assert report.association.shape == (10, 4)
        assert report.association[0, 0] == 0.0
        assert report.association[-1, 1] == 1.0
        assert int(report.association[:, 2].sum()) == 3 * len(samples)

    def test_empty_input(self):
        with pytest.raises(ValidationError):
            validate_model([])

    def test_csv_summary_lines(self):
        samples = generate_samples(20, seed=19)
        report = validate_model(samples)
        buf = io.StringIO()
        report.to_csv(buf)
        text = buf.getvalue()
        assert "# median_abs_error_255" in text
        assert text.count("\n") == 1 + len(samples) + 4

    def test_svg_well_formed(self):
        samples = generate_samples(30, seed=20, quantize=True)
        report = validate_model(samples)
        buf = io.StringIO()
        report.to_svg(buf)
        root = ET.fromstring(buf.getvalue())
        assert root.tag.endswith("svg")
        assert len(list(root.iter())) > 40


class TestSimulateCharacterization:
    def test_identity_composition(self):
        disp = AchromaticDisplay(l0=2.0, l1=98.0, gamma=2.2)
        points = simulate_characterization(disp, np.linspace(0, 1, 11))
        for p in points:
            assert p.luminance == pytest.approx(disp.luminance(p.v[0]), rel=1e-12)

    def test_correction_cube_linearizes_luminance(self):
        disp = AchromaticDisplay(l0=2.0, l1=98.0, gamma=2.2)
        r = float(DELTA_KNOTS[16])
        spec = GammaCorrectionSpec(disp, input_range=r)
        grid = default_knot_grid()
        tm = CubeTonemap(grid, build_correction_cube(spec, grid, refine=True))
        levels = np.geomspace(0.02, 1.0, 120)
        points = simulate_characterization(disp, levels, tonemap=tm)
        lum = np.array([p.luminance for p in points])
        target = (disp.l0 + disp.l1) * levels / r
        assert np.max(np.abs(lum - target)) / (disp.l0 + disp.l1) <= 0.005

    def test_chromatic_ramps_linear_coefficients(self):
        pr = np.array([41.24, 21.26, 1.93])
        pg = np.array([35.76, 71.52, 11.92])
        pb = np.array([18.05, 7.22, 95.03])
        w = np.array([0.01, 0.02, 0.03])
        disp = ChromaticDisplay(primary_r=pr, primary_g=pg, primary_b=pb,
                                background=w[0] * pr + w[1] * pg + w[2] * pb,
                                gammas=np.array([1.8, 2.2, 2.6]), weights=w)
        r = float(DELTA_KNOTS[16])
        spec = GammaCorrectionSpec(disp, input_range=r)
        grid = default_knot_grid()
        tm = CubeTonemap(grid, build_correction_cube(spec, grid, refine=True))
        levels = np.linspace(0.05, 1.0, 60)
        points = simulate_characterization(disp, levels, tonemap=tm,
                                           mode="chromatic")
        matrix = disp.primaries
        for k in range(3):
            rows = [p for p in points if p.u[k] > 0]
            coef = np.array([np.linalg.solve(matrix, p.xyz - disp.background)[k]
                             for p in rows]) + disp.weights[k]
            u = np.array([p.u[k] for p in rows])
            target = (1 + disp.weights[k]) * u / r
            scale = (1 + disp.weights[k]) / r
            assert np.max(np.abs(coef - target)) / scale <= 0.01

    def test_unknown_mode(self):
        disp = AchromaticDisplay(l0=1.0, l1=10.0, gamma=2.0)
        with pytest.raises(ValidationError):
            simulate_characterization(disp, [0.5], mode="spectral")
