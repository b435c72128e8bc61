"""Synthetic-scene generation, sample I/O, and model validation.

The generator mirrors the random-scene experiment used to probe the real
pipeline: each sample draws a material color, surface orientation, light
colors, intensities and direction, renders the post-processed value through
the in-package pipeline (the synthetic oracle), and records everything.

Sample CSV schema (one header line, then one row per sample):

    kind,m_r,m_g,m_b,n_x,n_y,n_z,d_r,d_g,d_b,i_d,l_x,l_y,l_z,
    a_r,a_g,a_b,i_a,e,v_r,v_g,v_b

``kind`` is "lambertian" or "unlit"; unlit rows carry zeros in the lighting
and normal fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import svgplot
from .colorspace import quantize_8bit, srgb_encode3
from .errors import SampleFormatError, ValidationError
from .scene import (DEFAULT_SCALE_CONSTANT, lambertian_unprocessed_arrays,
                    unlit_unprocessed)

SAMPLE_CSV_HEADER = ("kind,m_r,m_g,m_b,n_x,n_y,n_z,d_r,d_g,d_b,i_d,"
                     "l_x,l_y,l_z,a_r,a_g,a_b,i_a,e,v_r,v_g,v_b")

#: Direction from the rendered surface toward the camera; generated normals
#: stay on this hemisphere so the surface faces the viewer.
CAMERA_DIRECTION = np.array([0.0, 0.0, -1.0])

INGEST_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SceneSample:
    """One recorded observation of the rendering experiment."""

    kind: str
    material: np.ndarray
    normal: np.ndarray
    light_color: np.ndarray
    light_intensity: float
    light_direction: np.ndarray
    ambient_color: np.ndarray
    ambient_intensity: float
    exposure: float
    value: np.ndarray

    def __post_init__(self):
        if self.kind not in ("lambertian", "unlit"):
            raise ValidationError(f"unknown sample kind {self.kind!r}")
        for name in ("material", "normal", "light_color", "light_direction",
                     "ambient_color", "value"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            if arr.shape != (3,) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"sample {name} must be a finite triplet")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def sample_arrays(samples) -> dict[str, np.ndarray]:
    """Column-stack sample fields into arrays for vectorized evaluation."""
    samples = list(samples)
    return {
        "kind": np.array([s.kind for s in samples]),
        "m": np.array([s.material for s in samples]).reshape(-1, 3),
        "n": np.array([s.normal for s in samples]).reshape(-1, 3),
        "d": np.array([s.light_color for s in samples]).reshape(-1, 3),
        "i_d": np.array([s.light_intensity for s in samples], dtype=float),
        "l": np.array([s.light_direction for s in samples]).reshape(-1, 3),
        "a": np.array([s.ambient_color for s in samples]).reshape(-1, 3),
        "i_a": np.array([s.ambient_intensity for s in samples], dtype=float),
        "e": np.array([s.exposure for s in samples], dtype=float),
        "v": np.array([s.value for s in samples]).reshape(-1, 3),
    }


def predict_unprocessed(samples, scale_constant: float = DEFAULT_SCALE_CONSTANT,
                        norm_tol: float = INGEST_NORM_TOL) -> np.ndarray:
    """Unprocessed values implied by each sample's scene parameters."""
    cols = sample_arrays(samples)
    u = np.zeros_like(cols["m"])
    lam = cols["kind"] == "lambertian"
    if np.any(lam):
        u[lam] = lambertian_unprocessed_arrays(
            cols["m"][lam], cols["n"][lam], cols["d"][lam], cols["i_d"][lam],
            cols["l"][lam], cols["a"][lam], cols["i_a"][lam], cols["e"][lam],
            scale_constant=scale_constant, norm_tol=norm_tol)
    if np.any(~lam):
        u[~lam] = unlit_unprocessed(cols["m"][~lam])
    return u


def predict_values(samples, tonemap=None,
                   scale_constant: float = DEFAULT_SCALE_CONSTANT,
                   quantize: bool = False) -> np.ndarray:
    """Post-processed values implied by the full model for each sample."""
    u = predict_unprocessed(samples, scale_constant)
    t = np.clip(u, 0.0, 1.0) if tonemap is None else tonemap.apply(u)
    v = srgb_encode3(np.clip(t, 0.0, 1.0))
    return quantize_8bit(v) if quantize else v


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # Counter-based stream: sample i gets its own child sequence, so parallel
    # or partial generation reproduces the sequential results bit for bit.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _unit_sphere(rng: np.random.Generator) -> np.ndarray:
    while True:
        vec = rng.standard_normal(3)
        norm = np.linalg.norm(vec)
        if norm > 1e-12:
            return vec / norm


def generate_samples(count: int, seed: int, kind: str = "lambertian",
                     tonemap=None, quantize: bool = False,
                     scale_constant: float = DEFAULT_SCALE_CONSTANT,
                     *, ambient_color_max: float = 1.0,
                     directional_intensity_range: tuple[float, float] = (0.0, 2.0),
                     ambient_intensity_range: tuple[float, float] = (0.0, 2.0),
                     exposure_choices=(0.0,)) -> list[SceneSample]:
    """Generate ``count`` random scene samples, rendered by the model itself.

    Material and directional-light colors are uniform on [0, 1]^3; the
    ambient color is uniform on [0, ambient_color_max]^3; intensities are
    uniform on the given ranges; directions are uniform on the unit sphere
    (normals restricted to the camera-facing hemisphere); the exposure is
    drawn from ``exposure_choices``.  Deterministic given ``seed``.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    if kind not in ("lambertian", "unlit"):
        raise ValidationError(f"unknown material kind {kind!r}")
    for name, rng_pair in (("directional", directional_intensity_range),
                           ("ambient", ambient_intensity_range)):
        if rng_pair[0] < 0 or rng_pair[1] < rng_pair[0]:
            raise ValidationError(f"invalid {name} intensity range {rng_pair}")
    if ambient_color_max < 0:
        raise ValidationError("ambient_color_max must be >= 0")
    exposure_choices = tuple(float(e) for e in exposure_choices)
    if not exposure_choices:
        raise ValidationError("exposure_choices must be nonempty")

    zeros = np.zeros(3)
    records = []
    for i in range(count):
        rng = _sample_rng(seed, i)
        m = rng.uniform(0.0, 1.0, 3)
        if kind == "unlit":
            records.append(SceneSample(
                kind="unlit", material=m, normal=zeros, light_color=zeros,
                light_intensity=0.0, light_direction=zeros, ambient_color=zeros,
                ambient_intensity=0.0, exposure=0.0, value=zeros))
            continue
        n = _unit_sphere(rng)
        if np.dot(n, CAMERA_DIRECTION) < 0:
            n = -n
        d = rng.uniform(0.0, 1.0, 3)
        i_d = rng.uniform(*directional_intensity_range)
        l = _unit_sphere(rng)
        a = rng.uniform(0.0, ambient_color_max, 3)
        i_a = rng.uniform(*ambient_intensity_range)
        e = exposure_choices[rng.integers(len(exposure_choices))]
        records.append(SceneSample(
            kind="lambertian", material=m, normal=n, light_color=d,
            light_intensity=i_d, light_direction=l, ambient_color=a,
            ambient_intensity=i_a, exposure=e, value=zeros))

    values = predict_values(records, tonemap=tonemap,
                            scale_constant=scale_constant, quantize=quantize)
    return [SceneSample(kind=s.kind, material=s.material, normal=s.normal,
                        light_color=s.light_color, light_intensity=s.light_intensity,
                        light_direction=s.light_direction, ambient_color=s.ambient_color,
                        ambient_intensity=s.ambient_intensity, exposure=s.exposure,
                        value=v)
            for s, v in zip(records, values)]


def save_samples(samples, file) -> None:
    """Write samples in the CSV schema; floats keep full precision."""
    file.write(SAMPLE_CSV_HEADER + "\n")
    for s in samples:
        fields = np.concatenate([
            s.material, s.normal, s.light_color, [s.light_intensity],
            s.light_direction, s.ambient_color, [s.ambient_intensity],
            [s.exposure], s.value])
        file.write(s.kind + "," + ",".join(f"{x:.17g}" for x in fields) + "\n")


def load_samples(file) -> list[SceneSample]:
    """Read and validate samples; raises with offending line numbers.

    Ingested unit vectors are accepted within 1e-6 of unit norm (text
    round-tripping from external engines loses precision) and renormalized.
    """
    header = file.readline().strip().replace(" ", "")
    if header != SAMPLE_CSV_HEADER:
        raise SampleFormatError("sample CSV header does not match schema")
    samples = []
    bad_rows: list[tuple[int, str]] = []
    for lineno, line in enumerate(file, start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        problem = None
        parts = line.split(",")
        if len(parts) != 22:
            problem = f"expected 22 columns, got {len(parts)}"
        else:
            kind = parts[0]
            try:
                nums = np.array([float(x) for x in parts[1:]])
            except ValueError:
                nums = None
                problem = "non-numeric field"
            if problem is None:
                problem = _row_problem(kind, nums)
                if problem is None:
                    samples.append(_row_to_sample(kind, nums))
        if problem is not None:
            bad_rows.append((lineno, problem))
    if bad_rows:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in bad_rows[:5])
        raise SampleFormatError(f"rejected {len(bad_rows)} sample row(s): {detail}",
                                rows=tuple(ln for ln, _ in bad_rows))
    return samples


def _row_problem(kind: str, nums: np.ndarray) -> str | None:
    if kind not in ("lambertian", "unlit"):
        return f"unknown kind {kind!r}"
    if not np.all(np.isfinite(nums)):
        return "non-finite field"
    m, n = nums[0:3], nums[3:6]
    d, i_d, l = nums[6:9], nums[9], nums[10:13]
    a, i_a = nums[13:16], nums[16]
    v = nums[18:21]
    if np.any(m < 0) or np.any(m > 1):
        return "material color outside [0, 1]"
    if np.any(v < 0) or np.any(v > 1):
        return "post-processed value outside [0, 1]"
    if kind == "unlit":
        return None
    for vec, name in ((n, "normal"), (l, "light direction")):
        if abs(np.linalg.norm(vec) - 1.0) > INGEST_NORM_TOL:
            return f"non-unit {name}"
    if np.any(d < 0) or np.any(d > 1):
        return "light color outside [0, 1]"
    if np.any(a < 0) or i_d < 0 or i_a < 0:
        return "negative light parameters"
    return None


def _row_to_sample(kind: str, nums: np.ndarray) -> SceneSample:
    n = nums[3:6]
    l = nums[10:13]
    if kind == "lambertian":
        # Renormalize only when the text actually lost precision, so saved
        # samples round-trip bit for bit.
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            n = n / np.linalg.norm(n)
        if abs(np.linalg.norm(l) - 1.0) > 1e-12:
            l = l / np.linalg.norm(l)
    return SceneSample(kind=kind, material=nums[0:3], normal=n,
                       light_color=nums[6:9], light_intensity=float(nums[9]),
                       light_direction=l, ambient_color=nums[13:16],
                       ambient_intensity=float(nums[16]), exposure=float(nums[17]),
                       value=nums[18:21])


@dataclass(frozen=True, eq=False)
class ValidationReport:
    """Per-sample prediction errors and the pooled summary statistics.

    ``median_abs_255`` is the median of |predicted - actual| over all
    channels of all samples, expressed as a multiple of 1/255; the filtered
    variant excludes samples with any material component below the floor.
    """

    kinds: np.ndarray
    material: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray
    errors: np.ndarray
    median_abs_255: float
    filtered_median_abs_255: float
    n_excluded: int
    material_floor: float
    association: np.ndarray  # rows of (bin_low, bin_high, n, median_abs_255)

    def to_csv(self, file) -> None:
        file.write("kind,pred_r,pred_g,pred_b,actual_r,actual_g,actual_b,"
                   "err_r,err_g,err_b\n")
        for kind, pred, act, err in zip(self.kinds, self.predicted,
                                        self.actual, self.errors):
            nums = np.concatenate([pred, act, err])
            file.write(kind + "," + ",".join(f"{x:.10g}" for x in nums) + "\n")
        file.write(f"# median_abs_error_255 = {self.median_abs_255:.10g}\n")
        file.write(f"# filtered_median_abs_error_255 = "
                   f"{self.filtered_median_abs_255:.10g}\n")
        file.write(f"# excluded_by_material_floor = {self.n_excluded}\n")
        file.write(f"# material_floor = {self.material_floor:.10g}\n")

    def to_svg(self, file) -> None:
        actual = self.actual.ravel()
        predicted = self.predicted.ravel()
        errors = self.errors.ravel()
        guide = 1.0 / 255.0
        err_span = max(float(np.max(np.abs(errors))), guide) * 1.15
        left = svgplot.make_panel(0, "predicted vs actual", "actual v",
                                  "predicted v", (0.0, 1.0), (0.0, 1.0))
        left.points(actual, predicted)
        left.line(0.0, 0.0, 1.0, 1.0)
        right = svgplot.make_panel(1, "prediction error", "actual v",
                                   "predicted - actual", (0.0, 1.0),
                                   (-err_span, err_span))
        right.points(actual, errors, color="#b43a1f")
        right.line(0.0, guide, 1.0, guide, color="#555", dash="4 3")
        right.line(0.0, -guide, 1.0, -guide, color="#555", dash="4 3")
        right.line(0.0, 0.0, 1.0, 0.0)
        svgplot.scatter_panels([left, right], file)


def validate_model(samples, tonemap=None,
                   scale_constant: float = DEFAULT_SCALE_CONSTANT,
                   quantize: bool = False,
                   material_floor: float = 0.2) -> ValidationReport:
    """Compare model predictions against recorded sample values."""
    samples = list(samples)
    if not samples:
        raise ValidationError("validate_model needs at least one sample")
    cols = sample_arrays(samples)
    predicted = predict_values(samples, tonemap=tonemap,
                               scale_constant=scale_constant, quantize=quantize)
    errors = predicted - cols["v"]
    median = float(np.median(np.abs(errors)) * 255.0)
    keep = np.all(cols["m"] >= material_floor, axis=1)
    n_excluded = int(np.sum(~keep))
    filtered = (float(np.median(np.abs(errors[keep])) * 255.0)
                if np.any(keep) else float("nan"))

    edges = np.linspace(0.0, 1.0, 11)
    assoc = []
    m_flat = cols["m"].ravel()
    err_flat = np.abs(errors).ravel()
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (m_flat >= lo) & (m_flat < hi if hi < 1.0 else m_flat <= hi)
        assoc.append([lo, hi, int(mask.sum()),
                      float(np.median(err_flat[mask]) * 255.0) if mask.any()
                      else float("nan")])
    return ValidationReport(kinds=cols["kind"], material=cols["m"],
                            predicted=predicted, actual=cols["v"], errors=errors,
                            median_abs_255=median,
                            filtered_median_abs_255=filtered,
                            n_excluded=n_excluded, material_floor=material_floor,
                            association=np.array(assoc))


@dataclass(frozen=True, eq=False)
class CharacterizationPoint:
    """One simulated characterization reading."""

    u: np.ndarray
    v: np.ndarray
    luminance: float | None = None
    xyz: np.ndarray | None = None


def simulate_characterization(display, levels, tonemap=None,
                              mode: str = "achromatic") -> list[CharacterizationPoint]:
    """In-silico characterization: drive unprocessed levels through the
    pipeline and read the modeled display output.

    Achromatic mode shows u = (x, x, x) per level and reads luminance;
    chromatic mode ramps each channel separately and reads XYZ.
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(levels < 0):
        raise ValidationError("levels must be >= 0")
    points = []
    if mode == "achromatic":
        for x in levels:
            u = np.array([x, x, x])
            v = _pipeline(u, tonemap)
            points.append(CharacterizationPoint(
                u=u, v=v, luminance=float(display.luminance(v[0]))))
    elif mode == "chromatic":
        for k in range(3):
            for x in levels:
                u = np.zeros(3)
                u[k] = x
                v = _pipeline(u, tonemap)
                points.append(CharacterizationPoint(u=u, v=v, xyz=display.xyz(v)))
    else:
        raise ValidationError(f"unknown characterization mode {mode!r}")
    return points


def _pipeline(u: np.ndarray, tonemap) -> np.ndarray:
    t = np.clip(u, 0.0, 1.0) if tonemap is None else tonemap.apply(u)
    return srgb_encode3(np.clip(t, 0.0, 1.0))
