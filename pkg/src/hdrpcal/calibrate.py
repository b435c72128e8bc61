"""Gamma-correction construction and estimation of pipeline constants.

Gamma correction chooses the tonemapping function so that the physical
output is proportional to the unprocessed value u.  For an achromatic
display with background ratio w = l0/l1 and displayable input range
[0, r], the exact tonemap is

    f(u) = s(h^-1(max((1 + w) * u / r - w, 0)))

which pins luminance to L = (l0 + l1) * u / r for u >= u0 = r*w/(1+w) and
to L = l0 below the cutoff.  The chromatic version applies the same form
per channel with w_k and the channel activation h_k (and unit range).

The estimators recover the pipeline's hidden constants from rendered
samples: the global gain from a regression through the origin, and the
tonemapping knot coordinates either from impulse-cube sweeps or by direct
optimization of model predictions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear, minimize, minimize_scalar

from .colorspace import srgb_decode, srgb_decode3, srgb_encode3
from .cubelut import CubeLUT, KnotGrid, _trilinear, default_knot_grid
from .display import AchromaticDisplay, ChromaticDisplay
from .errors import (DegenerateDataError, EstimationError, FitError,
                     ValidationError)
from .harness import predict_unprocessed, sample_arrays
from .scene import DEFAULT_SCALE_CONSTANT

REFINE_POINTS = 2048
HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class GammaCorrectionSpec:
    """A display plus the displayable input range r.

    With the default r = 1 the chromatic tonemap reduces to the plain
    per-channel form (1 + w_k)*u_k - w_k.  Choosing r equal to one of the
    knot coordinates puts the tonemap's top kink on a knot, which a
    piecewise-linear cube can represent exactly; with r strictly inside a
    knot cell no [0, 1]-valued cube can track the kink closely.
    """

    display: AchromaticDisplay | ChromaticDisplay
    input_range: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.input_range) or self.input_range <= 0:
            raise ValidationError("input range must be > 0")
        if isinstance(self.display, ChromaticDisplay):
            if np.any(self.display.weights < 0):
                raise ValidationError("chromatic correction requires nonnegative "
                                      "background weights")
        elif not isinstance(self.display, AchromaticDisplay):
            raise ValidationError(f"not a display model: {self.display!r}")

    @property
    def chromatic(self) -> bool:
        return isinstance(self.display, ChromaticDisplay)

    @property
    def cutoffs(self) -> np.ndarray:
        """Per-channel cutoff u0 below which output sits at the display floor."""
        if self.chromatic:
            w = self.display.weights
            return self.input_range * w / (1.0 + w)
        w = self.display.w
        return np.full(3, self.input_range * w / (1.0 + w))

    def channel_tonemaps(self):
        """Three callables mapping unprocessed arrays to tonemapped arrays."""
        if self.chromatic:
            return tuple(
                (lambda x, k=k: _gamma_tonemap_scalar(
                    x, self.display.weights[k], self.display.gammas[k],
                    self.input_range))
                for k in range(3))
        fn = lambda x: _gamma_tonemap_scalar(  # noqa: E731
            x, self.display.w, self.display.gamma, self.input_range)
        return (fn, fn, fn)


def _gamma_tonemap_scalar(u, w: float, gamma: float, r: float):
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError("unprocessed values must be finite and >= 0")
    arg = np.clip((1.0 + w) * arr / r - w, 0.0, 1.0)
    out = srgb_decode(arg ** (1.0 / gamma))
    return float(out) if np.ndim(u) == 0 else out


def gamma_tonemap_achromatic(spec: GammaCorrectionSpec, u):
    """Exact achromatic gamma-correction tonemap; u is a scalar or array."""
    if spec.chromatic:
        raise ValidationError("spec is chromatic; use gamma_tonemap_chromatic")
    return _gamma_tonemap_scalar(u, spec.display.w, spec.display.gamma,
                                 spec.input_range)


def gamma_tonemap_chromatic(spec: GammaCorrectionSpec, u):
    """Exact per-channel gamma-correction tonemap over (..., 3) triplets."""
    if not spec.chromatic:
        raise ValidationError("spec is achromatic; use gamma_tonemap_achromatic")
    arr = np.asarray(u, dtype=float)
    if arr.shape[-1:] != (3,):
        raise ValidationError(f"expected (..., 3) input, got shape {arr.shape}")
    fns = spec.channel_tonemaps()
    return np.stack([fns[k](arr[..., k]) for k in range(3)], axis=-1)


def _hat_matrix(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Interpolation weights of each knot output at points x (with the
    clamp-to-active-range semantics of the tonemap)."""
    count = knots.size
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, count - 2)
    w = np.clip((x - knots[idx]) / (knots[idx + 1] - knots[idx]), 0.0, 1.0)
    mat = np.zeros((x.size, count))
    rows = np.arange(x.size)
    mat[rows, idx] = 1.0 - w
    mat[rows, idx + 1] += w
    return mat


def build_correction_cube(spec: GammaCorrectionSpec, knots: KnotGrid | None = None,
                          refine: bool = False,
                          refine_points: int = REFINE_POINTS) -> CubeLUT:
    """Gamma-correction cube: per channel, the exact tonemap sampled at the
    active knot coordinates (inactive knots copy the first active value).

    With ``refine``, the per-channel knot outputs are re-fit by bounded
    linear least squares so that the interpolated tonemap tracks the exact
    one over a dense log-spaced grid on [u*_first, r] plus the endpoints
    {0, r}.  Refinement never increases that grid's sum-of-squares error;
    if the solver fails to converge the point-construction cube is returned
    with a warning.
    """
    grid = knots if knots is not None else default_knot_grid()
    active = grid.active_values
    r = spec.input_range
    targets = spec.channel_tonemaps()
    start = grid.active_start - 1
    n = grid.size

    curves = np.empty((3, active.size))
    for c in range(3):
        curves[c] = np.clip(targets[c](active), 0.0, 1.0)

    if refine:
        if r <= active[0]:
            raise ValidationError("input range must exceed the first active knot")
        xs = np.unique(np.concatenate([
            [0.0, r], np.geomspace(active[0], r, refine_points)]))
        mat = _hat_matrix(active, xs)
        supported = np.flatnonzero(mat.sum(axis=0) > 0)
        frozen = np.setdiff1d(np.arange(active.size), supported)
        for c in range(3):
            y = targets[c](xs)
            sse_point = float(np.sum((mat @ curves[c] - y) ** 2))
            y_adj = y - mat[:, frozen] @ curves[c][frozen]
            # bvls is an active-set method: knots pinned at a bound come out
            # exactly 0 or 1, keeping emitted cubes clean.
            res = lsq_linear(mat[:, supported], y_adj, bounds=(0.0, 1.0),
                             method="bvls", tol=1e-14)
            refined = curves[c].copy()
            refined[supported] = res.x
            sse_refined = float(np.sum((mat @ refined - y) ** 2))
            if not res.success or sse_refined > sse_point:
                warnings.warn(f"refinement did not improve channel {c}; "
                              "keeping point construction", stacklevel=2)
            else:
                curves[c] = refined

    full = np.empty((3, n))
    for c in range(3):
        full[c, start:] = curves[c]
        full[c, :start] = curves[c][0]
    outputs = np.empty((n, n, n, 3))
    outputs[..., 0] = full[0][:, None, None]
    outputs[..., 1] = full[1][None, :, None]
    outputs[..., 2] = full[2][None, None, :]
    return CubeLUT(outputs, title="gamma correction")


@dataclass(frozen=True)
class ScaleEstimate:
    """Result of the pipeline-gain regression."""

    c: float
    slope: float
    n_samples: int
    n_channel_points: int
    n_saturated: int


def estimate_scale_constant(samples, *, min_samples: int = 100) -> ScaleEstimate:
    """Estimate the pipeline gain from Lambertian samples rendered with
    tonemapping disabled.

    Predicted unprocessed values (computed with unit gain) are regressed
    through the origin against actual unprocessed values s(v); the gain is
    the inverse of the slope.  Channel observations at the framebuffer
    ceiling (v >= 1) are excluded: clipping makes them uninformative.
    """
    samples = [s for s in samples if s.kind == "lambertian"]
    if len(samples) < min_samples:
        raise FitError(f"need >= {min_samples} lambertian samples, got {len(samples)}")
    predicted = predict_unprocessed(samples, scale_constant=1.0)
    v = sample_arrays(samples)["v"]
    actual = srgb_decode3(v)
    # The ceiling test is tolerant: encode(1.0) lands one ulp under 1.
    keep = v < 1.0 - 1e-9
    x = actual[keep]
    y = predicted[keep]
    denom = float(np.sum(x * x))
    if denom == 0.0 or float(np.sum(y * y)) == 0.0:
        raise DegenerateDataError("all predictions or observations are zero")
    slope = float(np.sum(x * y)) / denom
    if slope <= 0:
        raise DegenerateDataError(f"non-positive regression slope {slope!r}")
    return ScaleEstimate(c=1.0 / slope, slope=slope, n_samples=len(samples),
                         n_channel_points=int(keep.sum()),
                         n_saturated=int((~keep).sum()))


@dataclass(frozen=True, eq=False)
class DeltaSweep:
    """Scalar tonemap response to one impulse cube: (input, output) pairs."""

    m: int
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=float)
        t = np.asarray(self.outputs, dtype=float)
        if u.ndim != 1 or u.shape != t.shape or u.size < 4:
            raise ValidationError("sweep needs matching input/output vectors "
                                  "(length >= 4)")
        if np.any(np.diff(u) <= 0):
            raise ValidationError("sweep inputs must be strictly increasing")
        if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
            raise ValidationError("sweep outputs must lie in [0, 1]")
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", np.clip(t, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class DeltaEstimateReport:
    estimates: np.ndarray
    no_response: tuple[int, ...]
    anomalies: dict[int, str] = field(default_factory=dict)


def _flank_line(u: np.ndarray, t: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(u, t, 1)
    return float(slope), float(intercept)


def _sweep_apex(sweep: DeltaSweep, band: tuple[float, float]
                ) -> tuple[float, str | None]:
    """Apex abscissa of a triangular response via flank-line intersection.

    Falls back to the raw argmax (flagged as an anomaly) when the flanks
    cannot be fit.
    """
    u, t = sweep.inputs, sweep.outputs
    peak = float(t.max())
    near_peak = t >= peak * (1.0 - 1e-9)
    p_first = int(np.argmax(near_peak))
    p_last = int(len(t) - 1 - np.argmax(near_peak[::-1]))

    rising = t[:p_first + 1]
    falling = t[p_last:]
    anomaly = None
    if (np.any(np.diff(rising) < -1e-9 * peak)
            or np.any(np.diff(falling) > 1e-9 * peak)):
        anomaly = "non-unimodal response"

    lo, hi = band[0] * peak, band[1] * peak
    left = np.flatnonzero((t >= lo) & (t <= hi) & (np.arange(t.size) < p_first))
    right = np.flatnonzero((t >= lo) & (t <= hi) & (np.arange(t.size) > p_last))

    if left.size >= 2 and right.size >= 2:
        a1, b1 = _flank_line(u[left], t[left])
        a2, b2 = _flank_line(u[right], t[right])
        if a1 - a2 != 0:
            return (b2 - b1) / (a1 - a2), anomaly
    elif left.size < 2 and p_first == 0 and right.size >= 2:
        # Plateau reaches the low end of the sweep (clamped region): the apex
        # is where the falling flank meets the plateau level.
        a2, b2 = _flank_line(u[right], t[right])
        if a2 != 0:
            return (peak - b2) / a2, anomaly
    elif right.size < 2 and p_last == t.size - 1 and left.size >= 2:
        a1, b1 = _flank_line(u[left], t[left])
        if a1 != 0:
            return (peak - b1) / a1, anomaly
    return float(u[int(np.argmax(t))]), anomaly or "flank fit failed; used argmax"


def estimate_knots_delta(sweeps, size: int = 32, active_start: int = 3,
                         *, band: tuple[float, float] = (0.2, 0.8),
                         no_response_level: float = 1e-6
                         ) -> tuple[KnotGrid, DeltaEstimateReport]:
    """Estimate the knot coordinates from impulse-cube sweep responses.

    Requires one sweep per active knot index; sweeps for the inactive
    indices are optional and expected to be flat ("no response").
    """
    by_m = {s.m: s for s in sweeps}
    missing = [m for m in range(active_start, size + 1) if m not in by_m]
    if missing:
        raise EstimationError(f"missing sweeps for knot indices {missing}")

    no_response = []
    anomalies: dict[int, str] = {}
    for m in range(1, active_start):
        if m in by_m:
            if float(by_m[m].outputs.max()) <= no_response_level:
                no_response.append(m)
            else:
                anomalies[m] = "unexpected response at inactive knot"

    estimates = np.empty(size - active_start + 1)
    for m in range(active_start, size + 1):
        sweep = by_m[m]
        if float(sweep.outputs.max()) <= no_response_level:
            raise EstimationError(f"sweep {m} is flat; cannot estimate its knot")
        apex, anomaly = _sweep_apex(sweep, band)
        if anomaly:
            anomalies[m] = anomaly
        estimates[m - active_start] = apex

    if np.any(np.diff(estimates) <= 0):
        order = np.argsort(estimates, kind="stable")
        if not np.array_equal(order, np.arange(estimates.size)):
            anomalies[0] = "estimates were not monotone in m; sorted"
        estimates = estimates[order]
    try:
        grid = KnotGrid.from_active(estimates, size=size, active_start=active_start)
    except ValidationError as exc:
        raise EstimationError(f"knot estimates are not strictly increasing: {exc}")
    return grid, DeltaEstimateReport(estimates=estimates,
                                     no_response=tuple(no_response),
                                     anomalies=anomalies)


@dataclass(frozen=True, eq=False)
class KnotOptimizeReport:
    objective_init: float
    objective_final: float
    n_train: int
    n_holdout: int
    n_excluded: int
    train_median_255: float
    holdout_median_255: float
    n_evaluations: int
    converged: bool
    notes: tuple[str, ...] = ()


class _KnotObjective:
    """Sum-of-squares prediction error of the full model as a function of
    the log knot coordinates, with a soft monotonicity penalty."""

    def __init__(self, datasets, penalty_weight: float):
        self.datasets = datasets  # list of (u, v, curves-or-lut)
        self.penalty_weight = penalty_weight
        self.evaluations = 0

    def __call__(self, theta: np.ndarray) -> float:
        self.evaluations += 1
        gaps = np.diff(theta)
        penalty = self.penalty_weight * float(np.sum(np.minimum(gaps, 0.0) ** 2))
        knots = np.sort(np.exp(theta))
        return self.sse(knots) + penalty

    def sse(self, knots: np.ndarray) -> float:
        total = 0.0
        for u, v, payload in self.datasets:
            total += float(np.sum((self.predict(knots, u, payload) - v) ** 2))
        return total

    @staticmethod
    def predict(knots: np.ndarray, u: np.ndarray, payload) -> np.ndarray:
        if isinstance(payload, tuple):  # separable per-channel curves
            t = np.column_stack([np.interp(u[:, k], knots, payload[k])
                                 for k in range(3)])
        else:  # general cube: trilinear over the candidate grid
            start = 2
            cube = payload.outputs[start:, start:, start:, :]
            t = _trilinear(knots, cube, np.clip(u, knots[0], knots[-1]))
        return srgb_encode3(np.clip(t, 0.0, 1.0))


def estimate_knots_optimize(datasets, init: KnotGrid, *,
                            scale_constant: float = DEFAULT_SCALE_CONSTANT,
                            material_floor: float = 0.2,
                            holdout_fraction: float = HOLDOUT_FRACTION,
                            seed: int = 0,
                            simplex_max_evals: int = 4000,
                            max_restarts: int = 2,
                            polish_sweeps: int = 10
                            ) -> tuple[KnotGrid, KnotOptimizeReport]:
    """Estimate knot coordinates by minimizing model prediction error.

    ``datasets`` is a list of (samples, CubeLUT) pairs, each rendered under
    a known cube.  Samples with any material component below
    ``material_floor`` are excluded (the rendering model is biased there),
    and a fixed-seed holdout fraction is scored but never optimized on.
    The search runs over log knot coordinates with a Nelder-Mead simplex
    plus restarts, then a derivative-free per-coordinate polish.
    """
    if len(datasets) < 2:
        raise EstimationError("need samples under at least 2 distinct cubes")
    if init.active_start != 3:
        raise EstimationError("optimization expects the standard active range")

    rng = np.random.default_rng(seed)
    train_sets, holdout_sets = [], []
    n_excluded = n_train = n_holdout = 0
    for samples, lut in datasets:
        samples = list(samples)
        cols = sample_arrays(samples)
        keep = np.all(cols["m"] >= material_floor, axis=1)
        n_excluded += int(np.sum(~keep))
        kept = [s for s, k in zip(samples, keep) if k]
        if not kept:
            continue
        u = predict_unprocessed(kept, scale_constant=scale_constant)
        v = sample_arrays(kept)["v"]
        curves = lut.separable_channels()
        payload = (tuple(c[2:] for c in curves) if curves is not None else lut)
        holdout = rng.random(len(kept)) < holdout_fraction
        if np.any(~holdout):
            train_sets.append((u[~holdout], v[~holdout], payload))
        if np.any(holdout):
            holdout_sets.append((u[holdout], v[holdout], payload))
        n_train += int(np.sum(~holdout))
        n_holdout += int(np.sum(holdout))
    if not train_sets:
        raise EstimationError("no training samples survive the material filter")

    theta0 = np.log(init.active_values)
    probe = _KnotObjective(train_sets, penalty_weight=0.0)
    sse_init = probe(theta0)
    objective = _KnotObjective(train_sets,
                               penalty_weight=1e4 * max(1.0, sse_init))
    notes: list[str] = []

    if sse_init <= 1e-20:
        theta_best, f_best = theta0, sse_init
        converged = True
        notes.append("initial grid already optimal")
    else:
        theta_best, f_best, converged = _simplex_with_restarts(
            objective, theta0, simplex_max_evals, max_restarts)
        theta_best, f_best = _coordinate_polish(objective, theta_best, f_best,
                                                polish_sweeps)
        if not converged:
            notes.append("simplex hit its evaluation cap; result polished "
                         "per coordinate")

    knots = np.exp(theta_best)
    if np.any(np.diff(knots) <= 0):
        raise EstimationError("optimized knots are not strictly increasing")
    grid = KnotGrid.from_active(knots, size=init.size,
                                active_start=init.active_start)

    def median_err(sets) -> float:
        errs = [np.abs(_KnotObjective.predict(knots, u, payload) - v).ravel()
                for u, v, payload in sets]
        return float(np.median(np.concatenate(errs)) * 255.0) if errs else float("nan")

    report = KnotOptimizeReport(
        objective_init=float(sse_init), objective_final=float(f_best),
        n_train=n_train, n_holdout=n_holdout, n_excluded=n_excluded,
        train_median_255=median_err(train_sets),
        holdout_median_255=median_err(holdout_sets),
        n_evaluations=probe.evaluations + objective.evaluations,
        converged=converged, notes=tuple(notes))
    return grid, report


def _simplex_with_restarts(objective, theta0: np.ndarray, max_evals: int,
                           max_restarts: int) -> tuple[np.ndarray, float, bool]:
    theta, best = theta0, objective(theta0)
    converged = False
    for _ in range(max_restarts + 1):
        res = minimize(objective, theta, method="Nelder-Mead",
                       options={"maxfev": max_evals, "xatol": 1e-10,
                                "fatol": 1e-16, "adaptive": True})
        improved = res.fun < best
        if improved:
            theta, best = res.x, float(res.fun)
        converged = bool(res.success)
        if converged and not improved:
            break
        if best <= 1e-20:
            converged = True
            break
    return theta, best, converged


def _coordinate_polish(objective, theta: np.ndarray, f_value: float,
                       max_sweeps: int) -> tuple[np.ndarray, float]:
    """Cyclic bounded 1-D minimizations; each coordinate moves within the
    open interval between its neighbors, so monotonicity is preserved."""
    theta = theta.copy()
    for _ in range(max_sweeps):
        start_value = f_value
        for i in range(theta.size):
            lo = theta[i - 1] + 1e-12 if i > 0 else theta[i] - 1.0
            hi = theta[i + 1] - 1e-12 if i < theta.size - 1 else theta[i] + 1.0
            if hi <= lo:
                continue

            def fun_i(x, i=i):
                trial = theta.copy()
                trial[i] = x
                return objective(trial)

            res = minimize_scalar(fun_i, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            if res.fun < f_value:
                theta[i] = float(res.x)
                f_value = float(res.fun)
        if start_value - f_value <= 1e-15 * max(1.0, start_value):
            break
    return theta, f_value
