"""Benchmark field generation, noise injection and smoothing.

Fields are gridded space-time tensors with axis metadata. Spatial axes are
periodic and sampled as ``x_j = lo + j*(hi - lo)/n`` (right endpoint
excluded); the time axis is sampled inclusively as
``t_j = lo + j*(hi - lo)/(n - 1)``. The value tensor is indexed
``(space..., time)`` in row-major order, so time is the fastest axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import savgol_filter

from .errors import ConfigurationError, DivergenceError

EQUATIONS = ("burgers", "kdv", "ks")

_DEALIAS_FRACTION = 2.0 / 3.0
_CFL = 0.4


@dataclass(frozen=True)
class Axis:
    """One grid axis: ``n`` points over ``[lo, hi]``."""

    n: int
    lo: float
    hi: float

    def validate(self, min_points):
        if self.n < min_points:
            raise ConfigurationError(f"axis needs >= {min_points} points, got {self.n}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise ConfigurationError(f"axis range [{self.lo}, {self.hi}] is invalid")


@dataclass(frozen=True)
class Field:
    """Gridded spatiotemporal state values with axis metadata."""

    values: np.ndarray
    space_axes: tuple[Axis, ...]
    t_axis: Axis
    name: str = "field"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        axes = tuple(ax if isinstance(ax, Axis) else Axis(*ax) for ax in self.space_axes)
        object.__setattr__(self, "space_axes", axes)
        if not isinstance(self.t_axis, Axis):
            object.__setattr__(self, "t_axis", Axis(*self.t_axis))
        for ax in self.space_axes:
            ax.validate(min_points=8)
        self.t_axis.validate(min_points=2)
        shape = tuple(ax.n for ax in self.space_axes) + (self.t_axis.n,)
        if self.values.shape != shape:
            raise ConfigurationError(
                f"value tensor shape {self.values.shape} does not match axes {shape}"
            )

    @property
    def ndim_space(self):
        return len(self.space_axes)

    def space_coords(self, axis_index):
        ax = self.space_axes[axis_index]
        return ax.lo + np.arange(ax.n) * (ax.hi - ax.lo) / ax.n

    def t_coords(self):
        return np.linspace(self.t_axis.lo, self.t_axis.hi, self.t_axis.n)

    def spacings(self):
        """Grid spacing per axis, spatial axes first, time last."""
        dxs = [(ax.hi - ax.lo) / ax.n for ax in self.space_axes]
        dt = (self.t_axis.hi - self.t_axis.lo) / (self.t_axis.n - 1)
        return tuple(dxs) + (dt,)

    def with_values(self, values, name=None):
        return Field(values, self.space_axes, self.t_axis, name or self.name)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise at ``level_percent`` of the field sd."""

    level_percent: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.level_percent) or self.level_percent < 0:
            raise ConfigurationError("noise level must be finite and >= 0")


def _kdv_soliton(x, c, x0):
    # travelling-wave solution of u_t = -u_xxx - 6 u u_x
    arg = 0.5 * np.sqrt(c) * (x - x0)
    return 0.5 * c / np.cosh(arg) ** 2


_PRESETS = {
    "burgers": {
        "default": lambda x: np.exp(-((x + 2.0) ** 2)),
        "zero": lambda x: np.zeros_like(x),
    },
    "kdv": {
        "default": lambda x: _kdv_soliton(x, 2.0, -12.0) + _kdv_soliton(x, 1.0, -4.0),
        "two_soliton": lambda x: _kdv_soliton(x, 2.0, -12.0) + _kdv_soliton(x, 1.0, -4.0),
        "single_soliton": lambda x: _kdv_soliton(x, 2.0, -10.0),
        "zero": lambda x: np.zeros_like(x),
    },
    "ks": {
        "default": lambda x, lo, hi: np.cos(2 * np.pi * (x - lo) / (hi - lo))
        * (1.0 + np.sin(2 * np.pi * (x - lo) / (hi - lo))),
        "zero": lambda x, lo, hi: np.zeros_like(x),
    },
}

# single-soliton preset parameters, exposed for reference demos
KDV_SOLITON_SPEED = 2.0
KDV_SOLITON_START = -10.0


def _initial_condition(equation, preset, x, axis):
    presets = _PRESETS[equation]
    if preset not in presets:
        raise ConfigurationError(
            f"unknown initial condition {preset!r} for {equation}; "
            f"choose from {sorted(presets)}"
        )
    fn = presets[preset]
    if equation == "ks":
        return fn(x, axis.lo, axis.hi)
    return fn(x)


def _linear_symbol(equation, k):
    if equation == "burgers":
        return -0.1 * k**2
    if equation == "kdv":
        return 1j * k**3  # -u_xxx
    return k**2 - k**4  # KS: -u_xx - u_xxxx


def _nonlinear_factor(equation):
    # -u u_x = -(1/2)(u^2)_x for Burgers/KS, -6 u u_x = -3 (u^2)_x for KdV
    return -3.0 if equation == "kdv" else -0.5


def _advective_speed(equation, u0):
    scale = 6.0 if equation == "kdv" else 1.0
    return scale * max(float(np.max(np.abs(u0))), 1e-12)


def _etdrk4_tables(L, dt):
    """Kassam-Trefethen contour-integral coefficients for one ETDRK4 step."""
    m = 32
    r = np.exp(2j * np.pi * (np.arange(1, m + 1) - 0.5) / m)
    lr = dt * L[:, None] + r[None, :]
    E = np.exp(dt * L)
    E2 = np.exp(0.5 * dt * L)
    Q = dt * np.mean((np.exp(lr / 2) - 1.0) / lr, axis=1)
    f1 = dt * np.mean((-4.0 - lr + np.exp(lr) * (4.0 - 3.0 * lr + lr**2)) / lr**3, axis=1)
    f2 = dt * np.mean((2.0 + lr + np.exp(lr) * (-2.0 + lr)) / lr**3, axis=1)
    f3 = dt * np.mean((-4.0 - 3.0 * lr - lr**2 + np.exp(lr) * (4.0 - lr)) / lr**3, axis=1)
    return E, E2, Q, f1, f2, f3


def simulate_pde(equation, space_axis, t_axis, initial_condition="default"):
    """Solve one of the 1D benchmark PDEs on a periodic grid.

    Equations (``u_t = ...``): Burgers ``0.1 u_xx - u u_x``, KdV
    ``-u_xxx - 6 u u_x``, KS ``-u_xx - u_xxxx - u u_x``. Integration uses
    ETDRK4 in Fourier space; the internal step is the largest power-of-two
    subdivision of the output interval meeting an advective CFL bound, and
    the solution is subsampled onto the requested time grid.

    Parameters
    ----------
    equation : {"burgers", "kdv", "ks"}
    space_axis, t_axis : Axis or (n, lo, hi) tuples
    initial_condition : name of a module preset for the chosen equation
    """
    equation = str(equation).lower()
    if equation not in EQUATIONS:
        raise ConfigurationError(f"unknown equation {equation!r}; choose from {EQUATIONS}")
    space_axis = Axis(*space_axis) if not isinstance(space_axis, Axis) else space_axis
    t_axis = Axis(*t_axis) if not isinstance(t_axis, Axis) else t_axis
    space_axis.validate(min_points=8)
    t_axis.validate(min_points=2)
    n = space_axis.n
    if n % 2 != 0:
        raise ConfigurationError("periodic spectral grid needs an even point count")

    length = space_axis.hi - space_axis.lo
    x = space_axis.lo + np.arange(n) * length / n
    u0 = _initial_condition(equation, initial_condition, x, space_axis)

    k = 2 * np.pi * np.fft.rfftfreq(n, d=length / n)
    L = _linear_symbol(equation, k)
    dealias = np.abs(k) <= _DEALIAS_FRACTION * np.max(np.abs(k))
    nl_fac = _nonlinear_factor(equation) * 1j * k

    dt_out = (t_axis.hi - t_axis.lo) / (t_axis.n - 1)
    dx = length / n
    dt_bound = _CFL * dx / _advective_speed(equation, u0)
    substeps = 1
    while dt_out / substeps > dt_bound and substeps < 2**24:
        substeps *= 2
    dt = dt_out / substeps

    E, E2, Q, f1, f2, f3 = _etdrk4_tables(L, dt)

    def nonlinear(v):
        u = np.fft.irfft(v, n=n)
        return nl_fac * (np.fft.rfft(u * u) * dealias)

    out = np.empty((n, t_axis.n))
    v = np.fft.rfft(u0)
    out[:, 0] = u0
    for it in range(1, t_axis.n):
        for _ in range(substeps):
            nv = nonlinear(v)
            a = E2 * v + Q * nv
            na = nonlinear(a)
            b = E2 * v + Q * na
            nb = nonlinear(b)
            c = E2 * a + Q * (2.0 * nb - nv)
            nc = nonlinear(c)
            v = E * v + nv * f1 + 2.0 * (na + nb) * f2 + nc * f3
        frame = np.fft.irfft(v, n=n)
        if not np.all(np.isfinite(frame)) or np.max(np.abs(frame)) > 1e8:
            raise DivergenceError(
                f"{equation} solve blew up at time index {it}", time_index=it
            )
        out[:, it] = frame

    return Field(out, (space_axis,), t_axis, name=equation)


def add_noise(field, spec):
    """Add i.i.d. Gaussian noise with sd ``sd(field) * level_percent / 100``."""
    if not np.all(np.isfinite(field.values)):
        raise ConfigurationError("field contains non-finite values")
    if spec.level_percent == 0:
        return field.with_values(field.values.copy())
    rng = np.random.default_rng(spec.seed)
    sigma = float(np.std(field.values)) * spec.level_percent / 100.0
    noisy = field.values + sigma * rng.standard_normal(field.values.shape)
    return field.with_values(noisy, name=f"{field.name}_noisy")


def denoise(field, window, polyorder):
    """Savitzky-Golay smoothing along each spatial axis, then along time.

    Mirror padding is used at the boundaries; interior points reproduce
    polynomials up to ``polyorder`` exactly.
    """
    window = int(window)
    polyorder = int(polyorder)
    if window % 2 == 0 or window < 3:
        raise ConfigurationError("window must be odd and >= 3")
    if polyorder >= window:
        raise ConfigurationError("polyorder must be < window")
    for size in field.values.shape:
        if window > size:
            raise ConfigurationError(f"window {window} exceeds axis length {size}")
    smooth = field.values
    for axis in range(field.values.ndim):
        smooth = savgol_filter(smooth, window, polyorder, axis=axis, mode="mirror")
    return field.with_values(smooth, name=f"{field.name}_denoised")


# ---------------------------------------------------------------------------
# field files: flat little-endian float64 payload + JSON sidecar


def save_field(field, path):
    """Write ``<path>.bin`` (LE float64, row-major, time fastest) and ``<path>.json``."""
    base = Path(path)
    if base.suffix in {".bin", ".json"}:
        base = base.with_suffix("")
    payload = np.ascontiguousarray(field.values, dtype="<f8")
    payload.tofile(base.with_suffix(".bin"))
    sidecar = {
        "name": field.name,
        "axes": [{"n": ax.n, "lo": ax.lo, "hi": ax.hi} for ax in field.space_axes],
        "t": {"n": field.t_axis.n, "lo": field.t_axis.lo, "hi": field.t_axis.hi},
        "order": "row-major, time fastest",
    }
    with open(base.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return base


def load_field(path):
    """Load a field written by :func:`save_field`."""
    base = Path(path)
    if base.suffix in {".bin", ".json"}:
        base = base.with_suffix("")
    with open(base.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    axes = tuple(Axis(int(a["n"]), float(a["lo"]), float(a["hi"])) for a in sidecar["axes"])
    t_axis = Axis(int(sidecar["t"]["n"]), float(sidecar["t"]["lo"]), float(sidecar["t"]["hi"]))
    shape = tuple(ax.n for ax in axes) + (t_axis.n,)
    values = np.fromfile(base.with_suffix(".bin"), dtype="<f8").reshape(shape)
    return Field(values, axes, t_axis, name=sidecar.get("name", base.name))


def export_csv(field, path):
    """Write a 1D field as (x, t, value) rows."""
    if field.ndim_space != 1:
        raise ConfigurationError("CSV export is defined for 1D fields only")
    x = field.space_coords(0)
    t = field.t_coords()
    with open(path, "w") as fh:
        fh.write("x,t,value\n")
        for i in range(len(x)):
            for j in range(len(t)):
                fh.write(f"{x[i]:.17g},{t[j]:.17g},{field.values[i, j]:.17g}\n")
