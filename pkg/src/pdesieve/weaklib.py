"""Weak-form candidate libraries for PDE identification.

Each candidate term is represented by its integral against a smooth,
compactly supported test function over many randomly placed space-time
subdomains. Spatial derivatives are transferred onto the test function by
integration by parts, so only undifferentiated field products are ever
sampled from the (noisy) data:

* pure derivative, order ``d``:        ``(-1)^d * I[ d^d(w) * u ]``
* monomial times first derivative:     ``u^a u_x = (u^(a+1))_x / (a+1)``,
  so ``-1/(a+1) * I[ w_x * u^(a+1) ]``
* higher derivative of a power, d>=2:  term is ``(u^(a+1))_xx...`` itself,
  ``(-1)^d * I[ d^d(w) * u^(a+1) ]``

The response is the weak form of ``+u_t`` (time derivative transferred onto
the test weight). Cross-state products such as ``v u_x`` cannot be fully
transferred; for those the derivative factor is evaluated numerically on the
(smoothed) field and integrated directly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import product as iter_product
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .errors import AssemblyError, ConfigurationError
from .fields import Field

_AXIS_LETTERS = "xyz"


@dataclass(frozen=True)
class TermDescriptor:
    """One candidate term.

    ``poly_degrees`` counts the state factors of the written term per state
    variable, except that a bare derivative (no monomial multiplier) counts
    zero; ``deriv_orders`` is the derivative order per spatial axis. The
    constant term has all entries zero. ``monomial`` holds the exponents of
    the undifferentiated multiplier and ``deriv`` the ``(state, axis,
    order)`` of the derivative factor, if any; together they define the
    integrand documented in the module docstring.
    """

    label: str
    poly_degrees: tuple[int, ...]
    deriv_orders: tuple[int, ...]
    monomial: tuple[int, ...]
    deriv: tuple[int, int, int] | None

    @property
    def is_constant(self):
        return sum(self.monomial) == 0 and self.deriv is None


def structural_complexity(term) -> int:
    """Polynomial degree plus derivative order plus one."""
    return sum(term.poly_degrees) + sum(term.deriv_orders) + 1


@dataclass(frozen=True)
class Subdomain:
    """A rectangular space-time window, physical centre and half-widths."""

    centre: tuple[float, ...]
    half_widths: tuple[float, ...]


@dataclass
class CandidateLibrary:
    """Standardised weak-form design matrix with its term metadata.

    ``design`` has unit-norm columns; the raw column is
    ``design[:, j] * column_scales[j]``. ``responses`` holds one weak-form
    time-derivative vector per state variable, also scaled to unit norm
    (``response_scales`` records the original norms) so that regression
    coefficients and ridge penalties live on an O(1) scale. Raw-scale
    equation coefficients come out of :meth:`raw_coefficients`.
    """

    design: np.ndarray
    responses: list[np.ndarray]
    terms: list[TermDescriptor]
    column_scales: np.ndarray
    subdomain_seed: int
    state_names: tuple[str, ...]
    response_scales: np.ndarray | None = None

    def __post_init__(self):
        if self.response_scales is None:
            self.response_scales = np.ones(len(self.responses))

    @property
    def n_rows(self):
        return self.design.shape[0]

    @property
    def n_terms(self):
        return self.design.shape[1]

    @property
    def labels(self):
        return [t.label for t in self.terms]

    def raw_design(self):
        return self.design * self.column_scales[None, :]

    def rescale_coefficients(self, coef, response=0):
        """Map coefficients fitted on the standardised problem to raw scale."""
        coef = np.asarray(coef, dtype=float)
        return coef * self.response_scales[response] / self.column_scales

    def raw_coefficients(self, columns, coef_std, response=0):
        """Raw-scale coefficients for a fitted subset of columns."""
        scale_y = self.response_scales[response]
        return {
            self.terms[j].label: float(c * scale_y / self.column_scales[j])
            for j, c in zip(columns, coef_std)
        }

    def column(self, label):
        return self.design[:, self.labels.index(label)]


# ---------------------------------------------------------------------------
# term enumeration


def _monomials(max_poly, n_states):
    out = []
    for exps in iter_product(range(max_poly + 1), repeat=n_states):
        if 1 <= sum(exps) <= max_poly or sum(exps) == 0:
            out.append(tuple(exps))
    out.sort(key=lambda e: (sum(e), e))
    return out


def _monomial_label(exps, names):
    parts = []
    for e, name in zip(exps, names):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return " ".join(parts)


def _deriv_label(state, axis, order, names):
    return f"{names[state]}_{_AXIS_LETTERS[axis] * order}"


def _make_term(exps, deriv, names, n_axes):
    n_states = len(names)
    deriv_orders = [0] * n_axes
    poly = list(exps)
    if deriv is None:
        label = _monomial_label(exps, names) if sum(exps) else "1"
        return TermDescriptor(label, tuple(poly), tuple(deriv_orders), exps, None)
    state, axis, order = deriv
    deriv_orders[axis] = order
    if sum(exps) == 0:
        label = _deriv_label(state, axis, order, names)
        return TermDescriptor(label, tuple([0] * n_states), tuple(deriv_orders), exps, deriv)
    poly[state] += 1
    same_state_only = all(e == 0 for s, e in enumerate(exps) if s != state)
    if same_state_only and order == 1:
        label = f"{_monomial_label(exps, names)} {_deriv_label(state, axis, order, names)}"
    elif same_state_only:
        inner = _monomial_label((exps[state] + 1,), (names[state],))
        label = f"({inner})_{_AXIS_LETTERS[axis] * order}"
    else:
        label = f"{_monomial_label(exps, names)} {_deriv_label(state, axis, order, names)}"
    return TermDescriptor(label, tuple(poly), tuple(deriv_orders), exps, deriv)


def enumerate_terms(max_poly, max_deriv, n_states, n_axes, names=None):
    """All candidate terms for the given caps, in deterministic order."""
    names = tuple(names) if names else tuple("uv"[:n_states])
    monos = _monomials(max_poly, n_states)
    terms = [_make_term(e, None, names, n_axes) for e in monos]
    for state in range(n_states):
        for axis in range(n_axes):
            for order in range(1, max_deriv + 1):
                for e in monos:
                    terms.append(_make_term(e, (state, axis, order), names, n_axes))
    return terms


def term_count(max_poly, max_deriv, n_states, n_axes):
    """Closed-form size of :func:`enumerate_terms`."""
    m = math.comb(max_poly + n_states, n_states)
    return m * (1 + n_states * n_axes * max_deriv)


# ---------------------------------------------------------------------------
# subdomain sampling


def sample_subdomains(field, n_domains, half_width_cells, seed):
    """Draw subdomain centres uniformly from grid points where the window fits."""
    if n_domains < 1:
        raise ConfigurationError("n_domains must be >= 1")
    n_axes_total = field.ndim_space + 1
    if np.isscalar(half_width_cells):
        hws = [int(half_width_cells)] * n_axes_total
    else:
        hws = [int(h) for h in half_width_cells]
        if len(hws) != n_axes_total:
            raise ConfigurationError(
                f"need {n_axes_total} half-widths (space axes then time), got {len(hws)}"
            )
    sizes = field.values.shape
    for hw, size in zip(hws, sizes):
        if hw < 1 or 2 * hw + 1 > size:
            raise ConfigurationError(
                f"half-width {hw} infeasible for axis of length {size}"
            )
    spacings = field.spacings()
    los = [ax.lo for ax in field.space_axes] + [field.t_axis.lo]
    rng = np.random.default_rng(seed)
    centres_idx = np.column_stack(
        [rng.integers(hw, size - hw, size=n_domains) for hw, size in zip(hws, sizes)]
    )
    out = []
    for row in centres_idx:
        centre = tuple(lo + i * d for lo, i, d in zip(los, row, spacings))
        half = tuple(h * d for h, d in zip(hws, spacings))
        out.append(Subdomain(centre, half))
    return out


def _subdomain_indices(field, subdomains):
    """Convert physical subdomain descriptions back to grid indices."""
    spacings = field.spacings()
    los = [ax.lo for ax in field.space_axes] + [field.t_axis.lo]
    sizes = field.values.shape
    centres = np.empty((len(subdomains), len(sizes)), dtype=int)
    hws = None
    for i, sd in enumerate(subdomains):
        idx = [int(round((c - lo) / d)) for c, lo, d in zip(sd.centre, los, spacings)]
        hw = [int(round(h / d)) for h, d in zip(sd.half_widths, spacings)]
        if hws is None:
            hws = hw
        elif hw != hws:
            raise ConfigurationError("all subdomains must share half-widths")
        for a, (ci, hwa, size) in enumerate(zip(idx, hw, sizes)):
            if ci - hwa < 0 or ci + hwa > size - 1:
                raise ConfigurationError(f"subdomain {i} falls outside the grid on axis {a}")
        centres[i] = idx
    return centres, hws


# ---------------------------------------------------------------------------
# test function and assembly


def bump_profile(ss, order, derivative=0):
    """Value of ``d^r/ds^r (1 - s^2)^order`` on local coordinates ``ss``."""
    poly = Polynomial([1.0, 0.0, -1.0]) ** order
    return poly.deriv(derivative)(np.asarray(ss, dtype=float))


def _axis_profiles(hw_cells, spacing, order, max_derivative):
    """Per-axis profile derivative vectors and trapezoid weights."""
    npts = 2 * hw_cells + 1
    ss = np.linspace(-1.0, 1.0, npts)
    h_phys = hw_cells * spacing
    profiles = [bump_profile(ss, order, r) / h_phys**r for r in range(max_derivative + 1)]
    quad = np.full(npts, spacing)
    quad[0] *= 0.5
    quad[-1] *= 0.5
    return profiles, quad


def _outer(vectors):
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def _gather_windows(full, centres, hws):
    nd = full.ndim
    n_dom = centres.shape[0]
    index = []
    for a in range(nd):
        offs = np.arange(-hws[a], hws[a] + 1)
        shape = [1] * (nd + 1)
        shape[a + 1] = offs.size
        idx = centres[:, a].reshape((n_dom,) + (1,) * nd) + offs.reshape(shape)
        index.append(idx)
    return full[tuple(index)]


def _numeric_derivative(values, axis, order, spacing):
    out = values
    for _ in range(order):
        out = np.gradient(out, spacing, axis=axis, edge_order=2)
    return out


def build_library(
    fields,
    max_poly,
    max_deriv,
    subdomains,
    weight_smoothness=None,
    state_names=None,
    subdomain_seed=0,
):
    """Assemble the weak-form regression problem over the given subdomains.

    Parameters
    ----------
    fields : Field or sequence of one or two Fields on identical grids
    max_poly : polynomial degree cap for monomial multipliers (>= 1)
    max_deriv : single-axis derivative order cap (>= 1)
    subdomains : output of :func:`sample_subdomains`
    weight_smoothness : test-function exponent ``m`` in ``(1 - s^2)^m``;
        defaults to ``max_deriv + 1`` so all transferred derivatives vanish
        on the subdomain boundary
    state_names : variable names used in term labels, default ``u`` (and ``v``)
    subdomain_seed : seed recorded for provenance in the library metadata
    """
    if isinstance(fields, Field):
        fields = [fields]
    fields = list(fields)
    if not 1 <= len(fields) <= 2:
        raise ConfigurationError("build_library takes one or two state fields")
    base = fields[0]
    for f in fields[1:]:
        if f.space_axes != base.space_axes or f.t_axis != base.t_axis:
            raise ConfigurationError("state fields must share their grids")
    if max_poly < 1 or max_deriv < 1:
        raise ConfigurationError("max_poly and max_deriv must be >= 1")
    if weight_smoothness is None:
        weight_smoothness = max_deriv + 1
    elif weight_smoothness < max_deriv + 1:
        raise ConfigurationError(
            "test function must stay smoother than the highest transferred derivative: "
            f"need weight_smoothness >= {max_deriv + 1}"
        )
    if not subdomains:
        raise ConfigurationError("no subdomains supplied")

    n_states = len(fields)
    n_axes = base.ndim_space
    names = tuple(state_names) if state_names else tuple("uv"[:n_states])
    if len(names) != n_states:
        raise ConfigurationError("state_names must match the number of fields")
    terms = enumerate_terms(max_poly, max_deriv, n_states, n_axes, names)

    centres, hws = _subdomain_indices(base, subdomains)
    spacings = base.spacings()
    profiles, quads = [], []
    for a in range(n_axes + 1):
        prof, quad = _axis_profiles(hws[a], spacings[a], weight_smoothness, max_deriv)
        profiles.append(prof)
        quads.append(quad)
    quad_nd = _outer(quads)

    def weight_array(axis=None, order=0):
        vecs = []
        for a in range(n_axes + 1):
            r = order if a == axis else 0
            vecs.append(profiles[a][r])
        return _outer(vecs) * quad_nd * ((-1) ** order)

    w_plain = weight_array()
    w_time = -_outer([profiles[a][0] for a in range(n_axes)] + [profiles[n_axes][1]]) * quad_nd

    # windows of state powers, gathered once per needed power
    max_power = max_poly + 1
    power_windows = []
    for f in fields:
        per_state = {1: _gather_windows(f.values, centres, hws)}
        for b in range(2, max_power + 1):
            per_state[b] = _gather_windows(f.values**b, centres, hws)
        power_windows.append(per_state)

    n_dom = centres.shape[0]
    win_axes = tuple(range(1, n_axes + 2))

    def integrate(windows, warr):
        return np.tensordot(windows, warr, axes=(win_axes, tuple(range(n_axes + 1))))

    def monomial_windows(exps):
        out = None
        for s, e in enumerate(exps):
            if e == 0:
                continue
            w = power_windows[s][e]
            out = w if out is None else out * w
        return out

    design = np.empty((n_dom, len(terms)))
    numeric_cache = {}
    for j, term in enumerate(terms):
        if term.deriv is None:
            if sum(term.monomial) == 0:
                design[:, j] = np.sum(w_plain) * np.ones(n_dom)
            else:
                design[:, j] = integrate(monomial_windows(term.monomial), w_plain)
            continue
        state, axis, order = term.deriv
        a_same = term.monomial[state]
        cross = any(e > 0 for s, e in enumerate(term.monomial) if s != state)
        if not cross:
            wins = power_windows[state][a_same + 1]
            warr = weight_array(axis, order)
            col = integrate(wins, warr)
            if order == 1:
                col /= a_same + 1
            design[:, j] = col
        else:
            key = (state, axis, order)
            if key not in numeric_cache:
                dfield = _numeric_derivative(
                    fields[state].values, axis, order, spacings[axis]
                )
                numeric_cache[key] = _gather_windows(dfield, centres, hws)
            wins = numeric_cache[key]
            mono = monomial_windows(term.monomial)
            if mono is not None:
                wins = wins * mono
            design[:, j] = integrate(wins, w_plain)

    responses = [integrate(power_windows[s][1], w_time) for s in range(n_states)]

    norms = np.linalg.norm(design, axis=0)
    tol = 1e-14 * max(1.0, float(norms.max()))
    dead = np.flatnonzero(norms < tol)
    if dead.size:
        bad = ", ".join(terms[j].label for j in dead)
        raise AssemblyError(f"library columns are identically zero: {bad}")
    design = design / norms[None, :]
    response_scales = np.array([max(np.linalg.norm(r), 1e-300) for r in responses])
    responses = [r / s for r, s in zip(responses, response_scales)]

    return CandidateLibrary(
        design=design,
        responses=responses,
        terms=terms,
        column_scales=norms,
        subdomain_seed=int(subdomain_seed),
        state_names=names,
        response_scales=response_scales,
    )


# ---------------------------------------------------------------------------
# export / import


def export_library(lib, csv_path, manifest_path):
    """Write the standardised design as CSV plus a JSON term manifest."""
    response_names = [f"{s}_t" for s in lib.state_names]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(response_names + lib.labels)
        for i in range(lib.n_rows):
            row = [f"{r[i]:.17g}" for r in lib.responses]
            row += [f"{v:.17g}" for v in lib.design[i]]
            writer.writerow(row)
    manifest = {
        "state_names": list(lib.state_names),
        "responses": response_names,
        "subdomain_seed": int(lib.subdomain_seed),
        "response_scales": [float(s) for s in lib.response_scales],
        "column_scales": [float(s) for s in lib.column_scales],
        "terms": [
            {
                "label": t.label,
                "poly_degrees": list(t.poly_degrees),
                "deriv_orders": list(t.deriv_orders),
                "monomial": list(t.monomial),
                "deriv": list(t.deriv) if t.deriv else None,
            }
            for t in lib.terms
        ],
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_library(csv_path, manifest_path):
    """Rebuild a :class:`CandidateLibrary` from its exported artifacts."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    terms = [
        TermDescriptor(
            t["label"],
            tuple(t["poly_degrees"]),
            tuple(t["deriv_orders"]),
            tuple(t["monomial"]),
            tuple(t["deriv"]) if t["deriv"] else None,
        )
        for t in manifest["terms"]
    ]
    data = np.genfromtxt(Path(csv_path), delimiter=",", skip_header=1)
    if data.ndim == 1:
        data = data[None, :]
    n_resp = len(manifest["responses"])
    responses = [data[:, i].copy() for i in range(n_resp)]
    design = data[:, n_resp:]
    return CandidateLibrary(
        design=design,
        responses=responses,
        terms=terms,
        column_scales=np.asarray(manifest["column_scales"], dtype=float),
        subdomain_seed=int(manifest["subdomain_seed"]),
        state_names=tuple(manifest["state_names"]),
        response_scales=np.asarray(
            manifest.get("response_scales", [1.0] * n_resp), dtype=float
        ),
    )
