"""End-to-end orchestration: data, library, screening, elimination, selection.

A single JSON-style config drives the full run; one root seed is split
deterministically per stage, so identical configs give identical reports
(timings aside, which live outside the deterministic payload).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .fields import Axis, NoiseSpec, add_noise, denoise, load_field, simulate_pde
from .regress import fit_linear, library_ridge
from .rfe import rfe
from .screen import ScreenConfig, adaptive_filter
from .select import (
    SelectConfig,
    build_decision_matrix,
    enumerate_alternatives,
    ic_select,
    mcdm_select,
)
from .weaklib import build_library, sample_subdomains, structural_complexity

BUILTIN_GRIDS = {
    "burgers": ((256, -8.0, 8.0), (101, 0.0, 10.0)),
    "kdv": ((512, -20.0, 20.0), (501, 0.0, 40.0)),
    "ks": ((1024, 0.0, 32.0 * math.pi), (251, 0.0, 100.0)),
}

_SCHEMA = {
    "dataset": {"name", "fields", "nx", "x_range", "nt", "t_range", "initial_condition"},
    "denoise": {"window", "polyorder"},
    "library": {"max_poly", "max_deriv", "n_domains", "half_widths"},
    "screen": {"q0", "q_max", "dq", "s_min", "s_max", "K", "statistic", "smatrix"},
    "rfe": {"alpha", "K"},
    "select": {"miscoverage", "repeats", "n_keep"},
}
_TOP_KEYS = {
    "dataset",
    "noise_percent",
    "denoise",
    "library",
    "screen",
    "rfe",
    "select",
    "seed",
    "workers",
    "ground_truth",
}


def validate_config(raw):
    """Reject unknown keys and fill defaults; returns a plain dict."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    for section, allowed in _SCHEMA.items():
        sub = raw.get(section)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise ConfigurationError(f"config section {section!r} must be an object")
        bad = set(sub) - allowed
        if bad:
            raise ConfigurationError(f"unknown keys in {section!r}: {sorted(bad)}")
    cfg = {
        "dataset": dict(raw.get("dataset") or {}),
        "noise_percent": float(raw.get("noise_percent", 0.0)),
        "denoise": dict(raw["denoise"]) if raw.get("denoise") else None,
        "library": dict(raw.get("library") or {}),
        "screen": dict(raw.get("screen") or {}),
        "rfe": dict(raw.get("rfe") or {}),
        "select": dict(raw.get("select") or {}),
        "seed": int(raw.get("seed", 0)),
        "workers": int(raw.get("workers", 1)),
        "ground_truth": dict(raw["ground_truth"]) if raw.get("ground_truth") else None,
    }
    if not cfg["dataset"]:
        raise ConfigurationError("config needs a dataset section")
    lib = cfg["library"]
    for key in ("max_poly", "max_deriv", "n_domains", "half_widths"):
        if key not in lib:
            raise ConfigurationError(f"library section misses {key!r}")
    if int(lib["max_poly"]) < 1 or int(lib["max_deriv"]) < 1:
        raise ConfigurationError("library caps must be >= 1")
    if int(lib["n_domains"]) < 1:
        raise ConfigurationError("n_domains must be >= 1")
    return cfg


@dataclass
class DiscoveryReport:
    """Everything a run discovered, plus metrics when truth is known."""

    payload: dict
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings=True):
        out = dict(self.payload)
        if include_timings:
            out["timings"] = {k: float(v) for k, v in self.timings.items()}
        return out

    def to_json(self, include_timings=True):
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json(text):
        data = json.loads(text)
        timings = data.pop("timings", {})
        return DiscoveryReport(payload=data, timings=timings)


def compute_metrics(discovered, truth):
    """eFDR / ePOWER of a labelled support, plus coefficient errors.

    ``discovered`` maps term label to its raw-scale coefficient; ``truth``
    maps label to the true coefficient. Percentage coefficient errors are
    reported only for exact structural recovery.
    """
    if not truth:
        raise ConfigurationError("ground truth must be non-empty")
    found = set(discovered)
    true = set(truth)
    if not found:
        raise ConfigurationError("discovered support is empty")
    efdr = len(found - true) / len(found)
    epower = len(found & true) / len(true)
    out = {"eFDR": efdr, "ePOWER": epower, "exact_recovery": found == true}
    if found == true:
        errs = [
            100.0 * abs(discovered[k] - truth[k]) / abs(truth[k]) for k in sorted(true)
        ]
        out["coefficient_error_percent"] = {
            k: e for k, e in zip(sorted(true), errs)
        }
        out["ce_mean"] = float(np.mean(errs))
        out["ce_std"] = float(np.std(errs))
    else:
        out["warning"] = "support is not an exact recovery; %CE omitted"
    return out


def _load_dataset(cfg, noise_seed):
    ds = cfg["dataset"]
    if "fields" in ds:
        paths = ds["fields"] if isinstance(ds["fields"], (list, tuple)) else [ds["fields"]]
        fields = [load_field(p) for p in paths]
    else:
        name = str(ds.get("name", "")).lower()
        if name not in BUILTIN_GRIDS:
            raise ConfigurationError(f"unknown builtin dataset {name!r}")
        space_default, t_default = BUILTIN_GRIDS[name]
        nx = int(ds.get("nx", space_default[0]))
        x_lo, x_hi = ds.get("x_range", space_default[1:])
        nt = int(ds.get("nt", t_default[0]))
        t_lo, t_hi = ds.get("t_range", t_default[1:])
        ic = ds.get("initial_condition", "default")
        fields = [
            simulate_pde(name, Axis(nx, float(x_lo), float(x_hi)),
                         Axis(nt, float(t_lo), float(t_hi)), ic)
        ]
    clean = list(fields)
    if cfg["noise_percent"] > 0:
        fields = [
            add_noise(f, NoiseSpec(cfg["noise_percent"], seed=noise_seed + i))
            for i, f in enumerate(fields)
        ]
    if cfg["denoise"]:
        fields = [
            denoise(f, int(cfg["denoise"]["window"]), int(cfg["denoise"]["polyorder"]))
            for f in fields
        ]
    return clean, fields


def _stage_seeds(root):
    children = np.random.SeedSequence(root).spawn(5)
    names = ("noise", "subdomains", "screen", "rfe", "select")
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def run_pipeline(config, collect_artifacts=False):
    """Run data -> library -> screen -> rfe -> select -> refit.

    Returns a :class:`DiscoveryReport`; with ``collect_artifacts`` also the
    in-memory stage objects (library, screening result, RFE result,
    decision matrix, selection result) for export or inspection.
    """
    cfg = validate_config(config)
    seeds = _stage_seeds(cfg["seed"])
    timings = {}

    t0 = time.perf_counter()
    _, fields = _load_dataset(cfg, seeds["noise"])
    timings["data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lib_cfg = cfg["library"]
    half_widths = lib_cfg["half_widths"]
    sds = sample_subdomains(
        fields[0], int(lib_cfg["n_domains"]), half_widths, seed=seeds["subdomains"]
    )
    library = build_library(
        fields,
        int(lib_cfg["max_poly"]),
        int(lib_cfg["max_deriv"]),
        sds,
        subdomain_seed=seeds["subdomains"],
    )
    timings["library"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    screen_kwargs = dict(cfg["screen"])
    screen_cfg = ScreenConfig(
        q0=float(screen_kwargs.get("q0", 0.5)),
        q_max=float(screen_kwargs.get("q_max", 1.0)),
        dq=float(screen_kwargs.get("dq", 0.01)),
        s_min=int(screen_kwargs.get("s_min", 2)),
        s_max=screen_kwargs.get("s_max"),
        K=int(screen_kwargs.get("K", 100)),
        statistic=str(screen_kwargs.get("statistic", "shap_ds")),
        smatrix=str(screen_kwargs.get("smatrix", "equi")),
        seed=seeds["screen"],
        workers=cfg["workers"],
    )
    screening = adaptive_filter(library, screen_cfg)
    timings["screen"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rfe_result = rfe(
        library,
        support=screening.support.indices,
        alpha=float(cfg["rfe"].get("alpha", 0.10)),
        K=int(cfg["rfe"].get("K", 100)),
        seed=seeds["rfe"],
    )
    timings["rfe"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rfe_cols = list(rfe_result.support.indices)
    X_rfe = library.design[:, rfe_cols]
    y = library.responses[0]
    lam = library_ridge(library.n_rows)
    alternatives = enumerate_alternatives(X_rfe, y, ridge_penalty=lam)
    complexities = [structural_complexity(library.terms[j]) for j in rfe_cols]
    sel_cfg = SelectConfig(
        n_keep=int(cfg["select"].get("n_keep", 5)),
        miscoverage=float(cfg["select"].get("miscoverage", 0.1)),
        repeats=int(cfg["select"].get("repeats", 10)),
        seed=seeds["select"],
        ridge=lam,
        quantile_l2=lam,
    )
    if len(alternatives) >= 2:
        matrix = build_decision_matrix(alternatives, X_rfe, y, complexities, sel_cfg)
        selection = mcdm_select(matrix)
        ic = ic_select(matrix.alternatives, X_rfe, y)
    else:
        matrix, selection, ic = None, None, None
    winner_local = (
        list(selection.winner.support) if selection else list(range(len(rfe_cols)))
    )
    winner_cols = [rfe_cols[j] for j in winner_local]
    timings["select"] = time.perf_counter() - t0

    coef_std = fit_linear(library.design[:, winner_cols], y, ridge_penalty=0.0)
    coefficients = library.raw_coefficients(winner_cols, coef_std)

    labels = library.labels
    payload = {
        "seeds": seeds,
        "root_seed": cfg["seed"],
        "library": {
            "n_rows": library.n_rows,
            "n_terms": library.n_terms,
            "state_names": list(library.state_names),
        },
        "screen": {
            "support": sorted(labels[j] for j in screening.support.indices),
            "tuned_q": screening.tuned_q,
            "estimator": screening.support.estimator,
            "s_max": screening.s_max,
            "truncated": screening.truncated,
        },
        "rfe": {
            "support": sorted(labels[j] for j in rfe_cols),
        },
        "winner": {
            "support": sorted(labels[j] for j in winner_cols),
            "size": len(winner_cols),
        },
        "coefficients": coefficients,
    }
    if matrix is not None:
        payload["alternatives"] = [
            {
                "size": alt.size,
                "support": sorted(labels[rfe_cols[j]] for j in alt.support),
                "rss": alt.rss,
            }
            for alt in matrix.alternatives
        ]
        payload["mcdm_ordering_sizes"] = [
            matrix.alternatives[i].size for i in selection.ordering
        ]
        payload["ic_select"] = {
            "aic_size": ic["aic"].size,
            "ebic_size": ic["ebic"].size,
        }
    if cfg["ground_truth"]:
        payload["metrics"] = compute_metrics(coefficients, cfg["ground_truth"])

    report = DiscoveryReport(payload=payload, timings=timings)
    if collect_artifacts:
        artifacts = {
            "library": library,
            "screening": screening,
            "rfe": rfe_result,
            "matrix": matrix,
            "selection": selection,
            "ic": ic,
            "winner_columns": winner_cols,
        }
        return report, artifacts
    return report


def load_config(path):
    with open(Path(path)) as fh:
        return validate_config(json.load(fh))
