"""FDR-controlled identification of governing PDEs from noisy fields.

The pipeline: simulate or load spatiotemporal fields (:mod:`pdesieve.fields`),
assemble a weak-form candidate library (:mod:`pdesieve.weaklib`), screen it
with aggregated model-X knockoff filters (:mod:`pdesieve.knockoff`,
:mod:`pdesieve.screen`), prune the survivors by SHAP-guided recursive
elimination (:mod:`pdesieve.rfe`) and pick the governing equation by
multi-criteria ranking of best-subset alternatives (:mod:`pdesieve.select`,
:mod:`pdesieve.mcdm`). :func:`pdesieve.pipeline.run_pipeline` wires the
stages together from a single JSON-style config.
"""

from . import errors
from .fields import Axis, Field, NoiseSpec, add_noise, denoise, simulate_pde
from .pipeline import DiscoveryReport, compute_metrics, run_pipeline
from .rfe import rfe
from .screen import ScreenConfig, SupportSet, adaptive_filter
from .select import SelectConfig, enumerate_alternatives, ic_select, mcdm_select
from .weaklib import (
    CandidateLibrary,
    build_library,
    sample_subdomains,
    structural_complexity,
)

__all__ = [
    "Axis",
    "CandidateLibrary",
    "DiscoveryReport",
    "Field",
    "NoiseSpec",
    "ScreenConfig",
    "SelectConfig",
    "SupportSet",
    "add_noise",
    "adaptive_filter",
    "build_library",
    "compute_metrics",
    "denoise",
    "enumerate_alternatives",
    "errors",
    "ic_select",
    "mcdm_select",
    "rfe",
    "run_pipeline",
    "sample_subdomains",
    "simulate_pde",
    "structural_complexity",
]

__version__ = "0.1.0"
