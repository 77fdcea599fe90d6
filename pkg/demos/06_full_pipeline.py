"""The whole journey: noisy field in, governing equation out.

Equivalent CLI invocation:

    pdesieve run --config <this config as JSON> --out-dir work/

Run:  python demos/06_full_pipeline.py
"""

import json

from pdesieve.pipeline import run_pipeline

config = {
    "dataset": {"name": "burgers"},
    "noise_percent": 20.0,
    "denoise": {"window": 13, "polyorder": 4},
    "library": {"max_poly": 6, "max_deriv": 6, "n_domains": 2000,
                "half_widths": [20, 8]},
    "screen": {"K": 50},
    "rfe": {"K": 100},
    "select": {"repeats": 10},
    "seed": 1,
    "ground_truth": {"u u_x": -1.0, "u_xx": 0.1},
}

report = run_pipeline(config)
p = report.payload

print("screened support :", p["screen"]["support"],
      f"(q tuned to {p['screen']['tuned_q']}, {p['screen']['estimator']})")
print("after elimination:", p["rfe"]["support"])
print("chosen equation  :", p["winner"]["support"])
terms = " ".join(f"{v:+.4f} {k}" for k, v in p["coefficients"].items())
print("u_t =", terms)
print("metrics          :", json.dumps(p["metrics"], indent=2, sort_keys=True))
print("stage timings (s):", {k: round(v, 1) for k, v in report.timings.items()})
