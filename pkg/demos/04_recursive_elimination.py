"""SHAP-guided recursive elimination of a screened support.

Terms are ranked by Shapley attribution, cut back by the one-standard-
deviation rule on cross-validated R^2, and the survivors below the EBIC
knee must defend themselves against their own knockoff copies in a
one-sided Wilcoxon test.

Run:  python demos/04_recursive_elimination.py
"""

from pdesieve import NoiseSpec, add_noise, denoise, simulate_pde
from pdesieve.rfe import rfe
from pdesieve.screen import ScreenConfig, adaptive_filter
from pdesieve.weaklib import build_library, sample_subdomains

field = simulate_pde("burgers", (256, -8, 8), (101, 0, 10))
noisy = denoise(add_noise(field, NoiseSpec(20.0, seed=1)), 13, 4)
domains = sample_subdomains(noisy, 2000, (20, 8), seed=2)
library = build_library(noisy, 6, 6, domains)

screened = adaptive_filter(library, ScreenConfig(K=25, seed=3))
print("screened:", sorted(library.labels[j] for j in screened.support.indices))

result = rfe(library, support=screened.support.indices, alpha=0.10, K=60, seed=4)
print("after RFE:", sorted(library.labels[j] for j in result.support.indices))

for entry in result.trace:
    if entry["stage"] == "shap_selection":
        print("\nSHAP ranking:", [library.labels[j] for j in entry["ranked"]])
        print("cv R^2 means:", [round(v, 4) for v in entry["cv_r2_mean"]])
        print("kept by 1-sd rule:", [library.labels[j] for j in entry["kept"]])
    else:
        pvals = {k: round(v, 3) for k, v in entry["p_values"].items()}
        verdict = "removed" if entry["removed"] else "kept"
        print(f"tested {library.labels[entry['term']]}: p={pvals} -> {verdict}")
