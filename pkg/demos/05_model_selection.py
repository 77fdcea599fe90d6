"""Multi-criteria choice among best-subset PDE alternatives, and why not AIC.

Over a deliberately over-complete Burgers support (the two true terms plus
three plausible impostors), every support size contributes its RSS-best
subset. Classical information criteria chase the in-sample fit into the
larger alternatives; the six-criterion consensus does not.

Run:  python demos/05_model_selection.py
"""

from pdesieve import NoiseSpec, add_noise, denoise, simulate_pde
from pdesieve.regress import library_ridge
from pdesieve.select import (
    SelectConfig,
    build_decision_matrix,
    enumerate_alternatives,
    ic_select,
    mcdm_select,
)
from pdesieve.weaklib import build_library, sample_subdomains, structural_complexity

field = simulate_pde("burgers", (256, -8, 8), (101, 0, 10))
noisy = denoise(add_noise(field, NoiseSpec(20.0, seed=7)), 13, 4)
domains = sample_subdomains(noisy, 2000, (20, 8), seed=3)
library = build_library(noisy, 6, 6, domains)

support = ["u u_x", "u_xx", "u_xxxx", "u^5 u_x", "u^6 u_x"]
cols = [library.labels.index(l) for l in support]
X, y = library.design[:, cols], library.responses[0]
lam = library_ridge(library.n_rows)

alternatives = enumerate_alternatives(X, y, ridge_penalty=lam)
for alt in alternatives:
    names = [support[j] for j in alt.support]
    print(f"size {alt.size}: {names}  rss={alt.rss:.5f}")

ics = ic_select(alternatives, X, y)
print(f"\nAIC picks size {ics['aic'].size}, EBIC picks size {ics['ebic'].size}")

complexities = [structural_complexity(library.terms[j]) for j in cols]
matrix = build_decision_matrix(
    alternatives, X, y, complexities, SelectConfig(repeats=10, seed=11, ridge=lam)
)
print("\ncriteria "
      + " | ".join(f"{c[:12]:>12s}" for c in matrix.criteria))
for alt, row in zip(matrix.alternatives, matrix.raw):
    print(f"size {alt.size}: " + " | ".join(f"{v:12.4g}" for v in row))

selection = mcdm_select(matrix)
print(f"\nconsensus winner: size {selection.winner.size} "
      f"{[support[j] for j in selection.winner.support]}")
print("elimination order (sizes):",
      [matrix.alternatives[i].size for i in selection.ordering])
