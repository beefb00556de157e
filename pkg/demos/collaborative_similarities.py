"""
Collaborative item similarities
===============================

Build every collaborative similarity on the same small interaction matrix
and look at how their neighbourhoods differ.
"""

import numpy as np

from cfwrec import InteractionMatrix, build_similarity

# Six users, five items. Users 0-2 like items 0-2, users 3-5 like items 3-4,
# and user 2 also touched item 3.
ratings = np.array([
    [5, 4, 0, 0, 0],
    [4, 0, 5, 0, 0],
    [3, 5, 4, 2, 0],
    [0, 0, 0, 5, 4],
    [0, 0, 0, 4, 5],
    [0, 0, 1, 5, 3],
], dtype=float)
urm = InteractionMatrix(ratings)

###############################################################################
# Neighbourhood methods compare item columns directly. The diagonal is always
# dropped, and each column keeps its ``k`` strongest neighbours.
for metric in ("cosine", "pearson", "adjusted_cosine", "jaccard"):
    s = build_similarity("knn", urm, metric=metric, k=2)
    print(f"knn/{metric:<16}", np.round(s.toarray()[:, 0], 3))

###############################################################################
# Graph methods score a two-step random walk item -> user -> item.
# ``pop_exponent`` (RP3beta) divides by the target item's popularity.
for name, params in (("p3alpha", {"alpha": 1.0}), ("rp3beta", {"alpha": 1.0, "pop_exponent": 0.5})):
    s = build_similarity(name, urm, k=2, **params)
    print(f"{name:<21}", np.round(s.toarray()[:, 0], 3))

###############################################################################
# SLIM learns a sparse item-item regression. The coordinate-descent variant
# records columns that hit the sweep limit (``epochs``) before converging;
# these nearly collinear columns need about 70 sweeps.
s = build_similarity("slim_mse", urm, l1=0.01, l2=0.1, epochs=200, k=2)
print("slim_mse             ", np.round(s.toarray()[:, 0], 3))
print("unconverged columns:", s.meta["unconverged_columns"])
s = build_similarity("slim_bpr", urm, epochs=200, learning_rate=0.05, k=2, seed=1)
print("slim_bpr             ", np.round(s.toarray()[:, 0], 3))
