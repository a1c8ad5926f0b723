"""Score class semantic descriptions against the class structure of the features."""

import numpy as np

from dgpn.csd_eval import class_prototypes, evaluate_csd_quality, relation_distribution

rng = np.random.default_rng(0)
labels = np.repeat(np.arange(5), 40)
centers = rng.normal(size=(5, 64))
X = centers[labels] + 0.5 * rng.normal(size=(200, 64))

protos = class_prototypes(X, labels)
print("relation matrix of the prototypes:\n", np.round(relation_distribution(protos), 3))

candidates = {
    "prototypes": protos,
    "noisy centers": centers + 0.3 * rng.normal(size=centers.shape),
    "random": rng.normal(size=centers.shape),
}
print(f"{'csd':15s} {'KL':>8s} {'cosine':>8s} {'euclid':>8s}")
for name, vecs in candidates.items():
    q = evaluate_csd_quality(X, labels, vecs, svd_rank=32)
    print(f"{name:15s} {q.kl:8.4f} {q.cosine:8.4f} {q.euclidean:8.4f}")
