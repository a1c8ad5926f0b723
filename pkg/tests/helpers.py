import numpy as np

from dgpn.graph import build_graph


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return build_graph(zip(iu[keep].tolist(), ju[keep].tolist()), n)


def circulant(n, offsets):
    return build_graph([(i, (i + o) % n) for i in range(n) for o in offsets], n)


def extended(stack, params, csd):
    """Copies in extended precision, so central differences resolve small gradients."""
    wide = np.longdouble
    stack = stack.__class__(stack.variant, stack.K, stack.beta,
                            tuple(s.astype(wide) for s in stack.subparts), stack.weights)
    params = params.with_arrays({k: v.astype(wide) for k, v in params.arrays().items()})
    return stack, params, np.asarray(csd, dtype=wide)


def central_difference(objective, params, h=1e-6):
    """Central-difference gradient of ``objective(params)`` for every parameter entry."""
    out = {}
    for name, arr in params.arrays().items():
        num = np.zeros(arr.shape)
        for idx in np.ndindex(arr.shape):
            plus, minus = arr.copy(), arr.copy()
            plus[idx] += h
            minus[idx] -= h
            diff = objective(params.with_arrays({name: plus})) - objective(params.with_arrays({name: minus}))
            num[idx] = float(diff / (2 * h))
        out[name] = num
    return out


def max_relative_error(analytic, numeric, floor=1e-12):
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        denom = np.maximum(np.maximum(np.abs(num), np.abs(ana)), floor)
        worst = max(worst, float(np.max(np.abs(num - ana) / denom)))
    return worst
