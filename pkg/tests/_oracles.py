"""Independent brute-force oracles used to cross-check the library.

Everything here is deliberately written with plain Python loops and
sorting, not by calling back into the library code paths it verifies.
"""

import numpy as np


def finite_difference_grads(model, x, targets, loss_fn, h=1e-3):
    """Central-difference gradients of loss_fn(model, x, targets) for every
    weight and bias, evaluated in the model's own dtype (use float64
    models for tight comparisons)."""
    grads_w = [np.zeros_like(w) for w in model.weights]
    grads_b = [np.zeros_like(b) for b in model.biases]
    for param, grad in list(zip(model.weights, grads_w)) + list(zip(model.biases, grads_b)):
        flat_p = param.reshape(-1)
        flat_g = grad.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn(model, x, targets)
            flat_p[i] = orig - h
            down = loss_fn(model, x, targets)
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * h)
    return grads_w, grads_b


def max_relative_error(analytic, numeric):
    """Gradcheck-style relative error: |a - b| / max(1, |a|, |b|)."""
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def ece_bruteforce(probs, labels, n_bins):
    """Top-label ECE by explicit per-sample bin scan.

    Same conventions as the library: (lower, upper] bins over (0, 1],
    confidence 0 in bin 1, argmax ties to the lowest index, float64 sums
    in sample order, bins accumulated in ascending order.
    """
    n = len(labels)
    uppers = [(m + 1) / n_bins for m in range(n_bins)]
    bins = [[] for _ in range(n_bins)]
    for i in range(n):
        row = [float(v) for v in probs[i]]
        conf = max(row)
        pred = row.index(conf)
        slot = n_bins - 1
        for m in range(n_bins):
            if conf <= uppers[m]:
                slot = m
                break
        bins[slot].append((conf, 1.0 if pred == int(labels[i]) else 0.0))
    total = 0.0
    for m in range(n_bins):
        if not bins[m]:
            continue
        conf_sum = 0.0
        acc_sum = 0.0
        for conf, hit in bins[m]:
            conf_sum += conf
            acc_sum += hit
        count = len(bins[m])
        total += (count / n) * abs(acc_sum / count - conf_sum / count)
    return total


def prune_regrow_bruteforce(weights, grads, mask, fraction):
    """Full-sort prune/regrow oracle on one layer; ties to lowest flat index."""
    w = [float(v) for v in np.asarray(weights).ravel()]
    g = [float(v) for v in np.asarray(grads).ravel()]
    m = [bool(v) for v in np.asarray(mask).ravel()]
    active = [i for i in range(len(m)) if m[i]]
    inactive = [i for i in range(len(m)) if not m[i]]
    k = int(fraction * len(active))
    k = min(k, len(inactive))
    prune = sorted(active, key=lambda i: (abs(w[i]), i))[:k]
    grow = sorted(inactive, key=lambda i: (-abs(g[i]), i))[:k]
    keep = (set(active) - set(prune)) | set(grow)
    out = np.zeros(len(m), dtype=bool)
    out[sorted(keep)] = True
    return out.reshape(np.asarray(mask).shape)


def mc_dropout_enumeration(model_weights, biases, mask_layers, keep_prob, x, forward_fn):
    """Exact MC-dropout expectation by enumerating every random-mask support
    over the active positions (feasible for <= ~16 active weights)."""
    active_coords = []
    for li, m in enumerate(mask_layers):
        for idx in np.argwhere(m):
            active_coords.append((li, tuple(idx)))
    n_active = len(active_coords)
    expected = None
    for pattern in range(2**n_active):
        masked = [w * m for w, m in zip(model_weights, mask_layers)]
        prob = 1.0
        for bit, (li, idx) in enumerate(active_coords):
            if pattern >> bit & 1:
                prob *= keep_prob
            else:
                prob *= 1.0 - keep_prob
                masked[li][idx] = 0.0
        probs = forward_fn(masked, biases, x)
        expected = prob * probs if expected is None else expected + prob * probs
    return expected
