"""Finite-difference gradient fixtures shared by unit and acceptance tests."""
import numpy as np

from decompens.learners import LearnerSpec, dropout_masks, init_params, loss_and_grads
from oracles import central_difference, relative_error


def worst_gradient_error(kind, seed, with_dropout=False):
    rng = np.random.default_rng(seed)
    n, L, T = 6, 5, 3
    spec = LearnerSpec(kind=kind, recurrent_units=4, hidden=(6, 5),
                       dropouts=(0.3, 0.2) if with_dropout else (0.0, 0.0), bottleneck=4,
                       max_epochs=2, patience=1, seed=seed)
    params = init_params(spec, L, T, rng)
    # random offsets keep every ReLU away from its kink at zero
    for v in params.values():
        v += 0.1 * rng.standard_normal(v.shape)
    X = rng.standard_normal((n, L))
    Y = rng.standard_normal((n, T))
    masks = dropout_masks(spec, n, rng) if with_dropout else None
    _, analytic = loss_and_grads(spec, params, X, Y, masks)
    numeric = central_difference(lambda: loss_and_grads(spec, params, X, Y, masks)[0], params)
    return max(relative_error(numeric[k], analytic[k]) for k in params)
