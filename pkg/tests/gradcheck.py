"""Central-difference gradient check shared by the unit and acceptance suites."""

import numpy as np

from vadfuse.dnn import DnnWeights, init_weights, loss_and_grads


def _perturbed(w: DnnWeights, which: int, idx: tuple, delta: float) -> DnnWeights:
    params = [p.copy() for p in w.params()]
    params[which][idx] += delta
    return DnnWeights(*params, activation=w.activation)


def relative_errors(w: DnnWeights, X, T, n_coords: int, rng, h: float = 1e-6) -> np.ndarray:
    _, grads = loss_and_grads(w, X, T)
    errs = []
    for _ in range(n_coords):
        which = int(rng.integers(4))
        idx = tuple(int(rng.integers(s)) for s in grads[which].shape)
        up = loss_and_grads(_perturbed(w, which, idx, h), X, T)[0]
        down = loss_and_grads(_perturbed(w, which, idx, -h), X, T)[0]
        numeric = (up - down) / (2 * h)
        analytic = grads[which][idx]
        errs.append(abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8))
    return np.array(errs)


def random_problem(rng, input_dim: int, hidden: int, n: int, activation: str = "relu"):
    w = init_weights(input_dim, hidden, seed=int(rng.integers(1 << 30)), activation=activation)
    w = DnnWeights(w.W1, rng.normal(0, 0.1, hidden), w.W2, rng.normal(0, 0.1, 2), activation)
    X = rng.normal(size=(n, input_dim))
    T = rng.choice([0.0, 0.5, 1.0], size=n)
    return w, X, T
