"""
Small fully connected classifier with exact backpropagation.
The backward pass also returns the gradient with respect to the input
features, which is what the sensor backward pass consumes.
"""

import logging

import numpy as np
from scipy.special import logsumexp, softmax

from ..utils.errors import DomainError

logger = logging.getLogger(__name__)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient with respect to the logits.

    Args:
        logits: (B, C) or (C,)
        labels: (B,) integers or a single integer

    Returns:
        (loss, dlogits) with dlogits shaped like logits
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if not np.all(np.isfinite(logits)):
        raise DomainError("logits must be finite")
    if labels.shape != (logits.shape[0],):
        raise DomainError(f"{labels.shape[0]} labels for {logits.shape[0]} logit rows")

    rows = np.arange(logits.shape[0])
    losses = logsumexp(logits, axis=1) - logits[rows, labels]
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    grad /= logits.shape[0]
    return float(losses.mean()), (grad[0] if single else grad)


class MLPClassifier:
    """input -> [Linear -> ReLU] * len(hidden) -> Linear -> logits."""

    def __init__(self, input_dim, hidden=(128, 64), classes=10, seed=0):
        if input_dim < 1 or classes < 2:
            raise DomainError(f"invalid classifier shape {input_dim} -> {classes}")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.classes = int(classes)

        rng = np.random.default_rng(seed)
        sizes = (self.input_dim,) + self.hidden + (self.classes,)
        self.params = {}
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            # He initialisation for ReLU layers
            self.params[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.params[f"b{i}"] = np.zeros(fan_out)
        self.layers = len(sizes) - 1

    def forward(self, x):
        """Logits for a batch (B, input_dim), plus the cache for backward."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DomainError(f"classifier expects (B, {self.input_dim}) inputs, got {x.shape}")
        activations = [x]
        h = x
        for i in range(self.layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            h = np.maximum(z, 0.0) if i < self.layers - 1 else z
            activations.append(h)
        return h, activations

    def backward(self, cache, dlogits):
        """Gradients of the loss for all parameters and for the inputs.

        Returns:
            (dict of parameter gradients, (B, input_dim) input gradient)
        """
        grads = {}
        delta = np.asarray(dlogits, dtype=np.float64)
        for i in reversed(range(self.layers)):
            inputs = cache[i]
            grads[f"W{i}"] = inputs.T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            delta = delta @ self.params[f"W{i}"].T
            if i > 0:
                delta = delta * (cache[i] > 0.0)
        return grads, delta

    def predict(self, x):
        logits, _ = self.forward(x)
        return np.argmax(logits, axis=1)

    def get_flat(self):
        """All parameters as one vector, in layer order."""
        return np.concatenate([self.params[name].ravel() for name in self.param_names])

    def set_flat(self, flat):
        """Load parameters from a vector laid out like get_flat().

        Raises:
            DomainError: if the vector does not hold exactly one value per parameter
        """
        flat = np.asarray(flat, dtype=np.float64)
        expected = sum(self.params[name].size for name in self.param_names)
        if flat.ndim != 1 or flat.size != expected:
            raise DomainError(f"flat vector has shape {flat.shape}, expected ({expected},)")
        offset = 0
        for name in self.param_names:
            size = self.params[name].size
            self.params[name] = flat[offset:offset + size].reshape(self.params[name].shape).copy()
            offset += size

    @property
    def param_names(self):
        return [f"{kind}{i}" for i in range(self.layers) for kind in ("W", "b")]

    def to_dict(self):
        """Architecture and weights as nested lists."""
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "classes": self.classes,
            "params": {name: self.params[name].tolist() for name in self.param_names},
        }

    @classmethod
    def from_dict(cls, data):
        model = cls(data["input_dim"], tuple(data["hidden"]), data["classes"])
        for name in model.param_names:
            values = np.asarray(data["params"][name], dtype=np.float64)
            if values.shape != model.params[name].shape:
                raise DomainError(f"parameter {name} has shape {values.shape}, "
                                  f"expected {model.params[name].shape}")
            model.params[name] = values
        return model
