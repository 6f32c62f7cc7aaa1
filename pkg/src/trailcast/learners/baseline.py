"""Intercept-only reference model."""
from dataclasses import dataclass

import numpy as np


@dataclass
class InterceptOnly:
    """Predicts the training mean (or base rate) for every input."""

    constant: float

    def predict(self, X) -> np.ndarray:
        return np.full(len(X), self.constant)

    def hyperparameters(self) -> dict:
        return {}

    def to_payload(self) -> dict:
        return {"constant": self.constant}

    @classmethod
    def from_payload(cls, d):
        return cls(constant=float(d["constant"]))


def fit_intercept_only(y) -> InterceptOnly:
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot fit an intercept on an empty target")
    return InterceptOnly(constant=float(np.mean(y)))
