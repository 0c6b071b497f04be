"""Container for a set of POVM elements with outcome labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError


@dataclass(frozen=True)
class PovmSet:
    """``L`` operators of common dimension, stored as an ``(L, d, d)`` array.

    Labels are outcome records (``"off,on"``) or parity classes
    (``"even"``, ``"odd"``).
    """

    elements: np.ndarray
    labels: tuple

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=complex)
        if el.ndim != 3 or el.shape[1] != el.shape[2]:
            raise DimensionError(f"elements must have shape (L, d, d), got {el.shape}")
        if len(self.labels) != el.shape[0]:
            raise DimensionError("one label per element required")
        object.__setattr__(self, "elements", el)
        object.__setattr__(self, "labels", tuple(str(lab) for lab in self.labels))

    def __len__(self):
        return self.elements.shape[0]

    def __getitem__(self, label: str) -> np.ndarray:
        return self.elements[self.labels.index(str(label))]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def completeness_residual(self) -> float:
        """Largest absolute entry of ``sum(elements) - I``."""
        return float(np.abs(self.elements.sum(axis=0) - np.eye(self.dim)).max())

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.elements + self.elements.conj().transpose(0, 2, 1))
        return float(np.linalg.eigvalsh(herm).min())

    def hermiticity_residual(self) -> float:
        return float(np.abs(self.elements - self.elements.conj().transpose(0, 2, 1)).max())

    def probabilities(self, rhos: np.ndarray) -> np.ndarray:
        """``Tr[rho_k Pi_l]`` for a stack of density matrices, shape ``(K, L)``."""
        rhos = np.asarray(rhos, dtype=complex)
        if rhos.ndim == 2:
            rhos = rhos[None]
        return np.einsum("kij,lji->kl", rhos, self.elements).real

    def truncated(self, dim: int = 2) -> "PovmSet":
        if dim > self.dim:
            raise DimensionError(f"cannot truncate dim {self.dim} to {dim}")
        return PovmSet(self.elements[:, :dim, :dim].copy(), self.labels)

    def parity_grouped(self) -> "PovmSet":
        """Sum elements by parity of the number of ``on`` events."""
        if set(self.labels) <= {"even", "odd"}:
            return self
        even = np.zeros((self.dim, self.dim), dtype=complex)
        odd = np.zeros_like(even)
        for lab, el in zip(self.labels, self.elements):
            n_on = lab.split(",").count("on")
            if n_on % 2:
                odd += el
            else:
                even += el
        return PovmSet(np.stack([even, odd]), ("even", "odd"))

    def permuted(self, order) -> "PovmSet":
        order = list(order)
        return PovmSet(self.elements[order], tuple(self.labels[i] for i in order))
