"""Finite test families of signed measures used for pairing checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DiscreteMeasure, SignedMeasure


@dataclass(frozen=True, eq=False)
class TestFamily:
    """A nonempty list of signed measures and a note on where it came from."""

    __test__ = False  # keep pytest from collecting this class

    members: list
    provenance: str = ""
    _potentials: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.members)

    def weight_matrix(self) -> np.ndarray:
        """Member coefficient vectors stacked as rows."""
        return np.array([np.asarray(m.weights, dtype=float) for m in self.members])

    def potentials(self, form) -> np.ndarray:
        """Member potentials stacked as rows (``gram @ lam`` for each member)."""
        key = form.space_id
        if key not in self._potentials:
            self._potentials[key] = self.weight_matrix() @ form.gram
        return self._potentials[key]


def build_default_family(form) -> TestFamily:
    """Unit coefficient vectors, one per cell.

    Their potentials are the columns of the gram matrix, which span because
    the gram is positive definite.
    """
    n = form.size
    members = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        members.append(SignedMeasure.from_measure(DiscreteMeasure(e, form.space_id)))
    return TestFamily(members, f"unit point masses on all {n} cells; potentials are the gram columns and span R^{n}")
