"""Device-number cross-validation folds and accuracy."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from radfit.core import DeviceId, DomainError

N_DEVICE_FOLDS = 24


@dataclass(frozen=True)
class FoldPlan:
    """Fold ``i`` tests every device numbered ``fold_numbers[i]``."""

    fold_numbers: tuple
    test_sets: tuple  # tuple of tuples of DeviceId

    @property
    def n_folds(self) -> int:
        return len(self.test_sets)

    def split(self, ids: Sequence[DeviceId], fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Boolean (train, test) masks over ``ids`` for one fold."""
        test = set(self.test_sets[fold])
        mask = np.array([d in test for d in ids], dtype=bool)
        return ~mask, mask


def make_device_folds(device_ids: Sequence[DeviceId], n_folds: int = N_DEVICE_FOLDS) -> FoldPlan:
    """One fold per device number; manufacturers never define folds.

    Device numbers without any device produce no fold.
    """
    ids = sorted(set(device_ids))
    if not ids:
        raise DomainError("cannot build folds from an empty device list")
    bad = [str(d) for d in ids if not 1 <= d.index <= n_folds]
    if bad:
        raise DomainError(f"device numbers must lie in 1..{n_folds}: {bad[:5]}")
    numbers = sorted({d.index for d in ids})
    return FoldPlan(tuple(numbers), tuple(tuple(d for d in ids if d.index == k) for k in numbers))


def accuracy_score(predicted, actual) -> float:
    p = np.asarray(predicted)
    a = np.asarray(actual)
    if p.shape != a.shape or p.ndim != 1:
        raise DomainError(f"label vectors differ in shape: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise DomainError("accuracy of an empty label vector is undefined")
    return float(np.mean(p == a))
