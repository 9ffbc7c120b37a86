from __future__ import annotations

import numpy as np
import pytest


def rel_err(a, b) -> float:
    """Max-abs difference scaled by the largest entry of ``b`` (absolute when b is ~0)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(float(np.max(np.abs(b))), 1e-300) if b.size else 1.0
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff if scale < 1e-12 else diff / scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
