"""Face-connected components of the detector band {W~(lambda_bar u) > 0}."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .energies import PhaseFieldParams
from .grid import DomainMask, ScalarField
from .scalar import cutoff_wtilde


def interface_band(u: np.ndarray, mask: DomainMask, p: PhaseFieldParams) -> np.ndarray:
    return mask.inside & (cutoff_wtilde(p.cutoff.lambda_bar * u, p.cutoff) > 0.0)


def label_band(u: np.ndarray, mask: DomainMask, p: PhaseFieldParams) -> tuple[np.ndarray, int]:
    """Labels 1..n of the band components (0 off the band), face adjacency."""
    labels, n = ndimage.label(interface_band(u, mask, p))
    return labels, int(n)


def count_components(u: ScalarField, mask: DomainMask, p: PhaseFieldParams) -> int:
    mask.check_grid(u)
    return label_band(u.values, mask, p)[1]
