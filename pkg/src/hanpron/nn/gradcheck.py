from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

ROUNDOFF_FACTOR = 4.0

LossAndGrads = Callable[[], tuple[float, Mapping[str, np.ndarray]]]


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: Optional[tuple[str, tuple]]
    tolerance: float
    floor: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    loss_and_grads: LossAndGrads,
    params: Mapping[str, np.ndarray],
    tolerance: float = 1e-5,
    n_samples: Optional[int] = None,
    step: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
    floor: Optional[float] = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_and_grads`` must be deterministic (dropout off) and read the
    current contents of ``params``, which are perturbed in place and
    restored. With ``n_samples`` set, that many coordinates are drawn
    uniformly over all parameters; otherwise every coordinate is checked.

    Central differences cannot resolve a derivative more finely than about
    ``eps * |loss| / step``. By default the relative-error denominator is
    floored at ``ROUNDOFF_FACTOR`` times that resolution divided by
    ``tolerance``, so a coordinate whose gradient is below the resolution
    passes only if analytic and numeric values agree to within a few ulps
    of the loss. Pass ``floor`` explicitly to override.
    """
    loss, grads = loss_and_grads()
    if floor is None:
        resolution = np.finfo(np.float64).eps * max(abs(loss), 1.0) / step
        floor = max(1e-8, ROUNDOFF_FACTOR * resolution / tolerance)
    analytic = {k: np.array(v, copy=True) for k, v in grads.items()}
    coords = [(name, idx) for name, p in params.items() for idx in np.ndindex(p.shape)]
    if n_samples is not None and n_samples < len(coords):
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[i] for i in sorted(picks)]
    worst, worst_err = None, 0.0
    for name, idx in coords:
        p = params[name]
        orig = p[idx]
        p[idx] = orig + step
        up, _ = loss_and_grads()
        p[idx] = orig - step
        down, _ = loss_and_grads()
        p[idx] = orig
        numeric = (up - down) / (2.0 * step)
        err = relative_error(float(analytic[name][idx]), numeric, floor)
        if err > worst_err or worst is None:
            worst, worst_err = (name, idx), err
    return GradCheckReport(worst_err, len(coords), worst, tolerance, floor)
