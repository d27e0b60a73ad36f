"""Central finite-difference gradient checking.

The numerical side here is deliberately independent of the autodiff engine:
it only re-runs a user-supplied scalar forward function under perturbed
inputs. ``check_gradients`` compares the engine's analytic gradients against
central differences at 1e-4 relative tolerance with a 1e-6 absolute floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nn import Parameter

REL_TOL = 1e-4
ABS_FLOOR = 1e-6
STEP = 1e-4


@dataclass
class GradReport:
    name: str
    checked: int = 0
    max_abs_err: float = 0.0
    max_rel_err: float = 0.0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def line(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return (f"[{status}] {self.name}: {self.checked} coords, "
                f"max_rel={self.max_rel_err:.3e}, max_abs={self.max_abs_err:.3e}")


def central_difference(forward: Callable[[], float], array: np.ndarray, index, step: float = STEP) -> float:
    """d(forward)/d(array[index]) by central differences, restoring the entry."""
    original = array[index]
    array[index] = original + step
    plus = forward()
    array[index] = original - step
    minus = forward()
    array[index] = original
    return (plus - minus) / (2.0 * step)


def check_gradients(
    forward: Callable[[], "object"],
    params: Sequence[Parameter],
    name: str = "model",
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    rel_tol: float = REL_TOL,
    abs_floor: float = ABS_FLOOR,
    step: float = STEP,
) -> GradReport:
    """Compare analytic gradients of ``forward()`` against central differences.

    ``forward`` must build a fresh graph and return the scalar loss Tensor.
    Every parameter is probed; when ``max_coords_per_param`` is set, larger
    tensors are probed at that many seeded random coordinates.
    """
    report = GradReport(name=name)

    for p in params:
        p.tensor.grad = None
    loss = forward()
    loss.backward()
    analytic = {id(p): (p.tensor.grad.copy() if p.tensor.grad is not None else np.zeros_like(p.data))
                for p in params}
    for p in params:
        p.tensor.grad = None

    def scalar_forward() -> float:
        value = forward().item()
        return value

    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        grad_flat = analytic[id(p)].reshape(-1)
        for idx in coords:
            numeric = central_difference(scalar_forward, flat, idx, step)
            a = grad_flat[idx]
            abs_err = abs(a - numeric)
            rel_err = abs_err / max(abs(a), abs(numeric), 1e-12)
            report.checked += 1
            report.max_abs_err = max(report.max_abs_err, abs_err)
            if abs_err > abs_floor:
                report.max_rel_err = max(report.max_rel_err, rel_err)
                if rel_err > rel_tol:
                    report.failures.append(
                        f"{p.name or 'param'}[{idx}]: analytic={a:.8e} numeric={numeric:.8e} rel={rel_err:.3e}")
    return report
