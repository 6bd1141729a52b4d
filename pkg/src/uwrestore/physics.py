"""Differentiable Jaffe-McGlamery image formation and its inverse.

An observed underwater image decomposes per channel into a depth-attenuated
direct signal and a backscatter term that saturates to the veiling light:

    I_c = J_c * t_d_c**z + b_inf_c * (1 - t_b_c**z)

where ``z`` is the per-pixel camera-to-scene distance in meters and the
coefficients are per-channel transmissions ``t = exp(-beta)`` in (0, 1).
Working in transmissions keeps the exponentials bounded and matches the
sigmoid range of the coefficient encoders; ``beta`` is recoverable as
``-ln(t)`` for reporting.

All tensor functions broadcast: images are (..., 3, H, W), depth is
(..., 1, H, W), and coefficients are (..., 3, 1, 1).
"""

from dataclasses import dataclass

import numpy as np
import torch
from scipy import optimize

DEPTH_MIN = 0.0
DEPTH_MAX = 6.0
VEILING_MIN = 0.6
VEILING_MAX = 1.0

# Floor on the attenuation transmission t_d**z before division in restore().
# float32 is the training dtype, where a larger floor keeps gradients finite
# when the encoders push t_d toward 0; float64 is the analysis dtype, where
# the floor must stay below any transmission reachable from valid inputs.
RESTORE_EPS = {torch.float32: 1e-3, torch.float64: 1e-8}


@dataclass
class DegradationParams:
    """Per-image degradation coefficients: the style of one water body.

    Each field is an (r, g, b) triple. ``t_d`` and ``t_b`` are per-unit-depth
    transmissions of the direct and backscatter paths, both in (0, 1);
    ``b_inf`` is the veiling light in [0.6, 1].
    """

    t_d: tuple
    t_b: tuple
    b_inf: tuple

    def validate(self):
        problems = []
        for name, lo, hi, open_ends in (
            ("t_d", 0.0, 1.0, True),
            ("t_b", 0.0, 1.0, True),
            ("b_inf", VEILING_MIN, VEILING_MAX, False),
        ):
            triple = getattr(self, name)
            if len(triple) != 3:
                problems.append(f"{name} must have 3 components")
                continue
            for channel, value in zip("rgb", triple):
                if not np.isfinite(value):
                    problems.append(f"{name}.{channel}={value} is not finite")
                elif open_ends and not (lo < value < hi):
                    problems.append(
                        f"{name}.{channel}={value} outside open interval ({lo}, {hi})"
                    )
                elif not open_ends and not (lo <= value <= hi):
                    problems.append(f"{name}.{channel}={value} outside [{lo}, {hi}]")
        if problems:
            raise ValueError("invalid degradation parameters: " + "; ".join(problems))
        return self

    def tensors(self, dtype=torch.float32, device=None):
        """The three coefficients as (3, 1, 1) tensors for broadcasting."""
        make = lambda v: torch.tensor(v, dtype=dtype, device=device).view(3, 1, 1)
        return make(self.t_d), make(self.t_b), make(self.b_inf)

    def to_dict(self):
        out = {}
        for name in ("t_d", "t_b", "b_inf"):
            for channel, value in zip("rgb", getattr(self, name)):
                out[f"{name}_{channel}"] = float(value)
        return out

    @classmethod
    def from_dict(cls, mapping):
        def triple(name):
            return tuple(float(mapping[f"{name}_{c}"]) for c in "rgb")

        return cls(t_d=triple("t_d"), t_b=triple("t_b"), b_inf=triple("b_inf"))

    def beta(self):
        """Attenuation coefficients (beta_d, beta_b) implied by the transmissions."""
        return (
            tuple(-np.log(v) for v in self.t_d),
            tuple(-np.log(v) for v in self.t_b),
        )


def _check_shapes(img, z):
    if img.shape[-3] != 3:
        raise ValueError(f"image must have 3 channels, got shape {tuple(img.shape)}")
    if z.shape[-3] != 1:
        raise ValueError(f"depth must have 1 channel, got shape {tuple(z.shape)}")
    if img.shape[-2:] != z.shape[-2:]:
        raise ValueError(
            f"image and depth spatial dims differ: {tuple(img.shape)} vs {tuple(z.shape)}"
        )


def degrade(j, z, t_d, t_b, b_inf, clamp=True):
    """Forward degradation of a clear image into a synthetic underwater one.

    Per channel: ``i = j * t_d**z + b_inf * (1 - t_b**z)``. At ``z == 0`` the
    output equals the input exactly. With ``clamp`` the result is clipped to
    [0, 1] for discriminators, metrics, and saving; pass ``clamp=False`` to
    obtain the raw value for loss computation.
    """
    _check_shapes(j, z)
    out = j * t_d**z + b_inf * (1.0 - t_b**z)
    return out.clamp(0.0, 1.0) if clamp else out


def restore(i, z, t_d, t_b, b_inf, clamp=True, eps=None):
    """Inverse degradation: remove backscatter, then undo attenuation.

    Per channel: ``j = (i - b_inf * (1 - t_b**z)) / max(t_d**z, eps)``.
    The division floor ``eps`` defaults per dtype (see ``RESTORE_EPS``).
    Raw (unclamped) values can exceed [0, 1] where the input saturated.
    """
    _check_shapes(i, z)
    if eps is None:
        eps = RESTORE_EPS.get(i.dtype, 1e-8)
    direct = i - b_inf * (1.0 - t_b**z)
    out = direct / torch.clamp(t_d**z, min=eps)
    return out.clamp(0.0, 1.0) if clamp else out


def estimate_backscatter(z, t_b, b_inf):
    """Backscatter component ``b_inf * (1 - t_b**z)``.

    Monotone nondecreasing in ``z`` and saturating to ``b_inf``.
    """
    if z.shape[-3] != 1:
        raise ValueError(f"depth must have 1 channel, got shape {tuple(z.shape)}")
    return b_inf * (1.0 - t_b**z)


class FitError(RuntimeError):
    """Parameter fit did not reach the requested residual."""

    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass
class FitResult:
    params: DegradationParams
    residual: float
    flat_residual: bool
    at_boundary: bool


def _channel_residual(t_d, t_b, i, j, z):
    """Mean squared residual of the formation model for one channel, with the
    veiling light solved in closed form (the model is linear in b_inf)."""
    a = j * t_d**z
    w = 1.0 - t_b**z
    denom = np.sum(w * w)
    if denom < 1e-12:
        b = VEILING_MIN
    else:
        b = float(np.clip(np.sum((i - a) * w) / denom, VEILING_MIN, VEILING_MAX))
    r = a + b * w - i
    return float(np.mean(r * r)), b


def fit_constant_params(i, j, z, tol=1e-6, grid_size=24):
    """Recover per-channel (t_d, t_b, b_inf) from a degraded/clean image pair.

    Verification utility for synthetic data: grid search over the two
    transmissions with the veiling light solved linearly, then local
    refinement. Runs independently of the torch graph (pure numpy/scipy).

    Raises :class:`FitError` if the refined residual exceeds ``tol`` (skipped
    when the residual surface is flat, e.g. for ``z == 0`` where parameters
    are unidentifiable).
    """
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if i.shape != j.shape or i.shape[0] != 3:
        raise ValueError("expected matching (3, H, W) images")
    zmap = z[0] if z.ndim == 3 else z

    t_grid = np.linspace(0.05, 0.995, grid_size)
    fitted = {"t_d": [], "t_b": [], "b_inf": []}
    worst_residual = 0.0
    flat = False
    at_boundary = False
    for c in range(3):
        ic, jc = i[c], j[c]
        best = (np.inf, None)
        worst_grid = -np.inf
        for td in t_grid:
            for tb in t_grid:
                res, b = _channel_residual(td, tb, ic, jc, zmap)
                worst_grid = max(worst_grid, res)
                if res < best[0]:
                    best = (res, (td, tb, b))
        if worst_grid - best[0] < 1e-12:
            # Residual surface is flat: any transmissions fit (z == 0 case).
            flat = True
        td0, tb0, b0 = best[1]

        def objective(p):
            res, _ = _channel_residual(p[0], p[1], ic, jc, zmap)
            return res

        opt = optimize.minimize(
            objective,
            x0=[td0, tb0],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000},
        )
        td, tb = np.clip(opt.x, 1e-4, 1.0 - 1e-9)
        res, b = _channel_residual(td, tb, ic, jc, zmap)
        if res > best[0]:  # keep the grid solution if refinement wandered off
            res, (td, tb, b) = best[0], best[1]
        fitted["t_d"].append(float(td))
        fitted["t_b"].append(float(tb))
        fitted["b_inf"].append(float(b))
        worst_residual = max(worst_residual, res)
        if td > 1.0 - 1e-3 or tb > 1.0 - 1e-3:
            at_boundary = True

    if worst_residual > tol and not flat:
        raise FitError("parameter fit did not converge", worst_residual)

    params = DegradationParams(
        t_d=tuple(fitted["t_d"]),
        t_b=tuple(fitted["t_b"]),
        b_inf=tuple(fitted["b_inf"]),
    )
    return FitResult(
        params=params,
        residual=worst_residual,
        flat_residual=flat,
        at_boundary=at_boundary,
    )
