"""Real spherical harmonics.

One basis convention is used everywhere in this package: orthonormal real SH
in the standard (all-positive) form, indexed j = l*(l+1) + m for l = 0..degree,
m = -l..l. Directions are unit 3-vectors (x, y, z).
"""

import math

import numpy as np
import torch


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def eval_sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate the real SH basis at unit directions, any degree.

    dirs: (..., 3) unit vectors. Returns (..., (degree+1)^2).
    Uses the associated Legendre recurrence (no Condon-Shortley phase),
    which yields the all-positive real basis, e.g. Y_{1,1} = 0.48860251*x.
    """
    dirs = np.asarray(dirs)
    shape = dirs.shape[:-1]
    d = dirs.reshape(-1, 3).astype(np.float64)
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    n = d.shape[0]
    L = degree

    ct = z
    st = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.arctan2(y, x)

    # P[l][m] for 0 <= m <= l
    P = [[None] * (L + 1) for _ in range(L + 1)]
    P[0][0] = np.ones(n)
    for m in range(1, L + 1):
        P[m][m] = P[m - 1][m - 1] * (2 * m - 1) * st
    for m in range(0, L):
        P[m + 1][m] = ct * (2 * m + 1) * P[m][m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            P[l][m] = (ct * (2 * l - 1) * P[l - 1][m] - (l + m - 1) * P[l - 2][m]) / (l - m)

    out = np.empty((n, num_coeffs(L)))
    for l in range(L + 1):
        for m in range(0, l + 1):
            norm = math.sqrt(
                (2 * l + 1) / (4.0 * math.pi) * math.factorial(l - m) / math.factorial(l + m)
            )
            if m == 0:
                out[:, l * (l + 1)] = norm * P[l][0]
            else:
                base = math.sqrt(2.0) * norm * P[l][m]
                out[:, l * (l + 1) + m] = base * np.cos(m * phi)
                out[:, l * (l + 1) - m] = base * np.sin(m * phi)
    return out.reshape(*shape, num_coeffs(L))


# Polynomial forms of the same basis for degree <= 3 (differentiable path).
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (1.0925484305920792, 1.0925484305920792, 0.31539156525252005,
       1.0925484305920792, 0.5462742152960396)
_C3 = (0.5900435899266435, 2.890611442640554, 0.4570457994644658,
       0.3731763325901154, 0.4570457994644658, 1.445305721320277,
       0.5900435899266435)


def eval_sh_basis_torch(dirs: torch.Tensor, degree: int) -> torch.Tensor:
    """Same basis as :func:`eval_sh_basis`, degree <= 3, in torch ops."""
    if degree > 3:
        raise ValueError("torch SH path supports degree <= 3, got %d" % degree)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    cols = [torch.full_like(x, _C0)]
    if degree >= 1:
        cols += [_C1 * y, _C1 * z, _C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        cols += [
            _C2[0] * x * y,
            _C2[1] * y * z,
            _C2[2] * (2.0 * zz - xx - yy),
            _C2[3] * x * z,
            _C2[4] * (xx - yy),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        cols += [
            _C3[0] * y * (3.0 * xx - yy),
            _C3[1] * x * y * z,
            _C3[2] * y * (4.0 * zz - xx - yy),
            _C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            _C3[4] * x * (4.0 * zz - xx - yy),
            _C3[5] * z * (xx - yy),
            _C3[6] * x * (xx - 3.0 * yy),
        ]
    return torch.stack(cols, dim=-1)


def lambert_kernel(degree: int) -> np.ndarray:
    """Per-band clamped-cosine convolution coefficients A_l.

    Irradiance from an SH-projected radiance map: E(n) = sum_lm A_l L_lm Y_lm(n).
    """
    A = np.zeros(degree + 1)
    for l in range(degree + 1):
        if l == 0:
            A[l] = math.pi
        elif l == 1:
            A[l] = 2.0 * math.pi / 3.0
        elif l % 2 == 1:
            A[l] = 0.0
        else:
            h = l // 2
            A[l] = (
                2.0 * math.pi * (-1.0) ** (h - 1)
                / ((l + 2) * (l - 1))
                * math.factorial(l)
                / (2 ** l * math.factorial(h) ** 2)
            )
    return A


def band_expand(per_band: np.ndarray) -> np.ndarray:
    """Repeat per-band values into per-coefficient order (2l+1 copies each)."""
    return np.concatenate([np.full(2 * l + 1, per_band[l]) for l in range(len(per_band))])
