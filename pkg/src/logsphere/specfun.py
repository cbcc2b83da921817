"""Gamma-family special functions and orthonormal basis evaluation.

Log-gamma and digamma are computed by argument shifting followed by the
asymptotic (Bernoulli) series, which keeps the absolute error near machine
precision over the whole range this package uses without pulling in an
external special-function dependency.  The basis routines evaluate real
orthonormal harmonics: Fourier modes on the circle and normalized
associated-Legendre times trigonometric factors on the 2-sphere.
"""

from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286061

# B_{2k} / (2k (2k-1)) for k = 1..7, the Stirling-series tail of ln Gamma.
_LNGAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)

# B_{2k} / (2k) for k = 1..7, the asymptotic tail of psi.
_DIGAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


def ln_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"ln_gamma requires x > 0, got {x}")
    # Shift into the regime where 7 Bernoulli terms are below 1e-16.
    shift = 0.0
    while x < 12.0:
        shift += math.log(x)
        x += 1.0
    z = 1.0 / (x * x)
    tail = 0.0
    for c in reversed(_LNGAMMA_TAIL):
        tail = (tail + c) * z
    tail /= x * z  # undo one z factor: series is sum c_k / x^{2k-1}
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_TWO_PI + tail - shift


def gamma(x: float) -> float:
    return math.exp(ln_gamma(x))


def digamma(x: float) -> float:
    """psi(x) = Gamma'(x)/Gamma(x) for x > 0, by recurrence then series."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    z = 1.0 / (x * x)
    tail = 0.0
    for c in reversed(_DIGAMMA_TAIL):
        tail = (tail + c) * z
    return acc + math.log(x) - 0.5 / x - tail


def fourier_basis(L: int, theta: np.ndarray) -> np.ndarray:
    """Orthonormal real Fourier modes on the circle of circumference 2 pi.

    Returns an array of shape (len(theta), 2L+1) with columns ordered
    [const, cos 1t, sin 1t, cos 2t, sin 2t, ...]; the constant column is
    1/sqrt(2 pi) and the others carry 1/sqrt(pi).
    """
    theta = np.asarray(theta, dtype=float)
    out = np.empty((theta.size, 2 * L + 1))
    out[:, 0] = 1.0 / math.sqrt(2.0 * math.pi)
    inv_sqrt_pi = 1.0 / math.sqrt(math.pi)
    for l in range(1, L + 1):
        out[:, 2 * l - 1] = np.cos(l * theta) * inv_sqrt_pi
        out[:, 2 * l] = np.sin(l * theta) * inv_sqrt_pi
    return out


def tri_index(l: int, m: int) -> int:
    """Position of (l, m), 0 <= m <= l, in the packed Legendre table."""
    return l * (l + 1) // 2 + m


def assoc_legendre_norm(L: int, t: np.ndarray) -> np.ndarray:
    """Fully normalized associated Legendre values for all 0 <= m <= l <= L.

    Output shape is ((L+1)(L+2)/2, len(t)), row tri_index(l, m) holding
    Nbar_{l,m}(t) with the normalization int_{S^2} (Nbar_{l,m} trig_m)^2 = 1
    once combined with the sqrt(2) cos/sin azimuth factors.  Upward
    recurrence in l at fixed m; no Condon-Shortley phase.
    """
    t = np.asarray(t, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))  # sin(theta)
    rows = (L + 1) * (L + 2) // 2
    tab = np.zeros((rows, t.size))
    # Diagonal seeds Nbar_{m,m}.
    diag = 1.0 / math.sqrt(4.0 * math.pi)
    smp = np.ones_like(t)
    for m in range(L + 1):
        tab[tri_index(m, m)] = diag * smp
        if m < L:
            smp = smp * s
            diag *= math.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0))
    for m in range(L + 1):
        if m + 1 <= L:
            a = math.sqrt(2.0 * m + 3.0)
            tab[tri_index(m + 1, m)] = a * t * tab[tri_index(m, m)]
        for l in range(m + 2, L + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(
                (2.0 * l + 1.0) * ((l - 1.0) ** 2 - m * m)
                / ((2.0 * l - 3.0) * (l * l - m * m))
            )
            tab[tri_index(l, m)] = (
                a * t * tab[tri_index(l - 1, m)] - b * tab[tri_index(l - 2, m)]
            )
    return tab


def zonal_basis(n: int, l: int, m: int, xi: np.ndarray) -> float | np.ndarray:
    """Real orthonormal harmonic Y_{l,m} at point(s) xi on S^n, n in {1, 2}.

    Circle labels: m = 0 for l = 0; m = +1 the cosine branch and m = -1 the
    sine branch for l >= 1.  Sphere labels: -l <= m <= l with m > 0 cosine,
    m < 0 sine.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = xi[None, :] if single else xi
    if n == 1:
        if pts.shape[-1] != 2:
            raise ValueError("points on the circle must have 2 coordinates")
        if l < 0 or (l == 0 and m != 0) or (l > 0 and m not in (-1, 1)):
            raise ValueError(f"invalid circle harmonic index (l={l}, m={m})")
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        if l == 0:
            vals = np.full(theta.shape, 1.0 / math.sqrt(2.0 * math.pi))
        elif m == 1:
            vals = np.cos(l * theta) / math.sqrt(math.pi)
        else:
            vals = np.sin(l * theta) / math.sqrt(math.pi)
    elif n == 2:
        if pts.shape[-1] != 3:
            raise ValueError("points on the 2-sphere must have 3 coordinates")
        if l < 0 or abs(m) > l:
            raise ValueError(f"invalid sphere harmonic index (l={l}, m={m})")
        t = np.clip(pts[:, 2], -1.0, 1.0)
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        tab = assoc_legendre_norm(l, t)
        leg = tab[tri_index(l, abs(m))]
        if m == 0:
            vals = leg
        elif m > 0:
            vals = math.sqrt(2.0) * leg * np.cos(m * phi)
        else:
            vals = math.sqrt(2.0) * leg * np.sin(-m * phi)
    else:
        raise ValueError(f"basis evaluation supports n in {{1, 2}}, got n={n}")
    return float(vals[0]) if single else vals
