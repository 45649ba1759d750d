"""Physical operations on the atomic quadrature wavefunction.

The conditioned QND map for homodyne outcome ``p_L`` is the light's momentum
wavefunction evaluated at ``kappa * x_A + p_L``. For a photon-subtracted
squeezed vacuum this is the operator ``N (x + p_L/kappa) exp(-eps (x + p_L/kappa)^2)``
with ``eps = kappa^2 exp(-2r)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import cvstate
from .cvstate import PolyGaussian
from .exceptions import RotatedOperatorError

EPS_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class ThetaParams:
    """One conditioned QND interaction.

    ``r > 0`` squeezes the light's x quadrature. ``epsilon`` overrides the
    derived ``kappa**2 * exp(-2 r)`` in the exponent (``0`` gives the
    strong-squeezing limit); the prefactor always follows ``kappa`` and ``r``.
    ``p_L`` may be an array, giving a batch of outcomes.
    """

    kappa: float
    r: float = 0.0
    phi: float = 0.0
    p_L: object = 0.0
    epsilon_override: Optional[float] = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa!r}")
        if self.epsilon_override is not None and self.epsilon_override < 0:
            raise ValueError("epsilon override must be non-negative")

    @property
    def epsilon(self) -> float:
        if self.epsilon_override is not None:
            return float(self.epsilon_override)
        return self.kappa**2 * np.exp(-2.0 * self.r)

    @property
    def norm_const(self) -> float:
        return 2.0 * self.kappa * cvstate.VACUUM_NORM * np.exp(-1.5 * self.r)


@dataclass(frozen=True)
class Displacement:
    """``D(alpha)`` with ``alpha = a + ib``: shifts ``x`` by ``a`` and ``p`` by ``b``."""

    alpha: complex = 0.0

    @property
    def a(self):
        return np.real(self.alpha)

    @property
    def b(self):
        return np.imag(self.alpha)


def light_pssv(r: float) -> PolyGaussian:
    """Normalized photon-subtracted squeezed vacuum (a squeezed ``|1>``)."""
    amp = cvstate.VACUUM_NORM * np.exp(1.5 * r)
    return PolyGaussian([0.0, 2.0 * amp], np.exp(2.0 * r), 0.0)


def momentum_wavefunction(light: PolyGaussian) -> PolyGaussian:
    r"""``Phi(p) = pi^{-1/2} \int exp(-2ixp) phi(x) dx`` as a PolyGaussian in ``p``.

    With ``B = beta - 2ip`` each monomial integrates to ``M_0(B) m_k(B)`` where
    ``m_k`` obeys the moment recurrence; the ``m_k`` are polynomials in ``p``.
    """
    g, b = light.gamma, light.beta
    d = light.degree
    linear = np.stack(np.broadcast_arrays(b, np.full_like(b, -2j)), axis=-1)
    m_prev = np.zeros(g.shape + (1,), dtype=complex)
    m_cur = np.ones(g.shape + (1,), dtype=complex)
    poly = light.coeffs[..., 0, None] * m_cur
    for k in range(1, d + 1):
        nxt = cvstate._pad(cvstate._polymul(linear, m_cur), k + 1)
        nxt = nxt + (k - 1) * cvstate._pad(m_prev, k + 1)
        nxt = nxt / (2.0 * g[..., None])
        m_prev, m_cur = m_cur, nxt
        poly = cvstate._pad(poly, k + 1) + light.coeffs[..., k, None] * m_cur
    prefactor = np.exp(b**2 / (4.0 * g)) / np.sqrt(g)
    return PolyGaussian(poly * prefactor[..., None], 1.0 / g, -1j * b / g)


def theta_from_light(light: PolyGaussian, kappa: float, p_L) -> PolyGaussian:
    """Multiplication kernel ``Phi(kappa x + p_L)`` of the conditioned QND map.

    Apply it to an atomic state with :func:`dickeprep.cvstate.multiply`. The
    squared norm of the product is the outcome density at ``p_L``.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa!r}")
    return cvstate.compose_affine(momentum_wavefunction(light), kappa, p_L)


def theta_s(params: ThetaParams, state: PolyGaussian) -> PolyGaussian:
    """Apply the photon-subtracted-light operator for one outcome.

    For ``phi`` a multiple of pi this is exact at any epsilon. Other angles
    couple to ``x cos(phi) + p sin(phi)`` and are only implemented in the
    ``epsilon -> 0`` limit, where the operator is linear in the quadratures.
    """
    eps = params.epsilon
    shift = np.asarray(params.p_L, dtype=float) / params.kappa
    cos, sin = np.cos(params.phi), np.sin(params.phi)
    if abs(sin) > 1e-15:
        if eps > EPS_ZERO_TOL:
            raise RotatedOperatorError(
                f"rotated quadrature (phi={params.phi}) needs epsilon -> 0, got {eps}"
            )
        xs = cvstate.apply_position(state).scaled(cos)
        ps = cvstate.apply_momentum(state).scaled(sin)
        out = cvstate.add_same_exponent(xs, ps, state.scaled(shift))
        return out.scaled(params.norm_const)
    sign = np.sign(cos)
    lin = np.stack(np.broadcast_arrays(shift, np.full_like(shift, sign)), axis=-1)
    out = cvstate.multiply_poly(state, lin)
    gauss = np.exp(-eps * shift**2) * params.norm_const
    return PolyGaussian(
        out.coeffs * np.asarray(gauss)[..., None],
        out.gamma + eps,
        out.beta - 2.0 * eps * sign * shift,
    )


def displace(d: Displacement, state: PolyGaussian) -> PolyGaussian:
    """``D(alpha) psi(x) = exp(2ibx - iab) psi(x - a)``."""
    a = np.asarray(d.a, dtype=float)
    b = np.asarray(d.b, dtype=float)
    moved = cvstate.compose_affine(state, 1.0, -a)
    return PolyGaussian(
        moved.coeffs * np.exp(-1j * a * b)[..., None],
        moved.gamma,
        moved.beta + 2j * b,
    )
