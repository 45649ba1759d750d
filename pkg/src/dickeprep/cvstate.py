r"""Polynomial-times-Gaussian wavefunctions of a single quadrature.

A :class:`PolyGaussian` stores

.. math::

    \psi(x) = \Big(\sum_k c_k x^k\Big) \exp(-\gamma x^2 + \beta x)

with complex ``c_k``, ``gamma`` and ``beta``. The quadratures obey
``[x, p] = i/2``, so the vacuum is ``(2/pi)**(1/4) exp(-x**2)`` and
``p = -(i/2) d/dx``.

Every field may carry leading batch dimensions (one state per outcome of a
measurement grid, say). All functions here broadcast over those dimensions,
which is what makes whole outcome grids cheap to evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DegenerateStateError, NonNormalizableError

TRIM_TOL = 1e-14
VACUUM_NORM = (2.0 / np.pi) ** 0.25


def _trim(coeffs: np.ndarray) -> np.ndarray:
    """Drop trailing monomials that are negligible for every batch member."""
    scale = np.max(np.abs(coeffs)) if coeffs.size else 0.0
    if scale == 0.0:
        return coeffs[..., :1]
    mags = np.abs(coeffs).reshape(-1, coeffs.shape[-1]).max(axis=0)
    keep = coeffs.shape[-1]
    while keep > 1 and mags[keep - 1] <= TRIM_TOL * scale:
        keep -= 1
    return coeffs[..., :keep]


@dataclass(frozen=True, eq=False)
class PolyGaussian:
    """Unnormalized wavefunction ``P(x) exp(-gamma x^2 + beta x)``.

    ``coeffs[..., k]`` multiplies ``x**k``. ``gamma`` and ``beta`` are
    broadcast against ``coeffs[..., 0]``; the batch shape is the common shape.
    """

    coeffs: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray = 0.0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.ndim == 0:
            coeffs = coeffs[None]
        gamma = np.asarray(self.gamma, dtype=complex)
        beta = np.asarray(self.beta, dtype=complex)
        if not np.all(gamma.real > 0):
            raise NonNormalizableError(
                f"Re(gamma) must be positive, got {gamma.real.min()!r}"
            )
        batch = np.broadcast_shapes(coeffs.shape[:-1], gamma.shape, beta.shape)
        coeffs = _trim(np.broadcast_to(coeffs, batch + coeffs.shape[-1:]))
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "gamma", np.broadcast_to(gamma, batch))
        object.__setattr__(self, "beta", np.broadcast_to(beta, batch))

    @property
    def batch_shape(self) -> tuple:
        return self.gamma.shape

    @property
    def degree(self) -> int:
        return self.coeffs.shape[-1] - 1

    def __getitem__(self, index) -> "PolyGaussian":
        if not self.batch_shape:
            raise IndexError("cannot index an unbatched state")
        return PolyGaussian(self.coeffs[index], self.gamma[index], self.beta[index])

    def __call__(self, x) -> np.ndarray:
        """Evaluate on real points ``x``; output shape is ``batch + x.shape``."""
        x = np.asarray(x, dtype=float)
        bx = (Ellipsis,) + (None,) * x.ndim
        poly = np.zeros(self.batch_shape + x.shape, dtype=complex)
        for k in range(self.degree, -1, -1):
            poly = poly * x + self.coeffs[(..., k) + (None,) * x.ndim]
        return poly * np.exp(-self.gamma[bx] * x**2 + self.beta[bx] * x)

    def scaled(self, factor) -> "PolyGaussian":
        """Multiply the wavefunction by a (possibly batched) constant."""
        factor = np.asarray(factor, dtype=complex)
        return PolyGaussian(self.coeffs * factor[..., None], self.gamma, self.beta)

    def normalized(self) -> "PolyGaussian":
        return self.scaled(1.0 / np.sqrt(norm_sq(self)))


def vacuum() -> PolyGaussian:
    return PolyGaussian([VACUUM_NORM], 1.0, 0.0)


def squeezed_vacuum(gamma: float) -> PolyGaussian:
    """Normalized real Gaussian ``exp(-gamma x^2)``."""
    return PolyGaussian([(2.0 * gamma / np.pi) ** 0.25], gamma, 0.0)


def number_state_poly(n_max: int) -> np.ndarray:
    """Monomial coefficients of the number-state wavefunctions ``0..n_max``.

    Row ``n`` holds the polynomial ``q_n`` with ``psi_n(x) = q_n(x) exp(-x^2)``;
    built from ``q_{n+1} = (2x q_n - sqrt(n) q_{n-1}) / sqrt(n+1)``.
    """
    q = np.zeros((n_max + 1, n_max + 1))
    q[0, 0] = VACUUM_NORM
    for n in range(n_max):
        q[n + 1, 1:] = 2.0 * q[n, :-1]
        if n > 0:
            q[n + 1] -= np.sqrt(n) * q[n - 1]
        q[n + 1] /= np.sqrt(n + 1)
    return q


def number_state(n: int) -> PolyGaussian:
    """Wavefunction of the Fock state ``|n>``."""
    return PolyGaussian(number_state_poly(n)[n], 1.0, 0.0)


# -- polynomial helpers ------------------------------------------------------


def _pad(c: np.ndarray, length: int) -> np.ndarray:
    extra = length - c.shape[-1]
    if extra <= 0:
        return c
    return np.concatenate([c, np.zeros(c.shape[:-1] + (extra,), c.dtype)], axis=-1)


def _polymul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    batch = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(batch + (a.shape[-1] + b.shape[-1] - 1,), dtype=complex)
    nb = b.shape[-1]
    for i in range(a.shape[-1]):
        out[..., i:i + nb] += a[..., i, None] * b
    return out


def _poly_compose_affine(c: np.ndarray, scale, shift) -> np.ndarray:
    """Coefficients of ``P(scale * x + shift)`` by Horner's rule."""
    scale = np.asarray(scale, dtype=complex)[..., None]
    shift = np.asarray(shift, dtype=complex)[..., None]
    batch = np.broadcast_shapes(c.shape[:-1], scale.shape[:-1], shift.shape[:-1])
    d = c.shape[-1] - 1
    q = np.broadcast_to(c[..., d:], batch + (1,)).astype(complex)
    for k in range(d - 1, -1, -1):
        nxt = np.zeros(batch + (q.shape[-1] + 1,), dtype=complex)
        nxt[..., 1:] += scale * q
        nxt[..., :-1] += shift * q
        nxt[..., 0] += c[..., k]
        q = nxt
    return q


def _derivative(c: np.ndarray) -> np.ndarray:
    if c.shape[-1] == 1:
        return np.zeros_like(c)
    return c[..., 1:] * np.arange(1, c.shape[-1])


# -- analytic integrals --------------------------------------------------------


def gaussian_moments(n_max: int, gamma, beta, log_scale=0.0) -> np.ndarray:
    r"""All moments ``int x^n exp(-gamma x^2 + beta x) dx`` for ``n <= n_max``.

    Uses ``M_n = [(n-1) M_{n-2} + beta M_{n-1}] / (2 gamma)`` seeded with
    ``M_0 = sqrt(pi/gamma) exp(beta^2 / (4 gamma))``. The trailing axis of the
    result indexes ``n``. ``log_scale`` is added to the exponent of ``M_0`` so
    that a tiny prefactor can be absorbed without underflow against a large
    Gaussian peak.
    """
    gamma = np.asarray(gamma, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    if not np.all(gamma.real > 0):
        raise NonNormalizableError("gaussian moments need Re(gamma) > 0")
    gamma, beta = np.broadcast_arrays(gamma, beta)
    out = np.empty(gamma.shape + (n_max + 1,), dtype=complex)
    with np.errstate(over="ignore"):
        out[..., 0] = np.sqrt(np.pi / gamma) * np.exp(beta**2 / (4.0 * gamma) + log_scale)
    if n_max >= 1:
        out[..., 1] = beta * out[..., 0] / (2.0 * gamma)
    for n in range(2, n_max + 1):
        out[..., n] = ((n - 1) * out[..., n - 2] + beta * out[..., n - 1]) / (2.0 * gamma)
    return out


def gaussian_moment(n: int, gamma: complex, beta: complex) -> complex:
    """Single moment ``int x^n exp(-gamma x^2 + beta x) dx`` over the real line."""
    if n < 0:
        raise ValueError("moment order must be non-negative")
    return gaussian_moments(n, gamma, beta)[..., n][()]


def _split_scale(coeffs: np.ndarray) -> tuple:
    """``coeffs = unit * exp(log_scale)`` with ``max |unit| = 1`` per batch entry."""
    mag = np.max(np.abs(coeffs), axis=-1)
    safe = np.where(mag > 0, mag, 1.0)
    with np.errstate(divide="ignore"):
        log_scale = np.where(mag > 0, np.log(safe), -np.inf)
    return coeffs / safe[..., None], log_scale


def overlap(bra: PolyGaussian, ket: PolyGaussian):
    """Inner product ``<bra|ket>`` (batched over broadcast batch shapes)."""
    bra_unit, bra_log = _split_scale(bra.coeffs)
    ket_unit, ket_log = _split_scale(ket.coeffs)
    poly = _polymul(np.conj(bra_unit), ket_unit)
    log_scale = bra_log + ket_log
    moments = gaussian_moments(
        poly.shape[-1] - 1,
        np.conj(bra.gamma) + ket.gamma,
        np.conj(bra.beta) + ket.beta,
        log_scale,
    )
    return np.sum(poly * moments, axis=-1)[()]


def norm_sq(state: PolyGaussian):
    return np.real(overlap(state, state))


# -- Fock basis ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FockVector:
    """Number-basis amplitudes ``amps[..., n]`` for ``|0>..|N>``.

    ``tail`` (when set by :func:`to_fock`) is the fraction of the source
    state's norm lying above the truncation.
    """

    amps: np.ndarray
    tail: Optional[np.ndarray] = None

    def __post_init__(self):
        amps = np.atleast_1d(np.asarray(self.amps, dtype=complex))
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return self.amps.shape[-1]

    @property
    def norm_sq(self):
        return np.sum(np.abs(self.amps) ** 2, axis=-1)[()]

    def normalize(self) -> "FockVector":
        norm = np.sqrt(self.norm_sq)
        if np.any(norm == 0):
            raise DegenerateStateError("cannot normalize a zero vector")
        return FockVector(self.amps / np.asarray(norm)[..., None], self.tail)

    @property
    def degree(self) -> int:
        """Index of the highest non-negligible amplitude."""
        mags = np.abs(self.amps).reshape(-1, self.dim).max(axis=0)
        nz = np.nonzero(mags > TRIM_TOL * mags.max())[0] if mags.max() > 0 else []
        return int(nz[-1]) if len(nz) else -1


def _gaussian_fock(n_max: int, gamma: np.ndarray, beta: np.ndarray, log_scale=0.0) -> np.ndarray:
    # From ((1 + gamma) a + (gamma - 1) a^dag - beta) g = 0, i.e. the
    # annihilation condition of exp(-gamma x^2 + beta x).
    out = np.empty(gamma.shape + (n_max + 1,), dtype=complex)
    out[..., 0] = VACUUM_NORM * gaussian_moments(0, 1.0 + gamma, beta, log_scale)[..., 0]
    if n_max >= 1:
        out[..., 1] = beta * out[..., 0] / (1.0 + gamma)
    for n in range(1, n_max):
        out[..., n + 1] = (
            beta * out[..., n] - (gamma - 1.0) * np.sqrt(n) * out[..., n - 1]
        ) / ((1.0 + gamma) * np.sqrt(n + 1))
    return out


def _apply_position_fock(v: np.ndarray) -> np.ndarray:
    """``x = (a + a^dag)/2`` on truncated amplitudes; the top entry is lost."""
    n = np.arange(v.shape[-1])
    out = np.zeros_like(v)
    out[..., 1:] += np.sqrt(n[1:]) * v[..., :-1]
    out[..., :-1] += np.sqrt(n[1:]) * v[..., 1:]
    return 0.5 * out


def to_fock(state: PolyGaussian, n_max: int) -> FockVector:
    """Number-basis amplitudes ``<n|state>`` for ``n = 0..n_max``.

    The Gaussian factor is expanded with its exact three-term recurrence and
    the polynomial is applied as ``P(x)`` on a tridiagonal position matrix,
    which avoids the cancellation of monomial Hermite coefficients.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    d = state.degree
    coeffs, log_scale = _split_scale(state.coeffs)
    g = _gaussian_fock(n_max + d, state.gamma, state.beta, log_scale)
    v = coeffs[..., d, None] * g
    for k in range(d - 1, -1, -1):
        v = _apply_position_fock(v) + coeffs[..., k, None] * g
    amps = v[..., : n_max + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = 1.0 - np.sum(np.abs(amps) ** 2, axis=-1) / norm_sq(state)
    return FockVector(amps, tail)


def from_fock(amps) -> PolyGaussian:
    """Wavefunction ``sum_n amps[n] psi_n(x)`` as a PolyGaussian."""
    amps = np.asarray(getattr(amps, "amps", amps), dtype=complex)
    q = number_state_poly(amps.shape[-1] - 1)
    return PolyGaussian(amps @ q, 1.0, 0.0)


def fidelity_pure(state: PolyGaussian, target) -> np.ndarray:
    """``|<target|state>|^2 / <state|state>`` against a pure Fock target."""
    t = np.asarray(getattr(target, "amps", target), dtype=complex)
    t = t / np.sqrt(np.sum(np.abs(t) ** 2))
    nsq = norm_sq(state)
    if np.any(~(nsq > 0)):
        raise DegenerateStateError("fidelity of a zero-norm state is undefined")
    amps = to_fock(state, t.shape[-1] - 1).amps
    amp = np.sum(np.conj(t) * amps, axis=-1)
    return np.clip(np.abs(amp) ** 2 / nsq, 0.0, 1.0)[()]


# -- elementary maps -------------------------------------------------------------


def compose_affine(state: PolyGaussian, scale, shift) -> PolyGaussian:
    """The function ``x -> state(scale * x + shift)`` (not renormalized)."""
    scale = np.asarray(scale, dtype=complex)
    shift = np.asarray(shift, dtype=complex)
    g, b = state.gamma, state.beta
    const = np.exp(-g * shift**2 + b * shift)
    coeffs = _poly_compose_affine(state.coeffs, scale, shift) * const[..., None]
    return PolyGaussian(coeffs, g * scale**2, b * scale - 2.0 * g * scale * shift)


def multiply(a: PolyGaussian, b: PolyGaussian) -> PolyGaussian:
    """Pointwise product of two wavefunctions."""
    return PolyGaussian(_polymul(a.coeffs, b.coeffs), a.gamma + b.gamma, a.beta + b.beta)


def multiply_poly(state: PolyGaussian, poly) -> PolyGaussian:
    """Multiply by a polynomial (coefficients along the last axis)."""
    poly = np.asarray(poly, dtype=complex)
    return PolyGaussian(_polymul(state.coeffs, poly), state.gamma, state.beta)


def add_same_exponent(*states: PolyGaussian) -> PolyGaussian:
    """Sum of states sharing ``gamma`` and ``beta``."""
    length = max(s.coeffs.shape[-1] for s in states)
    total = sum(_pad(s.coeffs, length) for s in states)
    return PolyGaussian(total, states[0].gamma, states[0].beta)


def apply_position(state: PolyGaussian) -> PolyGaussian:
    return multiply_poly(state, [0.0, 1.0])


def apply_momentum(state: PolyGaussian) -> PolyGaussian:
    """``p psi = -(i/2) psi'`` in closed form; degree grows by at most one."""
    c = state.coeffs
    length = c.shape[-1] + 1
    linear = np.stack(
        np.broadcast_arrays(state.beta, -2.0 * state.gamma), axis=-1
    )
    deriv = _pad(_derivative(c), length) + _pad(_polymul(c, linear), length)
    return PolyGaussian(-0.5j * deriv, state.gamma, state.beta)


def rescale_quadrature(state: PolyGaussian, factor: float) -> PolyGaussian:
    """Norm-preserving widening ``psi'(x) = factor**-0.5 psi(x / factor)``.

    ``factor = sqrt(N eps + 1)`` removes the squeezing left by an ``N``-step
    protocol (the inverse map is ``factor -> 1/factor``).
    """
    if not factor > 0:
        raise ValueError(f"rescale factor must be positive, got {factor!r}")
    return compose_affine(state, 1.0 / factor, 0.0).scaled(factor**-0.5)
