"""Planning displacement schedules for a target Dicke superposition.

A target ``sum_n c_n |n>`` has wavefunction ``exp(-x^2) prod_j (x - R_j)`` up to
a constant; each conditioned interaction contributes one linear factor, and
the displacements place the roots ``R_j``. Real roots need only quadrature-x
displacements. Complex superpositions of ``|0>, |1>, |2>`` use rotated
couplings found from a quartic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cvstate
from .cvstate import FockVector
from .exceptions import (
    ComplexRootsError,
    DegreeOverflowError,
    NoAdmissibleRootError,
    PresqueezeInfeasibleError,
    SynthesisError,
)
from .ops import Displacement, ThetaParams
from .schedule import Schedule, Step

REAL_ROOT_TOL = 1e-9
NEWTON_ITERS = 50


def _amplitudes(coeffs) -> np.ndarray:
    return np.asarray(getattr(coeffs, "amps", coeffs), dtype=complex)


def hermite_poly(n_max: int, scale: float = math.sqrt(2.0)) -> np.ndarray:
    """Rows ``n``: monomial coefficients of ``H_n(scale * x) / sqrt(2^n n!)``."""
    h = np.zeros((n_max + 1, n_max + 1))
    h[0, 0] = 1.0
    if n_max >= 1:
        h[1, 1] = 2.0 * scale
    for n in range(1, n_max):
        h[n + 1, 1:] = 2.0 * scale * h[n, :-1]
        h[n + 1] -= 2.0 * n * h[n - 1]
    norms = np.array([math.sqrt(2.0**n * math.factorial(n)) for n in range(n_max + 1)])
    return h / norms[:, None]


def target_polynomial(coeffs) -> np.ndarray:
    """Monomial coefficients of ``sum_n c_n H_n(sqrt(2) x) / sqrt(2^n n!)``."""
    c = _amplitudes(coeffs)
    if c.size == 0 or not np.any(np.abs(c) > 0):
        raise SynthesisError("target amplitudes are all zero")
    poly = c @ hermite_poly(c.size - 1)
    scale = np.max(np.abs(poly))
    keep = poly.size
    while keep > 1 and abs(poly[keep - 1]) <= cvstate.TRIM_TOL * scale:
        keep -= 1
    return poly[:keep]


def _sort_roots(roots):
    # ascending real part, ties broken by imaginary part
    return sorted(roots, key=lambda z: (round(z.real, 12), round(z.imag, 12)))


def is_real_root(root: complex) -> bool:
    return abs(root.imag) < REAL_ROOT_TOL * (1.0 + abs(root))


def find_roots(poly) -> np.ndarray:
    """All complex roots of a monomial-basis polynomial.

    Companion-matrix eigenvalues polished by Newton steps that are kept only
    when they reduce the residual. Roots within tolerance of the real axis are
    returned exactly real.
    """
    p = np.asarray(poly, dtype=complex)
    while p.size > 1 and p[-1] == 0:
        p = p[:-1]
    if p.size < 2:
        raise SynthesisError("root finding needs a polynomial of degree >= 1")
    hi_first = p[::-1]
    dp = np.polyder(hi_first)
    polished = []
    for z in np.roots(hi_first):
        res = abs(np.polyval(hi_first, z))
        for _ in range(NEWTON_ITERS):
            slope = np.polyval(dp, z)
            if slope == 0:
                break
            trial = z - np.polyval(hi_first, z) / slope
            trial_res = abs(np.polyval(hi_first, trial))
            if not trial_res < res:
                break
            z, res = trial, trial_res
        polished.append(complex(z.real, 0.0) if is_real_root(z) else complex(z))
    return np.array(_sort_roots(polished), dtype=complex)


@dataclass(frozen=True)
class TargetSpec:
    coeffs: FockVector
    roots: tuple

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "TargetSpec":
        fv = FockVector(_amplitudes(amplitudes)).normalize()
        poly = target_polynomial(fv)
        roots = tuple(find_roots(poly)) if poly.size > 1 else ()
        return cls(fv, roots)

    @property
    def degree(self) -> int:
        return len(self.roots)

    @property
    def real_roots(self) -> bool:
        return all(is_real_root(r) for r in self.roots)


def schedule_real(
    target: TargetSpec,
    epsilon: float | None = None,
    presqueezed: bool = False,
    *,
    kappa: float = 0.5,
    r: float = 1.0,
) -> Schedule:
    """Displacement schedule for a target whose polynomial has real roots.

    Without pre-squeezing the output is the target squeezed by
    ``sqrt(N eps + 1)``, which ``Schedule.rescale_factor`` undoes. With
    pre-squeezing the protocol starts from ``exp(-(1 - N eps) x^2)`` and needs no
    rescaling. ``epsilon`` defaults to ``kappa^2 exp(-2r)``.
    """
    if not isinstance(target, TargetSpec):
        target = TargetSpec.from_amplitudes(target)
    if not target.real_roots:
        raise ComplexRootsError(
            f"target has complex roots {list(target.roots)}; use solve_complex_n2"
        )
    theta = ThetaParams(kappa, r, epsilon_override=epsilon)
    eps = theta.epsilon
    R = np.array([x.real for x in target.roots])
    N = R.size
    if N == 0:
        return Schedule((), Displacement(0.0), presqueezed, 1.0, ())
    if presqueezed:
        if N * eps >= 1.0:
            raise PresqueezeInfeasibleError(f"N*eps = {N * eps:.6g} must be below 1")
        s = 1.0
        a_first = -R[0] - eps / (1.0 - N * eps) * R.sum()
    else:
        s = math.sqrt(N * eps + 1.0)
        a_first = (-R[0] - eps * R.sum()) / s
    a = np.empty(N + 1)
    a[0] = a_first
    a[1:N] = (R[:-1] - R[1:]) / s
    a[N] = R[-1] / s
    steps = tuple(Step(Displacement(float(a[j])), theta) for j in range(N))
    rescale = 1.0 if presqueezed else s
    return Schedule(steps, Displacement(float(a[N])), presqueezed, rescale, tuple(target.roots))


# -- complex superpositions of |0>, |1>, |2> -----------------------------------------


def quartic_coefficients(c0: complex, c1: complex) -> np.ndarray:
    """Coefficients ``d_0..d_4`` of the quartic in ``y = |z|^2``."""
    q = abs(c0) ** 2
    s1 = abs(c1) ** 2
    # 2 sqrt2 (c1^2 c0* + c1*^2 c0)
    cross = 4.0 * math.sqrt(2.0) * (c1**2 * np.conj(c0)).real
    return np.array(
        [
            1.0 + 4.0 * q**2 - 4.0 * q,
            -4.0 - 2.0 * s1 - 4.0 * q * s1 + 8.0 * q - cross,
            6.0 + 4.0 * s1 - 4.0 * q + cross,
            -4.0 - 2.0 * s1,
            1.0,
        ]
    )


@dataclass(frozen=True)
class ComplexSolution:
    """Rotation angles and displacements for ``D(a3) T(phi2) D(a2) T(phi1) D(a1)``."""

    phi1: float
    phi2: float
    alpha1: complex
    alpha2: complex
    alpha3: complex
    y: float
    fidelity: float = float("nan")

    @property
    def displacement_norm(self) -> float:
        return abs(self.alpha1) ** 2 + abs(self.alpha2) ** 2 + abs(self.alpha3) ** 2

    def as_tuple(self) -> tuple:
        return (self.phi1, self.phi2, self.alpha1, self.alpha2, self.alpha3)

    def to_schedule(self, kappa: float = 0.5, r: float = 1.0) -> Schedule:
        steps = (
            Step(Displacement(self.alpha1), ThetaParams(kappa, r, self.phi1, epsilon_override=0.0)),
            Step(Displacement(self.alpha2), ThetaParams(kappa, r, self.phi2, epsilon_override=0.0)),
        )
        return Schedule(steps, Displacement(self.alpha3))


def _real_quartic_roots(d: np.ndarray) -> list:
    hi_first = d[::-1]
    dp = np.polyder(hi_first)
    out = []
    for y in np.roots(hi_first):
        if abs(y.imag) > 1e-6 * (1.0 + abs(y)):
            continue
        y = y.real
        for _ in range(NEWTON_ITERS):
            slope = np.polyval(dp, y)
            if slope == 0:
                break
            trial = y - np.polyval(hi_first, y) / slope
            if not abs(np.polyval(hi_first, trial)) < abs(np.polyval(hi_first, y)):
                break
            y = trial
        out.append(float(y))
    return out


def _candidate_z(y: float, c0: complex, c1: complex) -> list:
    root2 = math.sqrt(2.0)
    u = 1.0 - 1.0 / y
    if abs(u) < 1e-9:
        # y = 1: the quadratic term vanishes, leaving sqrt2 (c1 z + c0) = 0
        if abs(c1) > 1e-12:
            return [-c0 / c1]
        return [1.0 + 0j] if abs(c0) < 1e-12 else []
    disc = np.sqrt(complex(2.0 * c1**2 - 4.0 * root2 * c0 * u))
    return [(-root2 * c1 + sign * disc) / (2.0 * u) for sign in (1.0, -1.0)]


def _min_norm_lift(phi1: float, phi2: float, x1: float, x2: float) -> tuple:
    """Displacements with ``Re[(a2+a3) e^{-i phi1}] = x1``, ``Re[a3 e^{-i phi2}] = x2``
    and ``a1 + a2 + a3 = 0`` minimizing ``sum |a_j|^2``."""
    e1, e2 = np.exp(1j * phi1), np.exp(1j * phi2)
    # a3 = e2 (x2 + i t), beta = a2 + a3 = e1 (x1 + i s); a1 = -beta, a2 = beta - a3
    base = np.array([-e1 * x1, e1 * x1 - e2 * x2, e2 * x2])
    ds = np.array([-1j * e1, 1j * e1, 0.0])
    dt = np.array([0.0, -1j * e2, 1j * e2])
    A = np.stack([np.concatenate([ds.real, ds.imag]), np.concatenate([dt.real, dt.imag])], axis=1)
    b = -np.concatenate([base.real, base.imag])
    (s, t), *_ = np.linalg.lstsq(A, b, rcond=None)
    alphas = base + s * ds + t * dt
    alphas[0] = -(alphas[1] + alphas[2])
    return tuple(complex(a) for a in alphas)


def solve_complex_n2(c0: complex, c1: complex, *, min_fidelity: float = 1 - 1e-8) -> list:
    """Two-step rotated-coupling schedules for ``|2> + c1|1> + c0|0>`` at eps = 0.

    Every real quartic root ``y >= 1`` is turned into angles and displacements;
    each candidate is executed and kept if it reproduces the target. Results
    are sorted by total displacement ``sum |alpha_j|^2`` (first = canonical).
    """
    from .protocol import execute

    c0, c1 = complex(c0), complex(c1)
    target = np.array([c0, c1, 1.0])
    target = target / np.linalg.norm(target)
    root2 = math.sqrt(2.0)
    solutions = []
    d = quartic_coefficients(c0, c1)
    ys = _real_quartic_roots(d)
    # y = 1 is a root iff |c0| (|c0| - |c1|) = 0; as a multiple root the
    # eigenvalue solver returns it with spurious imaginary parts
    if abs(np.polyval(d[::-1], 1.0)) < 1e-12 and not any(abs(y - 1.0) < 1e-9 for y in ys):
        ys.append(1.0)
    for y in ys:
        if y < 1.0 - 1e-9:
            continue
        for z in _candidate_z(max(y, 1.0), c0, c1):
            if abs(abs(z) ** 2 - y) > 1e-6 * max(y, 1.0):
                continue
            w1 = -root2 * c1 - z
            phi2 = -float(np.angle(z))
            phi1 = -float(np.angle(w1)) if abs(w1) > 1e-15 else 0.0
            # z = X2 exp(-i phi2) with X2 = 2 Re[a3 exp(-i phi2)], likewise w1
            x2 = abs(z) / 2.0
            x1 = abs(w1) / 2.0
            alphas = _min_norm_lift(phi1, phi2, x1, x2)
            sol = ComplexSolution(phi1, phi2, *alphas, y=y)
            state, _ = execute(sol.to_schedule(), np.zeros(2))
            fid = float(cvstate.fidelity_pure(state, target))
            if fid >= min_fidelity:
                solutions.append(ComplexSolution(phi1, phi2, *alphas, y=y, fidelity=fid))
    if not solutions:
        raise NoAdmissibleRootError(
            f"no quartic root y >= 1 reproduces c0={c0}, c1={c1}"
        )
    solutions.sort(key=lambda s: s.displacement_norm)
    return solutions


# -- direct single-step mapping ----------------------------------------------------


def direct_mapping_light(coeffs, kappa: float, n_max: int | None = None) -> FockVector:
    """Light Fock amplitudes whose single interaction imprints the target.

    Conditioning on ``p_L = 0`` leaves the atoms in the target squeezed by
    ``sqrt(1 + kappa^2)``. ``u_m`` are the projections of the required momentum
    wavefunction onto ``|m>``, integrated in closed form with Gaussian moments.
    """
    c = _amplitudes(coeffs)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    degree = FockVector(c).degree
    n_max = degree if n_max is None else n_max
    if degree > n_max:
        raise DegreeOverflowError(f"target degree {degree} exceeds n_max={n_max}")
    lam = math.sqrt(2.0 * (1.0 + kappa**2)) / kappa
    size = max(n_max, c.size - 1)
    light_h = hermite_poly(size)[: n_max + 1]
    target_h = c @ hermite_poly(c.size - 1, scale=lam)
    moments = cvstate.gaussian_moments(n_max + c.size, 2.0, 0.0)
    u = np.empty(n_max + 1, dtype=complex)
    for m in range(n_max + 1):
        prod = np.convolve(light_h[m], target_h)
        u[m] = 1j**m * np.dot(prod, moments[: prod.size])
    return FockVector(u).normalize()


def direct_mapping_schedule(coeffs, kappa: float) -> Schedule:
    """Single-step schedule carrying the direct-mapping light state."""
    light = cvstate.from_fock(direct_mapping_light(coeffs, kappa))
    step = Step(Displacement(0.0), ThetaParams(kappa, 0.0), light=light)
    return Schedule((step,), Displacement(0.0), False, math.sqrt(1.0 + kappa**2))
