"""Brute-force number-basis simulation of the joint atoms-light system.

Independent of the closed-form algebra: both modes are truncated Fock spaces,
the QND coupling ``exp(-2i kappa x_A x_L)`` is applied through the
eigenbases of the truncated position matrices, and homodyne detection is a
contraction with momentum-eigenstate wavefunctions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

DEFAULT_DIM = 60
# the squeezed single photon carries ~6e-5 weight above n = 40, so the light
# mode needs a deeper truncation than the atoms for 1e-5 density agreement
DEFAULT_LIGHT_DIM = 200
PAD = 40
NULL_DENSITY = 1e-14


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def position(dim: int) -> np.ndarray:
    a = annihilation(dim)
    return (a + a.conj().T) / 2


def momentum(dim: int) -> np.ndarray:
    a = annihilation(dim)
    return (a - a.conj().T) / 2j


def squeeze(r: float, dim: int) -> np.ndarray:
    """``exp[(r/2)(a^2 - a^dag^2)]``; ``r > 0`` reduces the x variance by ``exp(-2r)``.

    Built in a padded space and cropped so the truncation edge does not leak
    into the kept block.
    """
    a = annihilation(dim + PAD)
    gen = 0.5 * r * (a @ a - a.conj().T @ a.conj().T)
    return expm(gen)[:dim, :dim]


def displacement(alpha: complex, dim: int) -> np.ndarray:
    a = annihilation(dim + PAD)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)[:dim, :dim]


def fock(n: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def pssv(r: float, dim: int) -> np.ndarray:
    """Photon-subtracted squeezed vacuum, i.e. ``S|1>`` with the convention above."""
    return squeeze(r, dim) @ fock(1, dim)


def momentum_eigenvector(p: float, dim: int) -> np.ndarray:
    """Components ``<p|n>`` = ``(-i)^n psi_n(p)`` for ``n < dim``.

    ``psi_n`` are the normalized Hermite functions with ``[x, p] = i/2``,
    computed by their stable three-term recurrence.
    """
    psi = np.empty(dim)
    psi[0] = (2 / np.pi) ** 0.25 * np.exp(-p * p)
    if dim > 1:
        psi[1] = 2 * p * psi[0]
    for n in range(1, dim - 1):
        psi[n + 1] = (2 * p * psi[n] - math.sqrt(n) * psi[n - 1]) / math.sqrt(n + 1)
    return psi * (-1j) ** np.arange(dim)


@dataclass(frozen=True, eq=False)
class JointState:
    """Amplitudes ``amps[n_A, n_L]`` of the atoms-light state."""

    amps: np.ndarray

    @classmethod
    def product(cls, atoms: np.ndarray, light: np.ndarray) -> "JointState":
        return cls(np.outer(atoms, light))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


def qnd_evolve(state: JointState, kappa: float) -> JointState:
    """Apply ``exp(-2i kappa x_A (x) x_L)``."""
    dA, dL = state.amps.shape
    lam_a, va = np.linalg.eigh(position(dA))
    lam_l, vl = np.linalg.eigh(position(dL))
    t = va.conj().T @ state.amps @ vl.conj()
    t = t * np.exp(-2j * kappa * np.outer(lam_a, lam_l))
    return JointState(va @ t @ vl.T)


def homodyne_project(state: JointState, p_L: float) -> tuple:
    """Condition on light momentum ``p_L``.

    Returns the unnormalized atomic amplitudes and their squared norm, the
    outcome density with respect to ``dp_L``.
    """
    dL = state.amps.shape[1]
    if abs(p_L) > math.sqrt(dL) / 2:
        warnings.warn(
            f"|p_L| = {abs(p_L):.3g} beyond sqrt(D)/2; truncation may be unreliable",
            RuntimeWarning,
            stacklevel=2,
        )
    atoms = state.amps @ momentum_eigenvector(p_L, dL)
    return atoms, float(np.vdot(atoms, atoms).real)


def simulate_schedule(
    schedule, outcomes, dim: int = DEFAULT_DIM, light_dim: int = DEFAULT_LIGHT_DIM
) -> tuple:
    """Replay a photon-subtracted-light schedule in the truncated Fock model.

    Only unrotated steps (``phi`` a multiple of pi) with physical epsilon are
    supported; the light for each step is a fresh squeezed single photon.
    """
    atoms = fock(0, dim)
    for step, p in zip(schedule.steps, outcomes):
        if step.light is not None or abs(math.sin(step.theta.phi)) > 1e-15:
            raise ValueError("oracle replays only unrotated squeezed-photon steps")
        if step.theta.epsilon_override is not None:
            raise ValueError("oracle needs the physical epsilon of kappa and r")
        atoms = displacement(step.displacement.alpha, dim) @ atoms
        light = pssv(step.theta.r, light_dim)
        joint = qnd_evolve(JointState.product(atoms, light), step.theta.kappa * math.cos(step.theta.phi))
        atoms, _ = homodyne_project(joint, float(p))
    atoms = displacement(schedule.final_displacement.alpha, dim) @ atoms
    return atoms, float(np.vdot(atoms, atoms).real)


def state_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Phase-insensitive overlap of two (unnormalized) vectors of any lengths."""
    n = min(a.size, b.size)
    na = np.vdot(a, a).real
    nb = np.vdot(b, b).real
    return float(abs(np.vdot(a[:n], b[:n])) ** 2 / (na * nb))


@dataclass
class AgreementReport:
    dim: int
    light_dim: int
    rows: list
    max_fidelity_deficit: float
    max_density_error: float
    fidelity_tol: float
    density_tol: float

    @property
    def passed(self) -> bool:
        return (
            self.max_fidelity_deficit <= self.fidelity_tol
            and self.max_density_error <= self.density_tol
        )

    def worst(self, key: str = "density_rel_error") -> dict:
        return max(self.rows, key=lambda row: row[key])

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} D_atoms={self.dim} D_light={self.light_dim} "
            f"max fidelity deficit={self.max_fidelity_deficit:.3e} (tol {self.fidelity_tol:g}) "
            f"max rel density error={self.max_density_error:.3e} (tol {self.density_tol:g})"
        )


def single_step_agreement(
    kappas=(0.2, 0.5),
    rs=(-1.0, 0.0, 1.0),
    outcomes=(-1.0, 0.0, 0.5),
    dim: int = DEFAULT_DIM,
    light_dim: int = DEFAULT_LIGHT_DIM,
    fidelity_tol: float = 1e-6,
    density_tol: float = 1e-5,
) -> AgreementReport:
    """Compare one conditioned interaction on atomic vacuum with the closed form.

    ``kappa = 0`` leaves the atoms in vacuum and the density is the light's
    momentum distribution.
    """
    from . import cvstate, ops

    rows = []
    for kappa in kappas:
        for r in rs:
            light = pssv(r, light_dim)
            joint = qnd_evolve(JointState.product(fock(0, dim), light), kappa) if kappa else None
            for p in outcomes:
                if kappa:
                    closed = ops.theta_s(ops.ThetaParams(kappa, r, p_L=p), cvstate.vacuum())
                    atoms, dens = homodyne_project(joint, p)
                else:
                    phi = ops.momentum_wavefunction(ops.light_pssv(r))(p)
                    closed = cvstate.vacuum().scaled(phi)
                    amp = momentum_eigenvector(p, light_dim) @ light
                    atoms = fock(0, dim) * amp
                    dens = float(abs(atoms[0]) ** 2)
                ref = cvstate.to_fock(closed, dim - 1).amps
                ref_dens = float(cvstate.norm_sq(closed))
                if ref_dens < NULL_DENSITY:
                    # outcome with vanishing probability: only the density is comparable
                    deficit = 0.0
                    rel = abs(dens - ref_dens)
                else:
                    deficit = 1.0 - state_fidelity(atoms, ref)
                    rel = abs(dens - ref_dens) / ref_dens
                rows.append(
                    {"kappa": kappa, "r": r, "p_L": p, "fidelity_deficit": deficit,
                     "density": dens, "closed_density": ref_dens, "density_rel_error": rel}
                )
    return AgreementReport(
        dim,
        light_dim,
        rows,
        max(r["fidelity_deficit"] for r in rows),
        max(r["density_rel_error"] for r in rows),
        fidelity_tol,
        density_tol,
    )
