"""Protocol description shared by the planner and the executor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import cvstate
from .cvstate import PolyGaussian
from .ops import Displacement, ThetaParams


@dataclass(frozen=True)
class Step:
    """Displace, then condition on one homodyne outcome.

    ``light`` replaces the photon-subtracted squeezed vacuum by an arbitrary
    light wavefunction (used by the direct-mapping scheme).
    """

    displacement: Displacement
    theta: ThetaParams
    light: Optional[PolyGaussian] = None


@dataclass(frozen=True)
class Schedule:
    steps: tuple
    final_displacement: Displacement = field(default_factory=Displacement)
    presqueezed: bool = False
    rescale_factor: float = 1.0
    roots: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.rescale_factor > 0:
            raise ValueError("rescale factor must be positive")

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def epsilon(self) -> float:
        return self.steps[0].theta.epsilon if self.steps else 0.0

    def initial_state(self) -> PolyGaussian:
        if self.presqueezed:
            return cvstate.squeezed_vacuum(1.0 - self.n_steps * self.epsilon)
        return cvstate.vacuum()

    def displacements(self) -> list:
        """All displacement amplitudes ``alpha_1 .. alpha_{N+1}``."""
        alphas = [s.displacement.alpha for s in self.steps]
        return [complex(a) for a in alphas + [self.final_displacement.alpha]]

    def phis(self) -> list:
        return [float(s.theta.phi) for s in self.steps]

    def describe(self) -> dict:
        return {
            "n_steps": self.n_steps,
            "epsilon": self.epsilon,
            "presqueezed": self.presqueezed,
            "rescale_factor": self.rescale_factor,
            "roots": [[float(np.real(r)), float(np.imag(r))] for r in self.roots],
            "displacements": [[a.real, a.imag] for a in self.displacements()],
            "phis": self.phis(),
        }
