"""Exact Kohn-Sham decomposition by double inversion.

The Hartree energy treats the charge of each cell as spread uniformly over
the cell and uses the same soft-Coulomb kernel as the particle interaction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .duality import InversionResult, lieb_maximize
from .engine import ModelSpec, soft_coulomb
from .model import CoarseDensity, FineDensity, Potential, embed

__all__ = ["KsReport", "KohnShamFailure", "ts", "hartree_energy", "hartree_potential", "ks_decompose"]


class KohnShamFailure(RuntimeError):
    def __init__(self, system: str, result: InversionResult):
        super().__init__(f"{system} inversion did not converge (residual {result.residual:.3e})")
        self.system = system
        self.result = result


@dataclass(frozen=True, eq=False)
class KsReport:
    F: float
    T_s: float
    E_H: float
    E_xc: float
    v: Potential
    v_s: Potential
    phi: Potential
    v_xc: Potential
    interacting: InversionResult
    non_interacting: InversionResult

    def to_dict(self) -> dict:
        return {
            "F": self.F,
            "T_s": self.T_s,
            "E_H": self.E_H,
            "E_xc": self.E_xc,
            "v": self.v.values.tolist(),
            "v_s": self.v_s.values.tolist(),
            "phi": self.phi.values.tolist(),
            "v_xc": self.v_xc.values.tolist(),
            "gauge": "E[v] = 0 and E_s[v_s] = 0",
            "interacting": {"residual": self.interacting.residual, "iterations": self.interacting.iterations},
            "non_interacting": {
                "residual": self.non_interacting.residual,
                "iterations": self.non_interacting.iterations,
            },
        }


def ts(model: ModelSpec, rho: CoarseDensity, **kwargs) -> InversionResult:
    """Non-interacting intrinsic energy (kinetic only) at the same density."""
    return lieb_maximize(model.non_interacting(), rho, **kwargs)


@lru_cache(maxsize=8)
def _kernel(model: ModelSpec) -> np.ndarray:
    x = model.grid.x
    return soft_coulomb(x[:, None] - x[None, :], model.strength, model.softening)


def _fine(rho: Union[CoarseDensity, FineDensity]) -> np.ndarray:
    return embed(rho).values if isinstance(rho, CoarseDensity) else rho.values


def hartree_energy(model: ModelSpec, rho: Union[CoarseDensity, FineDensity]) -> float:
    """``(1/2) ∬ rho(x) rho(x') K(x - x')`` with cell-uniform charge."""
    q = _fine(rho) * model.grid.spacing
    return float(0.5 * q @ _kernel(model) @ q)


def hartree_potential(model: ModelSpec, rho: CoarseDensity) -> Potential:
    """Cell averages of the electrostatic potential of ``rho``; linear in ``rho``."""
    q = _fine(rho) * model.grid.spacing
    pointwise = _kernel(model) @ q
    hier, n = rho.hierarchy, rho.level
    return Potential(hier, n, pointwise.reshape(hier.n_cells(n), -1).mean(axis=1))


def ks_decompose(model: ModelSpec, rho: CoarseDensity, tol: float = 1e-10, **kwargs) -> KsReport:
    """``F = T_s + E_H + E_xc`` and ``v_s = v + phi + v_xc`` at an interior density."""
    full = lieb_maximize(model, rho, tol=tol, **kwargs)
    if not full.converged:
        raise KohnShamFailure("interacting", full)
    free = ts(model, rho, tol=tol, **kwargs)
    if not free.converged:
        raise KohnShamFailure("non-interacting", free)
    e_h = hartree_energy(model, rho)
    phi = hartree_potential(model, rho)
    e_xc = full.F_value - free.F_value - e_h
    v_xc = Potential(rho.hierarchy, rho.level, free.potential.values - full.potential.values - phi.values)
    return KsReport(
        F=full.F_value,
        T_s=free.F_value,
        E_H=e_h,
        E_xc=e_xc,
        v=full.potential,
        v_s=free.potential,
        phi=phi,
        v_xc=v_xc,
        interacting=full,
        non_interacting=free,
    )
