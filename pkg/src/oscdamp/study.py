"""One-stop pipeline: power flow, Hessian bundle, dynamic matrices, modes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import laplacian, modal
from .network import Network, OperatingPoint, build_incidence, solve_power_flow


@dataclass(frozen=True)
class Study:
    network: Network
    const_v: bool
    op: OperatingPoint
    A: np.ndarray
    absA: np.ndarray
    bundle: laplacian.LaplacianBundle
    dyn: modal.DynamicMatrices
    modes: tuple[modal.Mode, ...]

    def oscillatory(self) -> tuple[modal.Mode, ...]:
        return tuple(md for md in self.modes if md.omega > 0)

    def electromechanical(self) -> tuple[modal.Mode, ...]:
        return tuple(md for md in self.modes if md.electromechanical)


def build_study(
    network: Network,
    const_v: bool = False,
    initial: OperatingPoint | None = None,
) -> Study:
    """Solve the equilibrium and compute every modal quantity downstream of it."""
    op = solve_power_flow(network, initial=initial, const_v=const_v)
    A, absA = build_incidence(network)
    bundle = laplacian.hessian(network, op, const_v=const_v)
    dyn = modal.build_dynamic_matrices(network, const_v=const_v)
    modes = modal.solve_qep(
        dyn.m, dyn.d, bundle.L,
        n_angles=network.n,
        gen_labels=network.gen_labels(),
    )
    modes = [modal.attach_line_coords(md, bundle.H) for md in modes]
    return Study(
        network=network, const_v=const_v, op=op, A=A, absA=absA,
        bundle=bundle, dyn=dyn, modes=tuple(modes),
    )
