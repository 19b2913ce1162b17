"""Energy Hessian in bus coordinates and its line-coordinate factorization.

The bundle carries the pieces the sensitivity formula works with: the full
Hessian L, the Jacobian H of the line-coordinate map (theta, nu), the three
diagonal blocks of the line-coordinate Hessian as vectors, and the diagonal
bus complement that makes

    L = H^T L'_line H + L_bus

an exact identity at any state. The complement is assembled in closed form
(not by matrix subtraction): the line-route product puts sum_k |A_ik| q_k /
V_i^2 on each load-voltage diagonal where the bus-coordinate Hessian has
sum_k b_k + Q_i / V_i^2, so the bus part absorbs the difference. At an
equilibrium the complement equals 2 * sum of incident susceptances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    Network,
    OperatingPoint,
    bus_voltages,
    build_incidence,
    hessian_matrix,
    line_states,
)


@dataclass(frozen=True)
class LaplacianBundle:
    """Hessian L plus its line-coordinate factorization pieces.

    ``lp_theta_theta``, ``lp_theta_nu``, ``lp_nu_nu`` are the diagonals of the
    2x2 block structure of L'_line, equal elementwise to (-q, p, q). With
    ``const_v`` there are no voltage coordinates: H has only the theta rows
    and ``l_bus_diag`` is empty.
    """

    L: np.ndarray
    H: np.ndarray
    lp_theta_theta: np.ndarray
    lp_theta_nu: np.ndarray
    lp_nu_nu: np.ndarray
    l_bus_diag: np.ndarray
    const_v: bool = False

    def assemble_from_parts(self) -> np.ndarray:
        """H^T L'_line H + L_bus, for checking the factorization identity."""
        nl = self.lp_theta_theta.size
        Ht = self.H[:nl]
        out = Ht.T @ (self.lp_theta_theta[:, None] * Ht)
        if not self.const_v:
            Hv = self.H[nl:]
            out += Ht.T @ (self.lp_theta_nu[:, None] * Hv)
            out += Hv.T @ (self.lp_theta_nu[:, None] * Ht)
            out += Hv.T @ (self.lp_nu_nu[:, None] * Hv)
            nloads = self.l_bus_diag.size
            idx = np.arange(out.shape[0] - nloads, out.shape[0])
            out[idx, idx] += self.l_bus_diag
        return out


def coord_jacobian(
    network: Network, op: OperatingPoint, const_v: bool = False
) -> np.ndarray:
    """Jacobian of the map from bus to line coordinates.

    Rows 1..ell carry the signed incidence transpose in the angle columns;
    rows ell+1..2*ell carry |A_ik| / V_i in the load-voltage columns. With
    ``const_v`` only the theta rows exist.
    """
    n, m, nl = network.n, network.m, network.n_lines
    A, absA = build_incidence(network)
    if const_v:
        return A.T.copy()
    v = bus_voltages(network, op)
    H = np.zeros((2 * nl, 2 * n - m))
    H[:nl, :n] = A.T
    for i in range(m, n):
        H[nl:, n + i - m] = absA[i] / v[i]
    return H


def hessian(
    network: Network, op: OperatingPoint, const_v: bool = False
) -> LaplacianBundle:
    """Analytic Hessian bundle at the given state (no numerical differentiation)."""
    L = hessian_matrix(network, op, const_v=const_v)
    H = coord_jacobian(network, op, const_v=const_v)
    ls = line_states(network, op)
    if const_v:
        l_bus = np.zeros(0)
    else:
        n, m = network.n, network.m
        v = bus_voltages(network, op)
        _, q_inj = network.injections()
        _, absA = build_incidence(network)
        b_sum = np.array([
            sum(ln.b for ln in network.lines if i + 1 in (ln.from_bus, ln.to_bus))
            for i in range(n)
        ])
        l_bus = np.empty(n - m)
        for i in range(m, n):
            q_incident = float(absA[i] @ ls.q)
            l_bus[i - m] = (b_sum[i] + q_inj[i] / v[i] ** 2) - q_incident / v[i] ** 2
    return LaplacianBundle(
        L=L,
        H=H,
        lp_theta_theta=-ls.q,
        lp_theta_nu=ls.p.copy(),
        lp_nu_nu=ls.q.copy(),
        l_bus_diag=l_bus,
        const_v=const_v,
    )
