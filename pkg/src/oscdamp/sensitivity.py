"""First-order eigenvalue sensitivity to operating-point changes.

For a fixed mode (lam, x) of the symmetric quadratic problem, the change in
the eigenvalue under a change dL of the energy Hessian is

    dlam = - x^T (dL) x / alpha,      alpha = 2 lam x^T M x + x^T D x

with the unconjugated transpose throughout. This module expands x^T dL x into
per-line coefficients of d(theta_k) and per-load-bus coefficients of
d(ln V_i), using the exact differential of the bus-coordinate Hessian written
in line quantities:

    theta_coeff_k = [2 x^ln_i x^ln_j - (x'_theta_k)^2] p_k
                    - 2 x'_theta_k x'_nu_k q_k
    vln_coeff_i   = sum_k |A_ik| [ -(x'_theta_k)^2 q_k
                    + 2 x'_theta_k (x'_nu_k - x^ln_i) p_k ] - 2 (x^ln_i)^2 Q_i

where x^ln_i = x_{V_i} / V_i and the 2 x^ln_i x^ln_j term appears only when
both ends of line k are load buses. These coefficients reproduce the
directional derivative of x^T L x for arbitrary state directions, which a
finite-difference eigenvalue oracle confirms to ~1e-10 relative along
redispatch directions. Everything is quadratic in x, so the assembled dlam is
invariant under rescaling of the eigenvector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import modal
from .errors import UsageError
from .network import Network, OperatingPoint, bus_voltages, line_states
from .laplacian import coord_jacobian

UNDAMPED_SIGMA_REL = 1e-10


@dataclass(frozen=True)
class SensitivityReport:
    """Numerator coefficients of the sensitivity formula for one mode.

    ``theta_coeff`` has one complex entry per line, ``vln_coeff`` one per load
    bus (empty in constant-voltage models). dlam for a given state move is
    -(theta_coeff . dtheta + vln_coeff . dvln) / alpha.
    """

    theta_coeff: np.ndarray
    vln_coeff: np.ndarray
    alpha: complex
    mode_ref: str


@dataclass(frozen=True)
class ConstVCoefficients:
    """Real dsigma/domega line gains for constant-voltage models.

    dsigma = a_r . dtheta and domega = a_I . dtheta. For an undamped mode the
    nonnegative gains a_k = (x'_theta_k)^2 p_k / (2 omega x^T M x) are also
    provided; then a_r = 0 and a_I = -a.
    """

    a_r: np.ndarray
    a_I: np.ndarray
    alpha_r: float
    alpha_I: float
    a: np.ndarray | None = None

    def undamped_gains(self) -> np.ndarray:
        if self.a is None:
            raise UsageError(
                "undamped line gains are defined for zero-damping modes only"
            )
        return self.a


def eigvec_line_coords(mode: modal.Mode, H: np.ndarray) -> np.ndarray:
    """x' = H x: signed angle differences, then load-end x_V/V sums per line."""
    return H @ mode.x


def sensitivity_coefficients(
    network: Network,
    op: OperatingPoint,
    mode: modal.Mode,
    const_v: bool = False,
) -> SensitivityReport:
    """Assemble the per-line and per-load-bus numerator coefficients."""
    n, m, nl = network.n, network.m, network.n_lines
    dyn = modal.build_dynamic_matrices(network, const_v=const_v)
    al = modal.alpha(mode, dyn.m, dyn.d)

    H = coord_jacobian(network, op, const_v=const_v)
    ls = line_states(network, op)
    x = mode.x
    xp = H @ x
    xt = xp[:nl]

    theta_coeff = np.empty(nl, dtype=complex)
    if const_v:
        theta_coeff[:] = -(xt ** 2) * ls.p
        vln_coeff = np.zeros(0, dtype=complex)
    else:
        v = bus_voltages(network, op)
        _, q_inj = network.injections()
        xv = xp[nl:]
        xln = np.array([x[n + i - m] / v[i] for i in range(m, n)], dtype=complex)
        for ln in network.lines:
            k = ln.index - 1
            f, t = ln.from_bus - 1, ln.to_bus - 1
            both = xln[f - m] * xln[t - m] if (f >= m and t >= m) else 0.0
            theta_coeff[k] = (2.0 * both - xt[k] ** 2) * ls.p[k] \
                - 2.0 * xt[k] * xv[k] * ls.q[k]
        vln_coeff = np.zeros(n - m, dtype=complex)
        for ln in network.lines:
            k = ln.index - 1
            for e in (ln.from_bus - 1, ln.to_bus - 1):
                if e < m:
                    continue
                i = e - m
                c_p = 2.0 * xt[k] * (xv[k] - xln[i])
                vln_coeff[i] += -(xt[k] ** 2) * ls.q[k] + c_p * ls.p[k]
        for i in range(m, n):
            vln_coeff[i - m] += -2.0 * xln[i - m] ** 2 * q_inj[i]

    return SensitivityReport(
        theta_coeff=theta_coeff,
        vln_coeff=vln_coeff,
        alpha=al,
        mode_ref=f"lambda={mode.lam:.6g}",
    )


def dlambda(
    report: SensitivityReport,
    dtheta: np.ndarray,
    dvln: np.ndarray | None = None,
) -> complex:
    """First-order eigenvalue change for given line-coordinate moves."""
    num = complex(report.theta_coeff @ np.asarray(dtheta))
    if report.vln_coeff.size:
        if dvln is None:
            raise UsageError("this report has voltage coefficients; dvln is required")
        num += complex(report.vln_coeff @ np.asarray(dvln))
    return -num / report.alpha


def const_v_coefficients(
    network: Network,
    op: OperatingPoint,
    mode: modal.Mode,
    m_diag: np.ndarray,
    d_diag: np.ndarray,
) -> ConstVCoefficients:
    """Real/imaginary split of the constant-voltage sensitivity into line gains."""
    if mode.x.size != network.n:
        raise UsageError(
            "constant-voltage coefficients need a mode from the constant-voltage model"
        )
    if mode.omega <= 0:
        raise UsageError("line gains are defined for oscillatory modes only")
    H = coord_jacobian(network, op, const_v=True)
    ls = line_states(network, op)
    xt = H @ mode.x
    al = modal.alpha(mode, m_diag, d_diag)
    ar, ai = al.real, al.imag
    denom = ar * ar + ai * ai
    xt2 = xt ** 2
    a_r = (ar * xt2.real + ai * xt2.imag) * ls.p / denom
    a_I = (ar * xt2.imag - ai * xt2.real) * ls.p / denom

    a = None
    if abs(mode.sigma) <= UNDAMPED_SIGMA_REL * abs(mode.lam):
        # Zero damping: the eigenvector rotates to a real vector, making the
        # gains exactly real and nonnegative for flow-oriented lines.
        xr = mode.x.real
        mx = float(xr @ (m_diag * xr))
        xtr = H @ xr
        a = (xtr ** 2) * ls.p / (2.0 * mode.omega * mx)
    return ConstVCoefficients(a_r=a_r, a_I=a_I, alpha_r=ar, alpha_I=ai, a=a)
