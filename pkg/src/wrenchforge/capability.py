"""Wrench capability at a fixed configuration.

All measures solve the actuator balance ``tau_d + J' h_e = B u`` with ``u`` in
the actuator box:

* ``beta1``: radius along ``c`` of the actuator-weighted, load-offset wrench
  ellipsoid (closed form through the pseudoinverse of ``B``);
* ``L2`` polytope: wrenches whose minimum-norm witness ``B+ (J' h + tau_d)``
  lies in the box;
* ``L_inf`` polytope: wrenches for which some ``u`` in the box balances the
  load, queried with a directional LP (``beta2``) or its relaxation without
  the orthogonality rows (``beta3``).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import unit_direction
from .solvers.lp import LinearProgram, solve_lp

OK = "optimal"
CANNOT_SUSTAIN = "cannot_sustain_load"
UNBOUNDED = "unbounded"


class CapabilityError(ValueError):
    pass


class StaticLoadError(CapabilityError):
    """The actuators cannot hold the configuration's own load."""


class DegenerateDirection(CapabilityError):
    pass


class SingularContact(CapabilityError):
    pass


@dataclass
class ContactSpec:
    """Allowed secondary-contact wrench directions (columns of ``C2``)."""
    C2: np.ndarray
    one_sided: np.ndarray = None

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C2, dtype=float))
        if C.shape[0] == 1 and C.shape[1] in (3, 6):
            C = C.T
        d, l = C.shape
        if not 1 <= l <= d:
            raise ValueError("C2 needs between 1 and d columns")
        norms = np.linalg.norm(C, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("C2 columns must be unit vectors")
        self.C2 = C / norms
        if self.one_sided is None:
            self.one_sided = np.zeros(l, dtype=bool)
        self.one_sided = np.broadcast_to(np.asarray(self.one_sided, dtype=bool), (l,)).copy()

    @property
    def pinv(self):
        return truncated_pinv(self.C2)


@dataclass
class DirectionalCapability:
    beta: float
    u_star: np.ndarray
    h_e_star: np.ndarray
    objective_kind: str
    status: str = OK
    h_e2_star: np.ndarray = None
    duals: dict = field(default_factory=dict)
    iterations: int = 0


def truncated_pinv(A, tol=1e-10):
    """Pseudoinverse by thin SVD, dropping singular values below ``tol``."""
    U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    keep = s > tol
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def actuator_weighting(u_min, u_max):
    """W_u = diag(1 / min(|u_min|, |u_max|))."""
    lim = np.minimum(np.abs(np.asarray(u_min, float)), np.abs(np.asarray(u_max, float)))
    if np.any(lim <= 0):
        raise CapabilityError("actuator limits must straddle zero for the weighting")
    return np.diag(1.0 / lim)


def transmission_ratio_kinematic(J, c):
    """(c' J J' c)^(-1/2): unit-ball joint effort mapped onto direction ``c``."""
    c = unit_direction(c)
    J = np.asarray(J, dtype=float)
    s = float(c @ J @ J.T @ c)
    if s <= 1e-14:
        raise DegenerateDirection("J J' is singular along c")
    return 1.0 / math.sqrt(s)


# -- matrix-level kernels ------------------------------------------------------

def beta1(J, B, W_u, tau_d, c, strict=False):
    """Positive root of ||W_u B+ (J' beta c + tau_d)||^2 = 1."""
    c = unit_direction(c)
    Bp = np.linalg.pinv(np.asarray(B, float))
    W_u = np.asarray(W_u, float)
    tau_d = np.asarray(tau_d, float)
    v = W_u @ Bp @ (np.asarray(J, float).T @ c)
    w = W_u @ Bp @ tau_d
    vv, vw, ww = float(v @ v), float(v @ w), float(w @ w)
    if ww >= 1.0:
        if strict:
            raise StaticLoadError("configuration cannot sustain its static load")
        return DirectionalCapability(0.0, Bp @ tau_d, np.zeros_like(c), "beta1", CANNOT_SUSTAIN)
    if vv <= 1e-14:
        raise DegenerateDirection("direction produces no actuator effort")
    b = (-vw + math.sqrt(vw * vw - vv * (ww - 1.0))) / vv
    h = b * c
    u = Bp @ (tau_d + np.asarray(J, float).T @ h)
    return DirectionalCapability(b, u, h, "beta1")


def l2_beta(J, B, u_min, u_max, tau_d, c):
    """Largest beta with B+ (J' beta c + tau_d) inside the actuator box."""
    c = unit_direction(c)
    Bp = np.linalg.pinv(np.asarray(B, float))
    u0 = Bp @ np.asarray(tau_d, float)
    du = Bp @ (np.asarray(J, float).T @ c)
    u_min = np.asarray(u_min, float)
    u_max = np.asarray(u_max, float)
    if np.any(u0 < u_min - 1e-12) or np.any(u0 > u_max + 1e-12):
        return DirectionalCapability(0.0, u0, np.zeros_like(c), "beta2_l2", CANNOT_SUSTAIN)
    b = math.inf
    for i in range(du.size):
        if du[i] > 1e-14:
            b = min(b, (u_max[i] - u0[i]) / du[i])
        elif du[i] < -1e-14:
            b = min(b, (u_min[i] - u0[i]) / du[i])
    if not math.isfinite(b):
        return DirectionalCapability(math.inf, u0, c * math.inf, "beta2_l2", UNBOUNDED)
    b = max(b, 0.0)
    return DirectionalCapability(b, u0 + b * du, b * c, "beta2_l2")


def wrench_lp(J, B, u_min, u_max, tau_d, c, relax_orthogonal=False, J2=None, contact=None):
    """Directional LP over ``z = (u, h_e[, h_e2])``; returns ``(lp, layout)``.

    Rows: ``B u - J' h_e [- J2' h_e2] = tau_d``; ``(c c' - I) h_e = 0`` unless
    relaxed; ``(C2 C2+ - I) h_e2 = 0`` and ``-C2+ h_e2 <= 0`` on one-sided
    columns when a contact is given.
    """
    J = np.asarray(J, float)
    B = np.asarray(B, float)
    n, m = B.shape
    d = J.shape[0]
    c = unit_direction(c)
    n_h2 = 0 if contact is None else d
    nz = m + d + n_h2
    A_bal = np.zeros((n, nz))
    A_bal[:, :m] = B
    A_bal[:, m:m + d] = -J.T
    rows = [A_bal]
    rhs = [np.asarray(tau_d, float)]
    layout = {"u": slice(0, m), "h": slice(m, m + d), "balance": slice(0, n)}
    r0 = n
    if not relax_orthogonal:
        A_o = np.zeros((d, nz))
        A_o[:, m:m + d] = np.outer(c, c) - np.eye(d)
        rows.append(A_o)
        rhs.append(np.zeros(d))
        layout["orthogonal"] = slice(r0, r0 + d)
        r0 += d
    A_in = np.zeros((0, nz))
    b_in = np.zeros(0)
    if contact is not None:
        J2 = np.asarray(J2, float)
        A_bal[:, m + d:] = -J2.T
        Cp = contact.pinv
        A_c = np.zeros((d, nz))
        A_c[:, m + d:] = contact.C2 @ Cp - np.eye(d)
        rows.append(A_c)
        rhs.append(np.zeros(d))
        layout["contact"] = slice(r0, r0 + d)
        layout["h2"] = slice(m + d, nz)
        sided = np.flatnonzero(contact.one_sided)
        if sided.size:
            A_in = np.zeros((sided.size, nz))
            A_in[:, m + d:] = -Cp[sided]
            b_in = np.zeros(sided.size)
    cost = np.zeros(nz)
    cost[m:m + d] = c
    lb = np.full(nz, -np.inf)
    ub = np.full(nz, np.inf)
    lb[:m] = u_min
    ub[:m] = u_max
    lp = LinearProgram(cost, np.vstack(rows), np.concatenate(rhs), A_in, b_in, lb, ub)
    return lp, layout


def directional_lp(J, B, u_min, u_max, tau_d, c, relax_orthogonal=False, J2=None, contact=None):
    lp, lay = wrench_lp(J, B, u_min, u_max, tau_d, c, relax_orthogonal, J2, contact)
    kind = "beta3" if relax_orthogonal else "beta2"
    sol = solve_lp(lp)
    c = unit_direction(c)
    if sol.status == "infeasible":
        return DirectionalCapability(0.0, None, None, kind, CANNOT_SUSTAIN, iterations=sol.iterations)
    if sol.status != "optimal":
        return DirectionalCapability(math.inf, None, None, kind, UNBOUNDED, iterations=sol.iterations)
    z = sol.x
    duals = {"eq": sol.dual_eq, "in": sol.dual_in, "lb": sol.dual_lb, "ub": sol.dual_ub,
             "balance": sol.dual_eq[lay["balance"]]}
    h2 = z[lay["h2"]] if "h2" in lay else None
    return DirectionalCapability(float(c @ z[lay["h"]]), z[lay["u"]], z[lay["h"]], kind, OK, h2,
                                 duals, sol.iterations)


def member_l2(J, B, u_min, u_max, tau_d, h_e, tol=1e-9):
    u = np.linalg.pinv(np.asarray(B, float)) @ (np.asarray(J, float).T @ h_e + tau_d)
    return bool(np.all(u >= np.asarray(u_min) - tol) and np.all(u <= np.asarray(u_max) + tol))


def member_linf(J, B, u_min, u_max, tau_d, h_e):
    B = np.asarray(B, float)
    lp = LinearProgram(np.zeros(B.shape[1]), B, np.asarray(J, float).T @ h_e + tau_d,
                       lb=u_min, ub=u_max)
    return solve_lp(lp).status == "optimal"


# -- model-level entry points -----------------------------------------------------

def _theta(realization):
    return np.asarray(getattr(realization, "theta", realization), dtype=float)


def system_matrices(model, realization):
    theta = _theta(realization)
    return model.jacobian(theta, 0), model.actuator_map(theta), model.u_min, model.u_max


def transmission_ratio_uvms(model, realization, tau_d, c, strict=False):
    J, B, lo, hi = system_matrices(model, realization)
    return beta1(J, B, actuator_weighting(lo, hi), tau_d, c, strict)


def directional_wrench_lp(model, realization, tau_d, c, relax_orthogonal=False, contact=None,
                          eps_sing=None):
    """beta2 / beta3 at a configuration, optionally with a secondary contact."""
    theta = _theta(realization)
    J, B, lo, hi = system_matrices(model, theta)
    J2 = None
    if contact is not None:
        if model.second_arm is None:
            raise CapabilityError("a secondary contact needs a second arm")
        J2 = model.jacobian(theta, 1)
        eps = 1e-4 * model.characteristic_length if eps_sing is None else eps_sing
        smin = np.linalg.svd(np.vstack([J, J2]), compute_uv=False)[-1]
        if not smin > eps:
            raise SingularContact(f"stacked Jacobian is rank deficient (sigma_min={smin:.3g})")
    return directional_lp(J, B, lo, hi, tau_d, c, relax_orthogonal, J2, contact)


def l2_directional(model, realization, tau_d, c):
    J, B, lo, hi = system_matrices(model, realization)
    return l2_beta(J, B, lo, hi, tau_d, c)


def polytope_membership(model, realization, tau_d, h_e, kind="Linf"):
    J, B, lo, hi = system_matrices(model, realization)
    h_e = np.asarray(h_e, float)
    if kind == "L2":
        return member_l2(J, B, lo, hi, tau_d, h_e)
    if kind in ("Linf", "L_inf", "linf"):
        return member_linf(J, B, lo, hi, tau_d, h_e)
    raise ValueError(f"unknown polytope kind {kind!r}")


@dataclass
class Slice:
    angles: np.ndarray
    ellipsoid: np.ndarray
    l2: np.ndarray
    linf: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def points(self, kind):
        r = getattr(self, kind)
        return np.outer(r * np.cos(self.angles), self.e1) + np.outer(r * np.sin(self.angles), self.e2)


def slice_matrices(J, B, u_min, u_max, tau_d, e1, e2, n_rays=72):
    """Radial boundary distance of the three capability sets along rays in span(e1, e2).

    The returned arrays hold ``n_rays + 1`` samples; the last repeats the first
    so the polyline closes.
    """
    e1 = np.asarray(e1, float)
    e2 = np.asarray(e2, float)
    if abs(e1 @ e2) > 1e-9 or abs(e1 @ e1 - 1) > 1e-9 or abs(e2 @ e2 - 1) > 1e-9:
        raise ValueError("plane directions must be orthonormal")
    if not member_linf(J, B, u_min, u_max, tau_d, np.zeros_like(e1)):
        raise CapabilityError("zero wrench is not achievable: infeasible slice center")
    W = actuator_weighting(u_min, u_max)
    angles = np.linspace(0.0, 2.0 * np.pi, n_rays + 1)
    ell = np.empty(n_rays + 1)
    l2 = np.empty(n_rays + 1)
    linf = np.empty(n_rays + 1)
    for k in range(n_rays):
        ray = math.cos(angles[k]) * e1 + math.sin(angles[k]) * e2
        ell[k] = beta1(J, B, W, tau_d, ray).beta
        l2[k] = l2_beta(J, B, u_min, u_max, tau_d, ray).beta
        linf[k] = directional_lp(J, B, u_min, u_max, tau_d, ray).beta
    ell[-1], l2[-1], linf[-1] = ell[0], l2[0], linf[0]
    return Slice(angles, ell, l2, linf, e1, e2)


def polytope_slice(model, realization, tau_d, plane, n_rays=72):
    J, B, lo, hi = system_matrices(model, realization)
    e1, e2 = plane
    return slice_matrices(J, B, lo, hi, tau_d, e1, e2, n_rays)
