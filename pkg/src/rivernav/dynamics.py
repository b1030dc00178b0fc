"""3-DOF MMG manoeuvring model for a single-screw, single-rudder vessel.

The integrated surge/sway velocities are taken relative to the water. Under a
current that is constant over one control interval, the earth-fixed motion is
the water-relative motion plus the current, so the equations of motion keep
their still-water form and the current only enters the kinematics.

Hull, rudder and propeller force terms follow the MMG standard method and are
driven entirely by the coefficient file; see ``data/kvlcc2_l64.yaml``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from rivernav.angles import wrap_angle

HULL_KEYS = (
    "R_0", "X_vv", "X_vr", "X_rr", "X_vvvv",
    "Y_v", "Y_r", "Y_vvv", "Y_vvr", "Y_vrr", "Y_rrr",
    "N_v", "N_r", "N_vvv", "N_vvr", "N_vrr", "N_rrr",
)
RUDDER_PROPELLER_KEYS = (
    "w_P0", "t_P", "t_R", "a_H", "x_H", "x_P", "x_R",
    "k_0", "k_1", "k_2", "C_1", "C_2_plus", "C_2_minus",
    "gamma_R_plus", "gamma_R_minus", "l_R",
    "epsilon", "kappa", "eta", "f_alpha",
)
# coefficients scaled by the depth-ratio table
SHALLOW_KEYS = tuple(k for k in HULL_KEYS if k != "R_0") + ("w_P0", "one_minus_t_P", "gamma_R")
PARTICULAR_KEYS = (
    "length_pp", "width", "draught", "displacement", "block_coefficient",
    "rudder_area", "propeller_diameter", "mass", "x_G", "I_zG",
)
ADDED_MASS_KEYS = ("m_x", "m_y", "J_z")

MIN_DEPTH_RATIO = 1.2

DEFAULT_VESSEL_FILE = "kvlcc2_l64.yaml"


class ConfigurationError(ValueError):
    """Raised for incomplete or physically inconsistent vessel configurations."""


class InvalidRegimeError(ValueError):
    """Raised when the water is too shallow for the shallow-water corrections."""


@dataclass(frozen=True)
class VesselParticulars:
    length_pp: float
    width: float
    draught: float
    displacement: float
    block_coefficient: float
    rudder_area: float
    propeller_diameter: float
    mass: float
    x_G: float
    I_zG: float

    def __post_init__(self):
        for name in PARTICULAR_KEYS:
            if name == "x_G":
                continue
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        if not abs(self.x_G) < self.length_pp / 2:
            raise ConfigurationError("|x_G| must be smaller than half the length")


@dataclass(frozen=True)
class ShallowTable:
    """Coefficient multipliers tabulated against the depth/draught ratio h/d.

    Values are interpolated linearly between rows and held constant outside
    the tabulated range.
    """

    ratios: tuple[float, ...]
    multipliers: Mapping[str, tuple[float, ...]]

    def __post_init__(self):
        if len(self.ratios) < 1 or any(b <= a for a, b in zip(self.ratios, self.ratios[1:])):
            raise ConfigurationError("shallow-water ratios must be strictly increasing")
        missing = [k for k in SHALLOW_KEYS if k not in self.multipliers]
        if missing:
            raise ConfigurationError(f"shallow-water table lacks multipliers for {missing}")
        for key, column in self.multipliers.items():
            if len(column) != len(self.ratios):
                raise ConfigurationError(f"shallow-water column {key!r} has wrong length")

    def at(self, h_over_d: float) -> dict[str, float]:
        xs = self.ratios
        if h_over_d >= xs[-1]:
            return {k: float(v[-1]) for k, v in self.multipliers.items()}
        return {k: float(np.interp(h_over_d, xs, v)) for k, v in self.multipliers.items()}


@dataclass(frozen=True)
class HydroCoefficients:
    """Added masses [kg, kg·m²] plus the dimensionless MMG coefficient sets."""

    m_x: float
    m_y: float
    J_z: float
    rho: float
    hull: Mapping[str, float]
    rudder_propeller: Mapping[str, float]
    shallow: ShallowTable

    def __post_init__(self):
        if min(self.m_x, self.m_y, self.J_z) < 0:
            raise ConfigurationError("added masses must be non-negative")
        missing = [k for k in HULL_KEYS if k not in self.hull]
        missing += [k for k in RUDDER_PROPELLER_KEYS if k not in self.rudder_propeller]
        if missing:
            raise ConfigurationError(f"missing hydrodynamic coefficients: {missing}")


@dataclass(frozen=True)
class ShipState:
    """Pose in the earth frame plus water-relative body velocities and rudder angle."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    u: float = 0.0
    v_m: float = 0.0
    r: float = 0.0
    delta: float = 0.0

    def speed(self) -> float:
        return math.hypot(self.u, self.v_m)


@dataclass(frozen=True)
class LocalEnvironment:
    depth: float = math.inf
    current_u: float = 0.0
    current_v: float = 0.0

    def __post_init__(self):
        # dry nodes (depth 0) are allowed so that bank samples can be represented
        if not self.depth >= 0:
            raise ValueError("water depth must be non-negative")

    @property
    def current_speed(self) -> float:
        return math.hypot(self.current_u, self.current_v)


@dataclass(frozen=True)
class Vessel:
    """Everything `step` needs to know about one hull."""

    particulars: VesselParticulars
    coeffs: HydroCoefficients
    max_rudder: float = math.radians(35.0)
    rudder_rate: float = math.radians(5.0)
    substeps: int = 10
    # drift-test switch: False removes every hydrodynamic force term
    hydrodynamics: bool = True
    name: str = ""

    def without_forces(self) -> "Vessel":
        return replace(self, hydrodynamics=False)


def _require(block: Mapping, keys, where: str) -> dict[str, float]:
    if not isinstance(block, Mapping):
        raise ConfigurationError(f"missing block {where!r}")
    missing = [k for k in keys if k not in block]
    if missing:
        raise ConfigurationError(f"{where}: missing keys {missing}")
    return {k: float(block[k]) for k in keys}


def load_vessel(path: str | Path | None = None) -> Vessel:
    """Load a vessel-coefficient file; the packaged KVLCC2 L-64 when ``path`` is None."""
    if path is None:
        text = resources.files("rivernav.data").joinpath(DEFAULT_VESSEL_FILE).read_text()
    else:
        text = Path(path).read_text()
    doc = yaml.safe_load(text)
    if not isinstance(doc, Mapping):
        raise ConfigurationError("vessel file must be a key/value document")

    particulars = VesselParticulars(**_require(doc.get("particulars"), PARTICULAR_KEYS, "particulars"))
    water = _require(doc.get("water"), ("rho",), "water")
    added = _require(doc.get("added_mass"), ADDED_MASS_KEYS, "added_mass")
    hull = _require(doc.get("hull"), HULL_KEYS, "hull")
    rp = _require(doc.get("rudder_propeller"), RUDDER_PROPELLER_KEYS, "rudder_propeller")

    sw = doc.get("shallow_water")
    if not isinstance(sw, Mapping) or "ratios" not in sw or "multipliers" not in sw:
        raise ConfigurationError("shallow_water block needs 'ratios' and 'multipliers'")
    table = ShallowTable(
        ratios=tuple(float(x) for x in sw["ratios"]),
        multipliers={k: tuple(float(x) for x in v) for k, v in sw["multipliers"].items()},
    )

    # added masses are stored non-dimensionally in the file
    rho, L, d = water["rho"], particulars.length_pp, particulars.draught
    coeffs = HydroCoefficients(
        m_x=added["m_x"] * 0.5 * rho * L**2 * d,
        m_y=added["m_y"] * 0.5 * rho * L**2 * d,
        J_z=added["J_z"] * 0.5 * rho * L**4 * d,
        rho=rho,
        hull=hull,
        rudder_propeller=rp,
        shallow=table,
    )
    rudder = doc.get("rudder", {}) or {}
    vessel = Vessel(
        particulars=particulars,
        coeffs=coeffs,
        max_rudder=math.radians(float(rudder.get("max_angle_deg", 35.0))),
        rudder_rate=math.radians(float(rudder.get("rate_deg_s", 5.0))),
        name=str(doc.get("name", "")),
    )
    _mass_matrix_determinant(particulars, coeffs)
    return vessel


def relative_velocity(u: float, v_m: float, psi: float, env: LocalEnvironment) -> tuple[float, float, float]:
    """Water-relative body velocities from over-ground body velocities.

    The earth-fixed current is rotated into the body frame and subtracted.
    Returns ``(u_r, v_r, U_rel)``.
    """
    c, s = math.cos(psi), math.sin(psi)
    u_c = env.current_u * c + env.current_v * s
    v_c = -env.current_u * s + env.current_v * c
    u_r, v_r = u - u_c, v_m - v_c
    return u_r, v_r, math.hypot(u_r, v_r)


def ground_velocity(state: ShipState, env: LocalEnvironment) -> tuple[float, float]:
    """Over-ground velocity in the body frame (inverse of `relative_velocity`)."""
    c, s = math.cos(state.psi), math.sin(state.psi)
    return (
        state.u + env.current_u * c + env.current_v * s,
        state.v_m - env.current_u * s + env.current_v * c,
    )


def drift_angle(state: ShipState) -> float:
    """Drift angle atan2(v_m, u); zero for a vessel at rest."""
    if state.u == 0.0 and state.v_m == 0.0:
        return 0.0
    return wrap_angle(math.atan2(state.v_m, state.u))


def shallow_water_multipliers(h_over_d: float, particulars: VesselParticulars) -> dict[str, float]:
    """Depth-ratio multipliers from the Kijima / Ankudinov / Amin-Hasegawa formulas.

    Used to build the tabulated multipliers shipped in the coefficient file.
    The thrust-deduction factor is normalised by its infinite-depth value so
    that every multiplier tends to one in deep water.
    """
    L, B, T, Cb = particulars.length_pp, particulars.width, particulars.draught, particulars.block_coefficient
    HT = h_over_d - 1.0
    TH = 1.0 / h_over_d

    K0 = 1 + 0.0775 / HT**2 - 0.011 / HT**3 + 0.000068 / HT**5
    K1 = -0.0643 / HT + 0.0724 / HT**2 - 0.0113 / HT**3 + 0.0000767 / HT**5
    K2 = 0.0342 / HT if B / T <= 4 else 0.137 * B / (HT * T)
    B1 = Cb * B * (1 + B / L) ** 2
    bt = B1 / T

    cbt = Cb * B / T
    A1Yr = -5.5 * cbt**2 + 26 * cbt - 31.5
    A2Yr = 37 * cbt**2 - 185 * cbt + 230
    A3Yr = -38 * cbt**2 + 197 * cbt - 250
    A1Nvvr = 91 * Cb * T / B - 25
    A2Nvvr = -515 * Cb * T / B + 144
    A3Nvvr = 508 * Cb * T / B - 143
    A1Nvrr = 40 * Cb * B / T - 88
    A2Nvrr = -295 * Cb * B / T + 645
    A3Nvrr = 312 * Cb * B / T - 678

    gnr = K0 + 8 / 15 * K1 * bt + 40 / 105 * K2 * bt**2
    fyr = K0 + 2 / 5 * K1 * bt + 24 / 105 * K2 * bt**2
    fnr = K0 + 1 / 2 * K1 * bt + 1 / 3 * K2 * bt**2
    fyv = 1.5 * fnr - 0.5
    fnv = K0 + K1 * bt + K2 * bt**2

    out = {
        "X_vv": fyv, "X_vr": fyr, "X_rr": fnr, "X_vvvv": fyv,
        "Y_v": -TH + 1 / (1 - TH) ** (0.4 * Cb * B / T),
        "Y_r": 1 + A1Yr * TH + A2Yr * TH**2 + A3Yr * TH**3,
        "Y_vvv": fyv, "Y_vvr": fyv, "Y_vrr": fyv, "Y_rrr": gnr,
        "N_v": fnv,
        "N_r": -TH + 1 / (1 - TH) ** (-14.28 * T / L + 1.5),
        "N_vvv": fyv,
        "N_vvr": 1 + A1Nvvr * TH + A2Nvvr * TH**2 + A3Nvvr * TH**3,
        "N_vrr": 1 + A1Nvrr * TH + A2Nvrr * TH**2 + A3Nvrr * TH**3,
        "N_rrr": gnr,
    }

    cl = Cb * L / T
    out["w_P0"] = 1 + (-4.932 + 0.6425 * cl - 0.0165 * cl**2) * TH**1.655

    clb = Cb * L / B
    poly = 29.495 - 14.089 * clb + 1.6486 * clb**2
    ctp = 1 + poly * (1 / 250 - 7 * TH / 200 - 13 * TH**2 / 125)
    out["one_minus_t_P"] = ctp / (1 + poly / 250)

    cbl = Cb * B / L
    if TH <= -0.332 * T / B + 0.581:
        out["gamma_R"] = 1 + (-541 / 4 + 2432.95 * cbl - 10137.7 * cbl**2) * TH**4.81
    else:
        out["gamma_R"] = 1 + (
            (-5129 / 500 + 178.207 * cbl - 2745 / 4 * cbl**2)
            * (-1927 / 500 + 2733 * TH / 200 - 2617 * TH**2 / 250)
        )
    return out


def tabulate_shallow_multipliers(particulars: VesselParticulars, ratios) -> dict[str, list[float]]:
    """Multiplier columns for ``ratios``; the last ratio is pinned to exactly 1 (deep water)."""
    columns: dict[str, list[float]] = {k: [] for k in SHALLOW_KEYS}
    for i, ratio in enumerate(ratios):
        row = shallow_water_multipliers(ratio, particulars)
        for k in SHALLOW_KEYS:
            columns[k].append(1.0 if i == len(ratios) - 1 else round(row[k], 6))
    return columns


def shallow_corrected(coeffs: HydroCoefficients, h: float, d: float) -> HydroCoefficients:
    """Coefficients with depth-ratio multipliers applied at water depth ``h``."""
    ratio = h / d
    if ratio < MIN_DEPTH_RATIO - 1e-12:
        raise InvalidRegimeError(f"h/d = {ratio:.4f} is below the valid limit {MIN_DEPTH_RATIO}")
    if math.isinf(ratio):
        return coeffs
    mult = coeffs.shallow.at(ratio)
    hull = {k: v * mult.get(k, 1.0) for k, v in coeffs.hull.items()}
    rp = dict(coeffs.rudder_propeller)
    rp["w_P0"] *= mult["w_P0"]
    rp["t_P"] = 1.0 - mult["one_minus_t_P"] * (1.0 - rp["t_P"])
    rp["gamma_R_plus"] *= mult["gamma_R"]
    rp["gamma_R_minus"] *= mult["gamma_R"]
    return replace(coeffs, hull=hull, rudder_propeller=rp)


def _mass_matrix_determinant(p: VesselParticulars, c: HydroCoefficients) -> float:
    m = p.mass
    a = m + c.m_y
    b = p.x_G * m
    e = p.I_zG + p.x_G**2 * m + c.J_z
    det = a * e - b * b
    if not (m + c.m_x > 0 and det > 1e-12 * abs(a * e)):
        raise ConfigurationError("singular mass matrix: check m, m_x, m_y, I_zG, J_z, x_G")
    return det


class ForceModel:
    """Precomputed constants of the MMG right-hand side for one coefficient set."""

    def __init__(self, particulars: VesselParticulars, coeffs: HydroCoefficients, hydrodynamics: bool = True):
        p, c = particulars, coeffs
        self.hydrodynamics = hydrodynamics
        self.L = p.length_pp
        self.d = p.draught
        self.m = p.mass
        self.x_G = p.x_G
        self.Dp = p.propeller_diameter
        self.A_R = p.rudder_area
        self.rho = c.rho
        self.mu = p.mass + c.m_x
        self.a = p.mass + c.m_y
        self.mx_total = p.mass + c.m_x
        self.b = p.x_G * p.mass
        self.e = p.I_zG + p.x_G**2 * p.mass + c.J_z
        self.det = _mass_matrix_determinant(p, c)
        self.h = dict(c.hull)
        self.rp = dict(c.rudder_propeller)

    def accelerations(self, u: float, v: float, r: float, delta: float, n: float) -> tuple[float, float, float]:
        m, xg = self.m, self.x_G
        if self.hydrodynamics:
            X, Y, N = self.forces(u, v, r, delta, n)
        else:
            X = Y = N = 0.0
        fx = X + self.a * v * r + xg * m * r * r
        fy = Y - self.mx_total * u * r
        fn = N - xg * m * u * r
        du = fx / self.mu
        dv = (self.e * fy - self.b * fn) / self.det
        dr = (self.a * fn - self.b * fy) / self.det
        return du, dv, dr

    def forces(self, u: float, v: float, r: float, delta: float, n: float) -> tuple[float, float, float]:
        h, rp = self.h, self.rp
        L, d, rho = self.L, self.d, self.rho
        U2 = u * u + v * v
        if U2 == 0.0:
            beta = vd = rd = 0.0
        else:
            U = math.sqrt(U2)
            # MMG convention: beta = atan(-v_m / u)
            beta = math.atan2(-v, u)
            vd = v / U
            rd = r * L / U

        q = 0.5 * rho * L * d * U2
        vd2, rd2 = vd * vd, rd * rd
        X_H = q * (-h["R_0"] + h["X_vv"] * vd2 + h["X_vr"] * vd * rd + h["X_rr"] * rd2 + h["X_vvvv"] * vd2 * vd2)
        Y_H = q * (
            h["Y_v"] * vd + h["Y_r"] * rd + h["Y_vvv"] * vd2 * vd
            + h["Y_vvr"] * vd2 * rd + h["Y_vrr"] * vd * rd2 + h["Y_rrr"] * rd2 * rd
        )
        N_H = q * L * (
            h["N_v"] * vd + h["N_r"] * rd + h["N_vvv"] * vd2 * vd
            + h["N_vvr"] * vd2 * rd + h["N_vrr"] * vd * rd2 + h["N_rrr"] * rd2 * rd
        )

        # propeller
        beta_P = beta - rp["x_P"] * rd
        C_2 = rp["C_2_plus"] if beta_P > 0.0 else rp["C_2_minus"]
        one_minus_w = (1.0 - rp["w_P0"]) * (1.0 + (1.0 - math.exp(-rp["C_1"] * abs(beta_P))) * (C_2 - 1.0))
        u_P = one_minus_w * u
        Dp = self.Dp
        # K_T * n^2 expanded in J*n = u_P / Dp, so tiny n cannot overflow J
        if n != 0.0:
            Jn = u_P / Dp
            KTn2 = rp["k_0"] * n * n + rp["k_1"] * Jn * n + rp["k_2"] * Jn * Jn
        else:
            KTn2 = 0.0
        X_P = (1.0 - rp["t_P"]) * rho * KTn2 * Dp**4

        # rudder; the sqrt form below is the usual u_R expression multiplied through by J
        beta_R = beta - rp["l_R"] * rd
        gamma_R = rp["gamma_R_plus"] if beta_R > 0.0 else rp["gamma_R_minus"]
        v_R = math.sqrt(U2) * gamma_R * beta_R
        if KTn2 > 0.0:
            slip = math.sqrt(u_P * u_P + 8.0 * KTn2 * Dp * Dp / math.pi) - u_P
        else:
            slip = 0.0
        jet = u_P + rp["kappa"] * slip
        u_R = rp["epsilon"] * math.sqrt(rp["eta"] * jet * jet + (1.0 - rp["eta"]) * u_P * u_P)
        U_R2 = u_R * u_R + v_R * v_R
        alpha_R = delta - math.atan2(v_R, u_R)
        F_N = 0.5 * self.A_R * rho * rp["f_alpha"] * U_R2 * math.sin(alpha_R)
        cd, sd = math.cos(delta), math.sin(delta)
        X_R = -(1.0 - rp["t_R"]) * F_N * sd
        Y_R = -(1.0 + rp["a_H"]) * F_N * cd
        N_R = -(rp["x_R"] * L + rp["a_H"] * rp["x_H"] * L) * F_N * cd

        return X_H + X_R + X_P, Y_H + Y_R, N_H + N_R


def accelerations(
    state: ShipState,
    coeffs: HydroCoefficients,
    particulars: VesselParticulars,
    n_prop: float,
    hydrodynamics: bool = True,
) -> tuple[float, float, float]:
    """(du/dt, dv_m/dt, dr/dt) from the coupled surge/sway/yaw equations.

    ``coeffs`` must already carry any shallow-water correction.
    """
    if n_prop < 0:
        raise ValueError("propeller rate must be non-negative")
    model = ForceModel(particulars, coeffs, hydrodynamics)
    return model.accelerations(state.u, state.v_m, state.r, state.delta, n_prop)


def apply_rudder_limit(delta_now: float, delta_cmd: float, rate: float, dt: float, max_angle: float = math.inf) -> float:
    """Move the rudder toward the command by at most ``rate * dt`` and clip to the range."""
    if not rate > 0:
        raise ValueError("rudder rate must be positive")
    reach = rate * dt
    delta = delta_now + min(max(delta_cmd - delta_now, -reach), reach)
    return min(max(delta, -max_angle), max_angle)


def step(
    state: ShipState,
    delta_cmd: float,
    n_prop: float,
    env: LocalEnvironment,
    dt: float,
    vessel: Vessel,
    rudder_rate: float | None = None,
) -> ShipState:
    """Advance the vessel by ``dt`` with fixed-step RK4 sub-steps.

    The rudder is rate limited once at the start of the interval and then held.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    rate = vessel.rudder_rate if rudder_rate is None else rudder_rate
    delta = apply_rudder_limit(state.delta, delta_cmd, rate, dt, vessel.max_rudder)
    coeffs = shallow_corrected(vessel.coeffs, env.depth, vessel.particulars.draught)
    model = ForceModel(vessel.particulars, coeffs, vessel.hydrodynamics)
    acc = model.accelerations
    uc, vc = env.current_u, env.current_v
    cos, sin = math.cos, math.sin

    def deriv(psi, u, v, r):
        du, dv, dr = acc(u, v, r, delta, n_prop)
        c, s = cos(psi), sin(psi)
        return u * c - v * s + uc, u * s + v * c + vc, r, du, dv, dr

    x, y, psi, u, v, r = state.x, state.y, state.psi, state.u, state.v_m, state.r
    h = dt / vessel.substeps
    for _ in range(vessel.substeps):
        k1 = deriv(psi, u, v, r)
        k2 = deriv(psi + 0.5 * h * k1[2], u + 0.5 * h * k1[3], v + 0.5 * h * k1[4], r + 0.5 * h * k1[5])
        k3 = deriv(psi + 0.5 * h * k2[2], u + 0.5 * h * k2[3], v + 0.5 * h * k2[4], r + 0.5 * h * k2[5])
        k4 = deriv(psi + h * k3[2], u + h * k3[3], v + h * k3[4], r + h * k3[5])
        w = h / 6.0
        x += w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        psi += w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        u += w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        v += w * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        r += w * (k1[5] + 2 * k2[5] + 2 * k3[5] + k4[5])
    return ShipState(x=x, y=y, psi=wrap_angle(psi), u=u, v_m=v, r=r, delta=delta)


def self_propulsion_speed(vessel: Vessel, n_prop: float, depth: float = math.inf) -> float:
    """Straight-running equilibrium surge speed at propeller rate ``n_prop``."""
    from scipy.optimize import brentq

    coeffs = shallow_corrected(vessel.coeffs, depth, vessel.particulars.draught)
    model = ForceModel(vessel.particulars, coeffs)
    return brentq(lambda u: model.accelerations(u, 0.0, 0.0, 0.0, n_prop)[0], 1e-6, 20.0, xtol=1e-12)
