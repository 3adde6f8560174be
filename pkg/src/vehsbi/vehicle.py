"""Single-track vehicle model with Dugoff tires.

Pure, deterministic evaluation of the continuous-time dynamics: slip
kinematics, tire forces with friction saturation, planar body dynamics,
wheel spin dynamics and first-order slip-lag states. All operations accept
scalars or equal-shaped numpy arrays (the batch simulator integrates many
vehicles lane-parallel through the same formulas).

State vector layout (9 entries):
    [V_x, V_y, r, w_f, w_r, a_hat_f, a_hat_r, k_hat_f, k_hat_r]
with body velocities in m/s, yaw rate r in rad/s, wheel speeds w in rad/s,
delayed slip angles a_hat in rad and delayed longitudinal slips k_hat
dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "VehicleConstants", "IdentifiedParams", "EffectiveParams", "VehicleState",
    "ControlInput", "TireForces", "Measurement",
    "InvalidStateError", "InvalidParameterError", "RejectedSampleError",
    "PARAM_NAMES", "STIFFNESS_SCALE", "STATE_DIM",
    "resolve_params", "slip_angles", "wheel_frame_velocities",
    "longitudinal_slips", "effective_radius", "axle_loads", "dugoff_forces",
    "state_derivative", "measurement_of", "sideslip_angle",
]

PARAM_NAMES = ("l_f", "h_cog", "d_Ckf", "d_Ckr", "d_Caf", "d_Car")
STIFFNESS_SCALE = 1.0e5  # stiffness deviations are expressed in units of 1e5
STATE_DIM = 9

# column indices of the state vector
IVX, IVY, IR, IWF, IWR, IAHF, IAHR, IKHF, IKHR = range(9)


class InvalidStateError(ValueError):
    """Kinematic state outside the model's domain (e.g. V_x <= 0)."""


class InvalidParameterError(ValueError):
    """Physically inadmissible parameter combination."""


class RejectedSampleError(ValueError):
    """Parameter draw produced an inadmissible vehicle; caller resamples."""


@dataclass(frozen=True)
class VehicleConstants:
    """Fixed plant constants (not under inference)."""

    m: float = 1500.0          # vehicle mass [kg]
    L: float = 2.7             # wheelbase [m]
    g: float = 9.81            # gravity [m/s^2]
    R_f: float = 0.31          # free tire radius [m]
    C_vert: float = 2.5e5      # vertical tire stiffness [N/m]
    I_w: float = 1.2           # wheel rotational inertia [kg m^2]
    mu: float = 0.9            # road friction coefficient
    K_lat: float = 2.0e5       # tire lateral stiffness per unit length [N/m]
    C_kappa_nom_f: float = 1.0e5   # nominal longitudinal stiffness, front [N]
    C_kappa_nom_r: float = 1.0e5   # nominal longitudinal stiffness, rear [N]
    C_alpha_nom_f: float = 6.0e4   # nominal cornering stiffness, front [N/rad]
    C_alpha_nom_r: float = 6.0e4   # nominal cornering stiffness, rear [N/rad]

    def validate(self) -> None:
        for name in ("m", "L", "g", "R_f", "C_vert", "I_w", "mu", "K_lat",
                     "C_kappa_nom_f", "C_kappa_nom_r",
                     "C_alpha_nom_f", "C_alpha_nom_r"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be strictly positive")
        if not 0 < self.mu <= 1.5:
            raise InvalidParameterError("mu must lie in (0, 1.5]")
        # the statically loaded radius must stay positive
        if not self.R_f > self.m * self.g / (2.0 * self.C_vert):
            raise InvalidParameterError("free radius too small for static load")


@dataclass(frozen=True)
class IdentifiedParams:
    """The 6-vector under inference: COG coordinates + stiffness deviations.

    Deviations are in units of 1e5 N (longitudinal) and 1e5 N/rad (cornering),
    added to the nominal stiffnesses.
    """

    l_f: float       # COG to front axle distance [m]
    h_cog: float     # COG height above ground [m]
    d_Ckf: float
    d_Ckr: float
    d_Caf: float
    d_Car: float

    def as_array(self) -> np.ndarray:
        return np.array([self.l_f, self.h_cog, self.d_Ckf, self.d_Ckr,
                         self.d_Caf, self.d_Car], dtype=float)

    @staticmethod
    def from_array(v) -> "IdentifiedParams":
        v = np.asarray(v, dtype=float)
        if v.shape != (6,):
            raise ValueError(f"expected 6 parameters, got shape {v.shape}")
        return IdentifiedParams(*(float(x) for x in v))


@dataclass(frozen=True)
class EffectiveParams:
    """Plant parameters after resolving geometry and stiffness deviations.

    Fields may be scalars or equal-length arrays (one lane per vehicle).
    """

    l_f: np.ndarray
    l_r: np.ndarray
    h_cog: np.ndarray
    I_z: np.ndarray
    C_kf: np.ndarray
    C_kr: np.ndarray
    C_af: np.ndarray
    C_ar: np.ndarray
    sigma_l: np.ndarray
    F_zf_static: np.ndarray
    F_zr_static: np.ndarray


@dataclass(frozen=True)
class VehicleState:
    V_x: float
    V_y: float
    r: float
    w_f: float
    w_r: float
    a_hat_f: float = 0.0
    a_hat_r: float = 0.0
    k_hat_f: float = 0.0
    k_hat_r: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.V_x, self.V_y, self.r, self.w_f, self.w_r,
                         self.a_hat_f, self.a_hat_r, self.k_hat_f,
                         self.k_hat_r], dtype=float)

    @staticmethod
    def from_array(y) -> "VehicleState":
        y = np.asarray(y, dtype=float)
        if y.shape != (STATE_DIM,):
            raise ValueError(f"expected state of length {STATE_DIM}")
        return VehicleState(*(float(x) for x in y))


@dataclass(frozen=True)
class ControlInput:
    delta: float = 0.0     # front steering angle [rad]
    T_tr_f: float = 0.0    # traction torques [N m], >= 0
    T_tr_r: float = 0.0
    T_br_f: float = 0.0    # braking torques [N m], <= 0
    T_br_r: float = 0.0

    def validate(self) -> None:
        if self.T_tr_f < 0 or self.T_tr_r < 0:
            raise InvalidParameterError("traction torques must be >= 0")
        if self.T_br_f > 0 or self.T_br_r > 0:
            raise InvalidParameterError("braking torques must be <= 0")
        if not abs(self.delta) < np.pi / 4:
            raise InvalidParameterError("|delta| must be below pi/4")

    @property
    def wheel_torque_f(self) -> float:
        return self.T_tr_f + self.T_br_f

    @property
    def wheel_torque_r(self) -> float:
        return self.T_tr_r + self.T_br_r


@dataclass(frozen=True)
class TireForces:
    F_xf: float
    F_xr: float
    F_yf: float
    F_yr: float
    F_zf: float
    F_zr: float


@dataclass(frozen=True)
class Measurement:
    """Sensor channels: specific forces, yaw rate, wheel speeds."""

    a_x: float
    a_y: float
    r: float
    w_f: float
    w_r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a_x, self.a_y, self.r, self.w_f, self.w_r],
                        dtype=float)


# ---------------------------------------------------------------------------
# parameter resolution


def resolve_params(constants: VehicleConstants, theta: IdentifiedParams,
                   stiffness_noise=None) -> EffectiveParams:
    """Resolve geometry and effective stiffnesses from the identified vector.

    stiffness_noise is a 4-vector (d_Ckf, d_Ckr, d_Caf, d_Car order) in the
    same 1e5-scaled units as the deviations; defaults to zero.

    Raises RejectedSampleError if any effective stiffness is non-positive
    (the caller is expected to resample).
    """
    eff, ok = _resolve_params_masked(constants, theta, stiffness_noise)
    if not np.all(ok):
        raise RejectedSampleError("non-positive effective stiffness")
    return eff


def _resolve_params_masked(constants, theta, stiffness_noise=None):
    """Vector-friendly resolution; returns (EffectiveParams, valid_mask).

    theta may be an IdentifiedParams or an array of shape (..., 6) in
    PARAM_NAMES order.
    """
    if hasattr(theta, "l_f"):
        l_f = np.asarray(theta.l_f, dtype=float)
        h_cog = np.asarray(theta.h_cog, dtype=float)
        devs = (np.asarray(theta.d_Ckf, dtype=float),
                np.asarray(theta.d_Ckr, dtype=float),
                np.asarray(theta.d_Caf, dtype=float),
                np.asarray(theta.d_Car, dtype=float))
    else:
        arr = np.asarray(theta, dtype=float)
        l_f, h_cog = arr[..., 0], arr[..., 1]
        devs = (arr[..., 2], arr[..., 3], arr[..., 4], arr[..., 5])
    if stiffness_noise is None:
        noise = (0.0, 0.0, 0.0, 0.0)
    else:
        sn = np.asarray(stiffness_noise, dtype=float)
        noise = (sn[..., 0], sn[..., 1], sn[..., 2], sn[..., 3])

    if np.any(l_f <= 0) or np.any(l_f >= constants.L):
        raise InvalidParameterError("l_f must lie strictly inside (0, L)")
    if np.any(h_cog <= 0):
        raise InvalidParameterError("h_cog must be strictly positive")

    l_r = constants.L - l_f
    I_z = constants.m * l_f * l_r
    C_kf = constants.C_kappa_nom_f + STIFFNESS_SCALE * (devs[0] + noise[0])
    C_kr = constants.C_kappa_nom_r + STIFFNESS_SCALE * (devs[1] + noise[1])
    C_af = constants.C_alpha_nom_f + STIFFNESS_SCALE * (devs[2] + noise[2])
    C_ar = constants.C_alpha_nom_r + STIFFNESS_SCALE * (devs[3] + noise[3])
    ok = (C_kf > 0) & (C_kr > 0) & (C_af > 0) & (C_ar > 0)
    sigma_l = C_af / constants.K_lat
    F_zf_static = constants.m * constants.g * l_r / constants.L
    F_zr_static = constants.m * constants.g * l_f / constants.L
    eff = EffectiveParams(l_f=l_f, l_r=l_r, h_cog=h_cog, I_z=I_z,
                          C_kf=C_kf, C_kr=C_kr, C_af=C_af, C_ar=C_ar,
                          sigma_l=sigma_l, F_zf_static=F_zf_static,
                          F_zr_static=F_zr_static)
    return eff, ok


# ---------------------------------------------------------------------------
# slip kinematics


def slip_angles(state: VehicleState, inp: ControlInput, eff: EffectiveParams):
    """Front/rear tire slip angles from contact-patch velocities."""
    V_x = np.asarray(state.V_x, dtype=float)
    if np.any(V_x <= 0):
        raise InvalidStateError("V_x must be strictly positive")
    v_yf = state.V_y + eff.l_f * state.r
    v_yr = state.V_y - eff.l_r * state.r
    alpha_f = -np.arctan(v_yf / V_x) + inp.delta
    alpha_r = -np.arctan(v_yr / V_x)
    return alpha_f, alpha_r


def wheel_frame_velocities(state: VehicleState, inp: ControlInput,
                           eff: EffectiveParams):
    """Longitudinal contact-patch velocities projected into each wheel frame.

    The front wheel frame is rotated by the steering angle; the rear wheel
    is unsteered so its longitudinal velocity equals V_x.
    """
    v_yf = state.V_y + eff.l_f * state.r
    V_wxf = state.V_x * np.cos(inp.delta) + v_yf * np.sin(inp.delta)
    V_wxr = np.asarray(state.V_x, dtype=float) + 0.0
    return V_wxf, V_wxr


def longitudinal_slips(state: VehicleState, inp: ControlInput,
                       eff: EffectiveParams, R_eff_f, R_eff_r):
    """Longitudinal slips from rolling vs ground speed, clipped to [-1, 1]."""
    V_wxf, V_wxr = wheel_frame_velocities(state, inp, eff)
    kappa_f, den_f = _slip_ratio(np.asarray(R_eff_f, dtype=float) * state.w_f, V_wxf)
    kappa_r, den_r = _slip_ratio(np.asarray(R_eff_r, dtype=float) * state.w_r, V_wxr)
    if np.any(den_f <= 0) or np.any(den_r <= 0):
        raise InvalidStateError("both rolling and ground speed non-positive")
    return kappa_f, kappa_r


def _slip_ratio(rolling, ground):
    """kappa = (R w - V) / max(R w, V); requires a positive denominator."""
    den = np.maximum(rolling, ground)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (rolling - ground) / den
    return np.clip(kappa, -1.0, 1.0), den


def effective_radius(F_z, constants: VehicleConstants):
    """Effective rolling radius: 2/3 free + 1/3 loaded radius.

    The loaded radius is the free radius minus the vertical deflection
    F_z / C_vert.
    """
    F_z = np.asarray(F_z, dtype=float)
    if np.any(F_z < 0):
        raise InvalidStateError("F_z must be non-negative")
    R_l = constants.R_f - F_z / constants.C_vert
    if np.any(R_l <= 0):
        raise InvalidParameterError("loaded radius must stay positive")
    return (2.0 / 3.0) * constants.R_f + R_l / 3.0


def axle_loads(eff: EffectiveParams, constants: VehicleConstants, a_x_prev):
    """Vertical axle loads with longitudinal load transfer m*a_x*h/L."""
    dF = constants.m * np.asarray(a_x_prev, dtype=float) * eff.h_cog / constants.L
    F_zf = eff.F_zf_static - dF
    F_zr = eff.F_zr_static + dF
    if np.any(F_zf <= 0) or np.any(F_zr <= 0):
        raise InvalidStateError("axle load driven non-positive by acceleration")
    return F_zf, F_zr


# ---------------------------------------------------------------------------
# tire forces


def _dugoff_saturation(force_norm, F_z, one_plus_kappa, mu):
    """Friction saturation factor f(lambda) of the Dugoff model.

    force_norm is sqrt((C_k kappa)^2 + (C_a tan alpha)^2); at zero slip the
    factor is irrelevant (forces vanish) and is set to 1.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(force_norm > 0,
                       mu * F_z * one_plus_kappa / (2.0 * force_norm),
                       np.inf)
    return np.where(lam < 1.0, (2.0 - lam) * lam, 1.0)


def dugoff_forces(kappa, alpha, F_z, C_kappa, C_alpha, mu):
    """Longitudinal and lateral tire force of one axle.

    Forces saturate on the friction circle: sqrt(Fx^2 + Fy^2) <= mu F_z.
    """
    kappa = np.asarray(kappa, dtype=float)
    F_z = np.asarray(F_z, dtype=float)
    one_plus_kappa = 1.0 + kappa
    if np.any(one_plus_kappa <= 0):
        raise InvalidStateError("kappa must stay above -1")
    if np.any(F_z <= 0):
        raise InvalidStateError("F_z must be strictly positive")
    s_x = C_kappa * kappa
    s_y = C_alpha * np.tan(alpha)
    norm = np.sqrt(s_x * s_x + s_y * s_y)
    f = _dugoff_saturation(norm, F_z, one_plus_kappa, mu)
    F_x = s_x / one_plus_kappa * f
    F_y = s_y / one_plus_kappa * f
    return F_x, F_y


# ---------------------------------------------------------------------------
# full state derivative

_TWO_THIRDS = 2.0 / 3.0


def _derivative_core(y, delta, T_f, T_r, eff: EffectiveParams,
                     constants: VehicleConstants, a_x_prev):
    """Time derivative of the 9-state vector plus force/acceleration info.

    y has shape (..., 9); delta and the wheel torques T_f, T_r are scalars
    shared by all lanes (the excitation depends on time only). Tire forces
    are evaluated from the delayed slip states. The load-transfer loop
    (loads -> forces -> a_x -> loads) is contracted with two fixed passes
    seeded by a_x_prev; in the unsaturated friction regime the second pass
    is already exact because the forces do not depend on the loads there.

    Returns (dy, a_x, a_y, forces, valid). Lanes flagged invalid carry NaN
    derivatives.
    """
    V_x = y[..., IVX]
    V_y = y[..., IVY]
    r = y[..., IR]
    w_f = y[..., IWF]
    w_r = y[..., IWR]
    ah_f = y[..., IAHF]
    ah_r = y[..., IAHR]
    kh_f = y[..., IKHF]
    kh_r = y[..., IKHR]

    m = constants.m
    mu = constants.mu
    cos_d = np.cos(delta)
    sin_d = np.sin(delta)

    valid = (V_x > 0) & np.all(np.isfinite(y), axis=-1)

    with np.errstate(all="ignore"):
        # instantaneous slip angles and wheel-frame velocities
        v_yf = V_y + eff.l_f * r
        v_yr = V_y - eff.l_r * r
        alpha_f = -np.arctan(v_yf / V_x) + delta
        alpha_r = -np.arctan(v_yr / V_x)
        V_wxf = V_x * cos_d + v_yf * sin_d
        V_wxr = V_x

        # force ingredients from the delayed slips (independent of loads)
        opk_f = 1.0 + kh_f
        opk_r = 1.0 + kh_r
        valid &= (opk_f > 0) & (opk_r > 0)
        sx_f = eff.C_kf * kh_f
        sy_f = eff.C_af * np.tan(ah_f)
        sx_r = eff.C_kr * kh_r
        sy_r = eff.C_ar * np.tan(ah_r)
        norm_f = np.sqrt(sx_f * sx_f + sy_f * sy_f)
        norm_r = np.sqrt(sx_r * sx_r + sy_r * sy_r)

        # two-pass load transfer resolution
        a_x = np.asarray(a_x_prev, dtype=float)
        load_gain = m * eff.h_cog / constants.L
        for _ in range(2):
            dF = load_gain * a_x
            F_zf = eff.F_zf_static - dF
            F_zr = eff.F_zr_static + dF
            f_f = _dugoff_saturation(norm_f, F_zf, opk_f, mu)
            f_r = _dugoff_saturation(norm_r, F_zr, opk_r, mu)
            F_xf = sx_f / opk_f * f_f
            F_yf = sy_f / opk_f * f_f
            F_xr = sx_r / opk_r * f_r
            F_yr = sy_r / opk_r * f_r
            a_x = (F_xf * cos_d - F_yf * sin_d + F_xr) / m

        valid &= (F_zf > 0) & (F_zr > 0)

        # effective rolling radii at the current loads
        R_l_f = constants.R_f - F_zf / constants.C_vert
        R_l_r = constants.R_f - F_zr / constants.C_vert
        valid &= (R_l_f > 0) & (R_l_r > 0)
        R_eff_f = _TWO_THIRDS * constants.R_f + R_l_f / 3.0
        R_eff_r = _TWO_THIRDS * constants.R_f + R_l_r / 3.0

        # instantaneous longitudinal slips feeding the lag states
        roll_f = R_eff_f * w_f
        roll_r = R_eff_r * w_r
        kappa_f, den_f = _slip_ratio(roll_f, V_wxf)
        kappa_r, den_r = _slip_ratio(roll_r, V_wxr)
        valid &= (den_f > 0) & (den_r > 0)

        a_y = (F_xf * sin_d + F_yf * cos_d + F_yr) / m

        lag = V_x / eff.sigma_l
        dy = np.empty_like(y)
        dy[..., IVX] = a_x + V_y * r
        dy[..., IVY] = a_y - V_x * r
        dy[..., IR] = (eff.l_f * (F_xf * sin_d + F_yf * cos_d)
                       - eff.l_r * F_yr) / eff.I_z
        dy[..., IWF] = (T_f - F_xf * R_eff_f) / constants.I_w
        dy[..., IWR] = (T_r - F_xr * R_eff_r) / constants.I_w
        dy[..., IAHF] = lag * (alpha_f - ah_f)
        dy[..., IAHR] = lag * (alpha_r - ah_r)
        dy[..., IKHF] = lag * (kappa_f - kh_f)
        dy[..., IKHR] = lag * (kappa_r - kh_r)

    if not np.all(valid):
        bad = ~valid
        dy[bad] = np.nan
        a_x = np.where(valid, a_x, np.nan)
        a_y = np.where(valid, a_y, np.nan)

    forces = TireForces(F_xf=F_xf, F_xr=F_xr, F_yf=F_yf, F_yr=F_yr,
                        F_zf=F_zf, F_zr=F_zr)
    return dy, a_x, a_y, forces, valid


def state_derivative(state: VehicleState, inp: ControlInput,
                     eff: EffectiveParams, constants: VehicleConstants,
                     a_x_prev: float = 0.0) -> np.ndarray:
    """9-vector of state time-derivatives at one state and input."""
    y = state.as_array()
    dy, _, _, _, valid = _derivative_core(
        y, inp.delta, inp.wheel_torque_f, inp.wheel_torque_r,
        eff, constants, a_x_prev)
    if not np.all(valid):
        raise InvalidStateError("state outside model domain")
    return dy


def measurement_of(state: VehicleState, inp: ControlInput,
                   forces: TireForces, constants: VehicleConstants) -> Measurement:
    """Noise-free sensor channels from the current state and tire forces.

    The accelerations are the body-frame specific forces (force sums over
    mass), which is what an accelerometer reports; the V*r coupling terms
    of the velocity derivatives are excluded.
    """
    cos_d = np.cos(inp.delta)
    sin_d = np.sin(inp.delta)
    a_x = (forces.F_xf * cos_d - forces.F_yf * sin_d + forces.F_xr) / constants.m
    a_y = (forces.F_xf * sin_d + forces.F_yf * cos_d + forces.F_yr) / constants.m
    return Measurement(a_x=a_x, a_y=a_y, r=state.r, w_f=state.w_f, w_r=state.w_r)


def sideslip_angle(state: VehicleState):
    """Diagnostic body sideslip at the COG, atan(V_y / V_x)."""
    V_x = np.asarray(state.V_x, dtype=float)
    if np.any(V_x <= 0):
        raise InvalidStateError("V_x must be strictly positive")
    return np.arctan(state.V_y / V_x)
