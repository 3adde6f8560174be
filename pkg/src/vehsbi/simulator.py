"""Fixed-step integration of the vehicle model under the excitation profile.

The simulator is the likelihood-free black box of the pipeline: given a
parameter vector and a seeded random stream it produces a 5 s, 200 Hz,
5-channel noisy measurement record. Batches of trajectories are integrated
lane-parallel through identical numpy expressions, so a batch element is
bit-identical to the same (theta, seed) simulated alone, independent of
batch composition or thread count.

Integration is classical RK4. The steering command is evaluated at the
stage times; the gas/brake square wave is latched once per substep at the
substep midpoint, which represents the piecewise-constant command exactly
whenever its switch instants land on substep boundaries (true for the
default 5 s period and millisecond substeps).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .excitation import (ExcitationProfile, NoiseSpec, _draw_stiffness_noise,
                         _initial_state_at, _noisy_channels, input_at)
from .rng import RngStream
from .vehicle import (STATE_DIM, ControlInput, EffectiveParams, IdentifiedParams,
                      InvalidStateError, Measurement, TireForces,
                      VehicleConstants, VehicleState, _derivative_core,
                      _resolve_params_masked, measurement_of)

__all__ = [
    "SimConfig", "TrajectoryRecord", "rk4_step", "integrate_step",
    "simulate", "simulate_batch", "write_trajectory", "read_trajectory",
    "CHANNEL_NAMES",
]

CHANNEL_NAMES = ("a_x", "a_y", "r", "w_f", "w_r")

# batches are processed in fixed-size chunks so that results do not depend
# on how many trajectories are requested at once or on the thread count
_CHUNK = 2048


@dataclass(frozen=True)
class SimConfig:
    sample_rate: int = 200            # [Hz]
    duration: float = 5.0             # [s]
    substeps_per_sample: int = 5      # internal dt = 1 / (rate * substeps)
    constants: VehicleConstants = field(default_factory=VehicleConstants)
    profile: ExcitationProfile = field(default_factory=ExcitationProfile)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        n = self.sample_rate * self.duration
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise ValueError("sample_rate * duration must be an integer >= 2")
        if self.substeps_per_sample < 1:
            raise ValueError("substeps_per_sample must be >= 1")
        self.constants.validate()
        self.profile.validate()
        self.noise.validate()

    @property
    def n_samples(self) -> int:
        return round(self.sample_rate * self.duration)

    @property
    def dt(self) -> float:
        return 1.0 / (self.sample_rate * self.substeps_per_sample)


@dataclass
class TrajectoryRecord:
    """One simulated measurement record.

    channels has shape (n_samples, 5) in CHANNEL_NAMES order. valid is False
    iff the integration aborted (V_x <= 0, load <= 0 or non-finite state);
    aborted lanes carry NaN from abort_sample onward.
    """

    t: np.ndarray
    channels: np.ndarray
    theta_used: IdentifiedParams
    seed: RngStream
    valid: bool
    abort_sample: int | None = None

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]


# ---------------------------------------------------------------------------
# stepping


def rk4_step(f, y, t: float, dt: float):
    """One classical 4th-order Runge-Kutta step of dy/dt = f(t, y)."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _stage_controls(control, t: float, dt: float):
    """Steering at the three stage times plus the latched wheel torques."""
    if callable(control):
        u_mid = control(t + 0.5 * dt)
        d0 = control(t).delta
        d_mid = u_mid.delta
        d1 = control(t + dt).delta
        return d0, d_mid, d1, u_mid.wheel_torque_f, u_mid.wheel_torque_r
    d = control.delta
    return d, d, d, control.wheel_torque_f, control.wheel_torque_r


def _rk4_vehicle(y, t, dt, control, eff, constants, a_x_prev):
    """RK4 step of the vehicle state array; returns (y_next, a_x_new).

    All load-transfer passes within the step are seeded with a_x_prev; the
    returned a_x_new is the resolved longitudinal specific force at the
    final stage, seeding the next substep.
    """
    d0, d_mid, d1, T_f, T_r = _stage_controls(control, t, dt)
    k1, _, _, _, _ = _derivative_core(y, d0, T_f, T_r, eff, constants, a_x_prev)
    k2, _, _, _, _ = _derivative_core(y + (0.5 * dt) * k1, d_mid, T_f, T_r,
                                      eff, constants, a_x_prev)
    k3, _, _, _, _ = _derivative_core(y + (0.5 * dt) * k2, d_mid, T_f, T_r,
                                      eff, constants, a_x_prev)
    k4, a_x_new, _, _, _ = _derivative_core(y + dt * k3, d1, T_f, T_r,
                                            eff, constants, a_x_prev)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y_next, a_x_new


def integrate_step(state: VehicleState, t: float, dt: float, control,
                   eff: EffectiveParams, constants: VehicleConstants,
                   a_x_prev: float = 0.0):
    """Advance one vehicle by a single RK4 substep.

    control is either a fixed ControlInput or a callable t -> ControlInput
    (stage-time steering evaluation, midpoint-latched torques).

    Raises InvalidStateError if any stage leaves the model domain.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    y_next, a_x_new = _rk4_vehicle(state.as_array(), t, dt, control, eff,
                                   constants, a_x_prev)
    if not np.all(np.isfinite(y_next)):
        raise InvalidStateError("integration step left the model domain")
    return VehicleState.from_array(y_next), float(a_x_new)


# ---------------------------------------------------------------------------
# trajectory simulation


def simulate(theta: IdentifiedParams, rng: RngStream,
             config: SimConfig) -> TrajectoryRecord:
    """Simulate one noisy measurement record; deterministic in (theta, rng).

    Draw order on the trajectory's stream: initial speed, stiffness noise
    (component pick + Gaussian per channel), then the measurement noise
    matrix after integration.
    """
    return _simulate_chunk(np.asarray([theta.as_array()]), [rng], config)[0]


def simulate_batch(thetas, seeds, config: SimConfig,
                   threads: int = 1) -> list:
    """Simulate a batch; element i is identical to simulate(thetas[i], seeds[i]).

    Work is split into fixed-size chunks; chunks may run on a thread pool.
    Results are assembled in input order.
    """
    if len(thetas) != len(seeds):
        raise ValueError("thetas and seeds must have equal length")
    theta_arr = np.asarray([th.as_array() if hasattr(th, "as_array") else th
                            for th in thetas], dtype=float)
    n = theta_arr.shape[0]
    if n == 0:
        return []
    chunks = [(theta_arr[i:i + _CHUNK], list(seeds[i:i + _CHUNK]))
              for i in range(0, n, _CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _simulate_chunk(c[0], c[1], config),
                                  chunks))
    else:
        parts = [_simulate_chunk(ta, ss, config) for ta, ss in chunks]
    out = []
    for p in parts:
        out.extend(p)
    return out


def _simulate_chunk(theta_arr: np.ndarray, seeds: list,
                    config: SimConfig) -> list:
    config.validate()
    constants = config.constants
    profile = config.profile
    noise = config.noise
    n = theta_arr.shape[0]
    n_samples = config.n_samples
    S = config.substeps_per_sample
    n_steps_total = (n_samples - 1) * S
    inv_dt_den = float(config.sample_rate * S)

    gens = [s.generator() for s in seeds]
    v0 = np.array([g.uniform(noise.v0_range[0], noise.v0_range[1])
                   for g in gens])
    stiff_noise = np.stack([_draw_stiffness_noise(g, noise) for g in gens])

    eff, ok = _resolve_params_masked(constants, theta_arr, stiff_noise)

    with np.errstate(all="ignore"):
        R_l_f = constants.R_f - eff.F_zf_static / constants.C_vert
        R_l_r = constants.R_f - eff.F_zr_static / constants.C_vert
        ok = ok & (R_l_f > 0) & (R_l_r > 0)
        R_eff_f0 = (2.0 / 3.0) * constants.R_f + R_l_f / 3.0
        R_eff_r0 = (2.0 / 3.0) * constants.R_f + R_l_r / 3.0

        y = np.zeros((n, STATE_DIM))
        y[:, 0] = v0
        y[:, 3] = v0 / R_eff_f0
        y[:, 4] = v0 / R_eff_r0
        y[~ok] = np.nan

        a_x_prev = np.zeros(n)
        alive = ok.copy()
        abort_sample = np.where(ok, n_samples, 0)

        t_grid = np.arange(n_samples) / float(config.sample_rate)
        clean = np.empty((n, n_samples, 5))

        step = 0
        for k in range(n_samples):
            t_k = t_grid[k]
            u_k = input_at(t_k, profile)
            _, m_ax, m_ay, _, _ = _derivative_core(
                y, u_k.delta, u_k.wheel_torque_f, u_k.wheel_torque_r,
                eff, constants, a_x_prev)
            clean[:, k, 0] = m_ax
            clean[:, k, 1] = m_ay
            clean[:, k, 2] = y[:, 2]
            clean[:, k, 3] = y[:, 3]
            clean[:, k, 4] = y[:, 4]
            if k == n_samples - 1:
                break
            for _ss in range(S):
                t0 = step / inv_dt_den
                dt = 1.0 / inv_dt_den
                y, a_x_prev = _rk4_vehicle(
                    y, t0, dt, lambda s: input_at(s, profile),
                    eff, constants, a_x_prev)
                step += 1
            finite = np.isfinite(y).all(axis=1) & (y[:, 0] > 0)
            died = alive & ~finite
            if np.any(died):
                abort_sample[died] = k + 1
                alive[died] = False
                y[died] = np.nan
                a_x_prev = np.where(alive, a_x_prev, np.nan)

    records = []
    for i in range(n):
        noisy = _noisy_channels(gens[i], clean[i], noise)
        ab = int(abort_sample[i])
        if ab < n_samples:
            noisy[ab:] = np.nan
        records.append(TrajectoryRecord(
            t=t_grid.copy(), channels=noisy,
            theta_used=IdentifiedParams.from_array(theta_arr[i]),
            seed=seeds[i], valid=bool(alive[i]),
            abort_sample=None if alive[i] else ab))
    return records


# ---------------------------------------------------------------------------
# clean scalar integration (high-resolution reference runs)


def integrate_clean(theta: IdentifiedParams, v0: float, config: SimConfig,
                    dt: float, record_interval: float):
    """Noise-free trajectory integrated with plain Python floats.

    Mirrors the lane-parallel integrator formula for formula, but without
    the array machinery, so very small steps (reference solutions for
    convergence studies) stay affordable. Returns (times, states) with
    states of shape (n_records, 9), recorded every record_interval seconds
    starting at t = 0.

    duration/dt and record_interval/dt must be integers.
    """
    constants = config.constants
    profile = config.profile
    n_steps = round(config.duration / dt)
    if abs(n_steps * dt - config.duration) > 1e-9 * config.duration:
        raise ValueError("duration must be an integer multiple of dt")
    rec_every = round(record_interval / dt)
    if rec_every < 1 or abs(rec_every * dt - record_interval) > 1e-12:
        raise ValueError("record_interval must be an integer multiple of dt")

    eff, ok = _resolve_params_masked(constants, theta)
    if not np.all(ok):
        raise InvalidStateError("inadmissible parameters")
    e = _ScalarEff(
        l_f=float(eff.l_f), l_r=float(eff.l_r), h_cog=float(eff.h_cog),
        I_z=float(eff.I_z), C_kf=float(eff.C_kf), C_kr=float(eff.C_kr),
        C_af=float(eff.C_af), C_ar=float(eff.C_ar),
        sigma_l=float(eff.sigma_l), F_zf_static=float(eff.F_zf_static),
        F_zr_static=float(eff.F_zr_static))

    R_l_f = constants.R_f - e.F_zf_static / constants.C_vert
    R_l_r = constants.R_f - e.F_zr_static / constants.C_vert
    y = [v0, 0.0, 0.0,
         v0 / (2.0 / 3.0 * constants.R_f + R_l_f / 3.0),
         v0 / (2.0 / 3.0 * constants.R_f + R_l_r / 3.0),
         0.0, 0.0, 0.0, 0.0]

    times = [0.0]
    states = [list(y)]
    a_x_prev = 0.0
    inv_n = float(n_steps)
    for m in range(n_steps):
        t0 = config.duration * (m / inv_n)
        t_mid = config.duration * ((m + 0.5) / inv_n)
        t1 = config.duration * ((m + 1) / inv_n)
        u0 = input_at(t0, profile)
        u_mid = input_at(t_mid, profile)
        u1 = input_at(t1, profile)
        T_f = u_mid.wheel_torque_f
        T_r = u_mid.wheel_torque_r
        k1, _ = _derivative_scalar(y, u0.delta, T_f, T_r, e, constants, a_x_prev)
        y2 = [y[j] + 0.5 * dt * k1[j] for j in range(9)]
        k2, _ = _derivative_scalar(y2, u_mid.delta, T_f, T_r, e, constants, a_x_prev)
        y3 = [y[j] + 0.5 * dt * k2[j] for j in range(9)]
        k3, _ = _derivative_scalar(y3, u_mid.delta, T_f, T_r, e, constants, a_x_prev)
        y4 = [y[j] + dt * k3[j] for j in range(9)]
        k4, a_x_new = _derivative_scalar(y4, u1.delta, T_f, T_r, e, constants, a_x_prev)
        y = [y[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
             for j in range(9)]
        a_x_prev = a_x_new
        if (m + 1) % rec_every == 0:
            times.append(t1)
            states.append(list(y))
    return np.asarray(times), np.asarray(states)


@dataclass(frozen=True)
class _ScalarEff:
    l_f: float
    l_r: float
    h_cog: float
    I_z: float
    C_kf: float
    C_kr: float
    C_af: float
    C_ar: float
    sigma_l: float
    F_zf_static: float
    F_zr_static: float


def _dugoff_f_scalar(norm, F_z, opk, mu):
    if norm <= 0.0:
        return 1.0
    lam = mu * F_z * opk / (2.0 * norm)
    return (2.0 - lam) * lam if lam < 1.0 else 1.0


def _derivative_scalar(y, delta, T_f, T_r, e: _ScalarEff,
                       c: VehicleConstants, a_x_prev):
    """Python-float mirror of the lane-parallel derivative core."""
    V_x, V_y, r, w_f, w_r, ah_f, ah_r, kh_f, kh_r = y
    if V_x <= 0.0:
        raise InvalidStateError("V_x must be strictly positive")
    cos_d = math.cos(delta)
    sin_d = math.sin(delta)

    v_yf = V_y + e.l_f * r
    v_yr = V_y - e.l_r * r
    alpha_f = -math.atan(v_yf / V_x) + delta
    alpha_r = -math.atan(v_yr / V_x)
    V_wxf = V_x * cos_d + v_yf * sin_d
    V_wxr = V_x

    opk_f = 1.0 + kh_f
    opk_r = 1.0 + kh_r
    if opk_f <= 0.0 or opk_r <= 0.0:
        raise InvalidStateError("delayed slip reached -1")
    sx_f = e.C_kf * kh_f
    sy_f = e.C_af * math.tan(ah_f)
    sx_r = e.C_kr * kh_r
    sy_r = e.C_ar * math.tan(ah_r)
    norm_f = math.sqrt(sx_f * sx_f + sy_f * sy_f)
    norm_r = math.sqrt(sx_r * sx_r + sy_r * sy_r)

    a_x = a_x_prev
    load_gain = c.m * e.h_cog / c.L
    for _ in range(2):
        dF = load_gain * a_x
        F_zf = e.F_zf_static - dF
        F_zr = e.F_zr_static + dF
        f_f = _dugoff_f_scalar(norm_f, F_zf, opk_f, c.mu)
        f_r = _dugoff_f_scalar(norm_r, F_zr, opk_r, c.mu)
        F_xf = sx_f / opk_f * f_f
        F_yf = sy_f / opk_f * f_f
        F_xr = sx_r / opk_r * f_r
        F_yr = sy_r / opk_r * f_r
        a_x = (F_xf * cos_d - F_yf * sin_d + F_xr) / c.m
    if F_zf <= 0.0 or F_zr <= 0.0:
        raise InvalidStateError("axle load non-positive")

    R_l_f = c.R_f - F_zf / c.C_vert
    R_l_r = c.R_f - F_zr / c.C_vert
    if R_l_f <= 0.0 or R_l_r <= 0.0:
        raise InvalidStateError("loaded radius non-positive")
    R_eff_f = 2.0 / 3.0 * c.R_f + R_l_f / 3.0
    R_eff_r = 2.0 / 3.0 * c.R_f + R_l_r / 3.0

    roll_f = R_eff_f * w_f
    roll_r = R_eff_r * w_r
    den_f = max(roll_f, V_wxf)
    den_r = max(roll_r, V_wxr)
    if den_f <= 0.0 or den_r <= 0.0:
        raise InvalidStateError("both rolling and ground speed non-positive")
    kappa_f = min(1.0, max(-1.0, (roll_f - V_wxf) / den_f))
    kappa_r = min(1.0, max(-1.0, (roll_r - V_wxr) / den_r))

    a_y = (F_xf * sin_d + F_yf * cos_d + F_yr) / c.m
    lag = V_x / e.sigma_l
    dy = (
        a_x + V_y * r,
        a_y - V_x * r,
        (e.l_f * (F_xf * sin_d + F_yf * cos_d) - e.l_r * F_yr) / e.I_z,
        (T_f - F_xf * R_eff_f) / c.I_w,
        (T_r - F_xr * R_eff_r) / c.I_w,
        lag * (alpha_f - ah_f),
        lag * (alpha_r - ah_r),
        lag * (kappa_f - kh_f),
        lag * (kappa_r - kh_r),
    )
    return dy, a_x


# ---------------------------------------------------------------------------
# trajectory files


def write_trajectory(record: TrajectoryRecord, path, config_hash: str = "") -> None:
    """Write the record as CSV plus a JSON metadata sidecar (.meta.json)."""
    path = Path(path)
    lines = ["t," + ",".join(CHANNEL_NAMES)]
    for k in range(record.n_samples):
        row = [repr(float(record.t[k]))]
        row += [repr(float(v)) for v in record.channels[k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "schema": "vehsbi-trajectory-v1",
        "theta_used": {k: getattr(record.theta_used, k)
                       for k in ("l_f", "h_cog", "d_Ckf", "d_Ckr", "d_Caf", "d_Car")},
        "seed": {"seed": record.seed.seed, "stream_id": record.seed.stream_id},
        "valid": record.valid,
        "abort_sample": record.abort_sample,
        "config_hash": config_hash,
    }
    _meta_path(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def read_trajectory(path) -> TrajectoryRecord:
    path = Path(path)
    raw = path.read_text().strip().split("\n")
    header = raw[0].split(",")
    if header != ["t", *CHANNEL_NAMES]:
        raise ValueError(f"unexpected trajectory header: {header}")
    data = np.array([[float(v) for v in line.split(",")] for line in raw[1:]])
    meta_file = _meta_path(path)
    theta = IdentifiedParams(1.3, 0.5, 0.0, 0.0, 0.0, 0.0)
    seed = RngStream(0, 0)
    valid = True
    abort = None
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
        theta = IdentifiedParams(**meta["theta_used"])
        seed = RngStream(**meta["seed"])
        valid = bool(meta["valid"])
        abort = meta.get("abort_sample")
    return TrajectoryRecord(t=data[:, 0], channels=data[:, 1:],
                            theta_used=theta, seed=seed, valid=valid,
                            abort_sample=abort)
