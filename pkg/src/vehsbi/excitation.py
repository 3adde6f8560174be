"""Excitation inputs and stochastic elements of the simulator.

The control excitation is a sinusoidal steering command plus a square-wave
gas/brake torque command. Process noise enters as a per-run draw on the
stiffness parameters from a ten-component Gaussian mixture; measurement
noise is zero-mean Gaussian with a standard deviation proportional to the
clean channel value; the initial speed is randomized uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .vehicle import ControlInput, Measurement, VehicleConstants, VehicleState, STIFFNESS_SCALE

__all__ = [
    "ExcitationProfile", "NoiseSpec", "input_at", "sample_stiffness_noise",
    "add_measurement_noise", "sample_initial_state", "sample_noise_spec",
    "BRAKE_SPLIT_FRONT",
]

# front-wheel drive: all traction on the front axle; braking split 60/40
BRAKE_SPLIT_FRONT = 0.6

N_MIXTURE_COMPONENTS = 10
MIXTURE_FRACTION_CAP = 0.05  # component means/stds bounded by 5% of nominal


@dataclass(frozen=True)
class ExcitationProfile:
    steer_amplitude: float = 0.04   # [rad]
    steer_period: float = 4.0       # [s]
    torque_amplitude: float = 250.0  # [N m]
    torque_period: float = 5.0      # [s]
    duration: float = 5.0           # [s]

    def validate(self) -> None:
        for name in ("steer_period", "torque_period", "duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        # zero amplitudes are allowed (no-input equilibrium runs)
        if self.steer_amplitude < 0 or self.torque_amplitude < 0:
            raise ValueError("amplitudes must be non-negative")


def _zero_components() -> np.ndarray:
    return np.zeros((4, N_MIXTURE_COMPONENTS))


@dataclass(frozen=True)
class NoiseSpec:
    """All stochastic settings of one experiment.

    mixture_means/stds have shape (4, 10): one row per stiffness channel in
    (d_Ckf, d_Ckr, d_Caf, d_Car) order, expressed in the 1e5-scaled deviation
    units. Rows of zeros give a noise-free channel.
    """

    mixture_means: np.ndarray = field(default_factory=_zero_components)
    mixture_stds: np.ndarray = field(default_factory=_zero_components)
    meas_rel_std_rotational: float = 0.05
    meas_rel_std_accel: float = 0.10
    v0_range: tuple = (10.0, 11.0)

    def validate(self) -> None:
        means = np.asarray(self.mixture_means, dtype=float)
        stds = np.asarray(self.mixture_stds, dtype=float)
        if means.shape != (4, N_MIXTURE_COMPONENTS) or stds.shape != (4, N_MIXTURE_COMPONENTS):
            raise ValueError("mixture arrays must have shape (4, 10)")
        if np.any(stds < 0):
            raise ValueError("mixture stds must be non-negative")
        if self.meas_rel_std_rotational < 0 or self.meas_rel_std_accel < 0:
            raise ValueError("measurement noise fractions must be non-negative")
        lo, hi = self.v0_range
        if not (0 < lo <= hi):
            raise ValueError("v0_range must satisfy 0 < lo <= hi")

    @staticmethod
    def noise_free(v0: float = 10.5) -> "NoiseSpec":
        return NoiseSpec(meas_rel_std_rotational=0.0, meas_rel_std_accel=0.0,
                         v0_range=(v0, v0))


def sample_noise_spec(rng: RngStream, constants: VehicleConstants,
                      meas_rel_std_rotational: float = 0.05,
                      meas_rel_std_accel: float = 0.10,
                      v0_range=(10.0, 11.0),
                      fraction_cap: float = MIXTURE_FRACTION_CAP) -> NoiseSpec:
    """Draw the experiment's mixture components once, then keep them fixed.

    Component means are uniform in +-cap*nominal and stds uniform in
    (0, cap*nominal], per stiffness channel, in scaled deviation units.
    """
    gen = rng.generator()
    nominals = np.array([constants.C_kappa_nom_f, constants.C_kappa_nom_r,
                         constants.C_alpha_nom_f, constants.C_alpha_nom_r])
    caps = fraction_cap * nominals / STIFFNESS_SCALE
    means = gen.uniform(-1.0, 1.0, size=(4, N_MIXTURE_COMPONENTS)) * caps[:, None]
    u = gen.uniform(0.0, 1.0, size=(4, N_MIXTURE_COMPONENTS))
    stds = (1.0 - u) * caps[:, None]  # uniform on (0, cap]
    spec = NoiseSpec(mixture_means=means, mixture_stds=stds,
                     meas_rel_std_rotational=meas_rel_std_rotational,
                     meas_rel_std_accel=meas_rel_std_accel,
                     v0_range=tuple(v0_range))
    spec.validate()
    return spec


def input_at(t: float, profile: ExcitationProfile) -> ControlInput:
    """Control command at time t.

    Steering is a sinusoid; the gas/brake command is a square wave spending
    the first half of each period in traction (front axle only) and the
    second half braking (split 60/40 front/rear). The phase intervals are
    half-open, so the switch instant itself belongs to the new phase.
    """
    delta = profile.steer_amplitude * math.sin(2.0 * math.pi * t / profile.steer_period)
    phase = t % profile.torque_period
    if phase < 0.5 * profile.torque_period:
        return ControlInput(delta=delta, T_tr_f=profile.torque_amplitude)
    amp = profile.torque_amplitude
    return ControlInput(delta=delta,
                        T_br_f=-BRAKE_SPLIT_FRONT * amp,
                        T_br_r=-(1.0 - BRAKE_SPLIT_FRONT) * amp)


def sample_stiffness_noise(rng: RngStream, spec: NoiseSpec) -> np.ndarray:
    """One 4-vector draw of stiffness process noise (scaled deviation units).

    Per channel: pick one of the ten mixture components uniformly, then draw
    a Gaussian with that component's mean and std. Drawn once per simulated
    trajectory.
    """
    gen = rng.generator()
    return _draw_stiffness_noise(gen, spec)


def _draw_stiffness_noise(gen: np.random.Generator, spec: NoiseSpec) -> np.ndarray:
    means = np.asarray(spec.mixture_means, dtype=float)
    stds = np.asarray(spec.mixture_stds, dtype=float)
    out = np.empty(4)
    for c in range(4):
        j = int(gen.integers(N_MIXTURE_COMPONENTS))
        out[c] = gen.normal(means[c, j], stds[c, j])
    return out


# channel order (a_x, a_y, r, w_f, w_r): accelerations then rotational rates
def _rel_noise_fractions(spec: NoiseSpec) -> np.ndarray:
    return np.array([spec.meas_rel_std_accel, spec.meas_rel_std_accel,
                     spec.meas_rel_std_rotational, spec.meas_rel_std_rotational,
                     spec.meas_rel_std_rotational])


def add_measurement_noise(rng: RngStream, clean: Measurement,
                          spec: NoiseSpec) -> Measurement:
    """Zero-mean Gaussian noise with std proportional to each clean value."""
    gen = rng.generator()
    noisy = _noisy_channels(gen, clean.as_array()[None, :], spec)[0]
    return Measurement(*(float(v) for v in noisy))


def _noisy_channels(gen: np.random.Generator, clean: np.ndarray,
                    spec: NoiseSpec) -> np.ndarray:
    """Apply relative measurement noise to a (n_samples, 5) channel matrix."""
    z = gen.standard_normal(clean.shape)
    return clean + _rel_noise_fractions(spec) * np.abs(clean) * z


def sample_initial_state(rng: RngStream, spec: NoiseSpec, R_eff) -> VehicleState:
    """Rolling-equilibrium initial state with randomized forward speed.

    R_eff may be a scalar or a (front, rear) pair of effective radii; wheel
    speeds are set to V_x / R_eff so the vehicle starts slip-free.
    """
    gen = rng.generator()
    lo, hi = spec.v0_range
    v0 = float(gen.uniform(lo, hi))
    return _initial_state_at(v0, R_eff)


def _initial_state_at(v0: float, R_eff) -> VehicleState:
    R = np.broadcast_to(np.asarray(R_eff, dtype=float), (2,))
    return VehicleState(V_x=v0, V_y=0.0, r=0.0,
                        w_f=v0 / float(R[0]), w_r=v0 / float(R[1]))
