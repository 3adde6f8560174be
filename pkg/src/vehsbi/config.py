"""Experiment configuration: a strict, versioned JSON schema.

One file plus a master seed reproduces every pipeline stage byte for byte.
Unknown keys anywhere in the document are rejected so silent typos cannot
change an experiment. The stiffness-noise mixture is either given
explicitly or derived deterministically from the master seed ("auto").
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .excitation import ExcitationProfile, NoiseSpec, sample_noise_spec
from .inference import PriorBox, TrainConfig
from .rng import substream
from .simulator import SimConfig
from .vehicle import VehicleConstants

__all__ = ["ExperimentConfig", "ConfigError", "default_config_dict",
           "load_config", "dump_config", "config_hash"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def default_config_dict() -> dict:
    c = VehicleConstants()
    p = ExcitationProfile()
    t = TrainConfig()
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": 0,
        "out_dir": "out",
        "constants": {
            "m": c.m, "L": c.L, "g": c.g, "R_f": c.R_f, "C_vert": c.C_vert,
            "I_w": c.I_w, "mu": c.mu, "K_lat": c.K_lat,
            "C_kappa_nom_f": c.C_kappa_nom_f, "C_kappa_nom_r": c.C_kappa_nom_r,
            "C_alpha_nom_f": c.C_alpha_nom_f, "C_alpha_nom_r": c.C_alpha_nom_r,
        },
        "prior": {
            "lower": [1.0, 0.2, -0.2, -0.2, -0.3, -0.3],
            "upper": [1.5, 0.6, 0.5, 0.5, 0.3, 0.3],
        },
        "excitation": {
            "steer_amplitude": p.steer_amplitude, "steer_period": p.steer_period,
            "torque_amplitude": p.torque_amplitude, "torque_period": p.torque_period,
            "duration": p.duration,
        },
        "noise": {
            "mixture": "auto",
            "mixture_fraction_cap": 0.05,
            "meas_rel_std_rotational": 0.05,
            "meas_rel_std_accel": 0.10,
            "v0_range": [10.0, 11.0],
        },
        "sim": {"sample_rate": 200, "duration": 5.0, "substeps_per_sample": 5},
        "train": {
            "rounds": t.rounds, "sims_per_round": t.sims_per_round,
            "atoms": t.atoms, "batch_size": t.batch_size, "epochs": t.epochs,
            "learning_rate": t.learning_rate, "patience": t.patience,
            "val_fraction": t.val_fraction, "pilot_sims": t.pilot_sims,
            "hidden": [50, 50], "components": t.components,
            "posterior_draws": t.posterior_draws,
            "min_acceptance": t.min_acceptance,
            "max_proposals": t.max_proposals,
        },
        "fisher": {"n_sims": 300, "fd_fraction": 0.01},
    }


def _check_keys(doc: dict, allowed: dict, path: str = "") -> None:
    for key, val in doc.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(allowed[key], dict) and isinstance(val, dict):
            _check_keys(val, allowed[key], f"{path}{key}.")


@dataclass
class ExperimentConfig:
    seed: int
    out_dir: str
    constants: VehicleConstants
    prior: PriorBox
    profile: ExcitationProfile
    noise_doc: dict
    sim_doc: dict
    train: TrainConfig
    fisher_doc: dict
    raw: dict

    def noise_spec(self) -> NoiseSpec:
        nd = self.noise_doc
        if nd["mixture"] == "auto":
            return sample_noise_spec(
                substream(self.seed, "noise_setup"), self.constants,
                meas_rel_std_rotational=nd["meas_rel_std_rotational"],
                meas_rel_std_accel=nd["meas_rel_std_accel"],
                v0_range=tuple(nd["v0_range"]),
                fraction_cap=nd["mixture_fraction_cap"])
        mix = nd["mixture"]
        spec = NoiseSpec(
            mixture_means=np.asarray(mix["means"], float),
            mixture_stds=np.asarray(mix["stds"], float),
            meas_rel_std_rotational=nd["meas_rel_std_rotational"],
            meas_rel_std_accel=nd["meas_rel_std_accel"],
            v0_range=tuple(nd["v0_range"]))
        spec.validate()
        return spec

    def sim_config(self) -> SimConfig:
        cfg = SimConfig(sample_rate=int(self.sim_doc["sample_rate"]),
                        duration=float(self.sim_doc["duration"]),
                        substeps_per_sample=int(self.sim_doc["substeps_per_sample"]),
                        constants=self.constants, profile=self.profile,
                        noise=self.noise_spec())
        cfg.validate()
        return cfg

    def fd_steps(self) -> np.ndarray:
        return float(self.fisher_doc["fd_fraction"]) * self.prior.widths


def _build(doc: dict) -> ExperimentConfig:
    defaults = default_config_dict()
    _check_keys(doc, defaults)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version: {doc.get('schema_version')}")

    merged = json.loads(json.dumps(defaults))
    for key, val in doc.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key].update(val)
        else:
            merged[key] = val

    try:
        constants = VehicleConstants(**{k: float(v)
                                        for k, v in merged["constants"].items()})
        constants.validate()
        prior = PriorBox(lower=merged["prior"]["lower"],
                         upper=merged["prior"]["upper"])
        if prior.dim != 6:
            raise ConfigError("prior must be 6-dimensional")
        profile = ExcitationProfile(**{k: float(v)
                                       for k, v in merged["excitation"].items()})
        profile.validate()
        tdoc = dict(merged["train"])
        tdoc["hidden"] = tuple(int(h) for h in tdoc["hidden"])
        train = TrainConfig(**tdoc)
        train.validate()
        seed = int(merged["seed"])
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = ExperimentConfig(seed=seed, out_dir=str(merged["out_dir"]),
                               constants=constants, prior=prior, profile=profile,
                               noise_doc=merged["noise"], sim_doc=merged["sim"],
                               train=train, fisher_doc=merged["fisher"],
                               raw=merged)
        # force full validation of the nested settings now
        cfg.sim_config()
        if int(cfg.fisher_doc["n_sims"]) < 100:
            raise ConfigError("fisher.n_sims must be at least 100")
        return cfg
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path=None, seed_override=None, out_override=None) -> ExperimentConfig:
    doc = default_config_dict() if path is None else json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    if seed_override is not None:
        doc["seed"] = int(seed_override)
    if out_override is not None:
        doc["out_dir"] = str(out_override)
    return _build(doc)


def dump_config(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
