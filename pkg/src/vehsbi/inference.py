"""Likelihood-free posterior estimation.

A uniform box prior, a conditional mixture-density estimator trained over
sequential simulation rounds, prior-truncated posterior sampling, and a
rejection-ABC baseline. Round one trains by plain conditional maximum
likelihood; later rounds, whose parameters come from the current posterior
instead of the prior, train with the atomic contrastive objective: each
datum's parameter competes against K-1 contrast parameters drawn from the
same batch, and the loss is the negative log share of the true pair's
density among the candidates. For a uniform prior the prior/proposal
ratios of the objective cancel inside the box, which is asserted.

All stochastic stages draw from named substreams of one master seed, so a
full run is reproducible end to end.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .mdn import (Adam, MdnEnsemble, MdnModel, ensemble_from_val_losses,
                  ensemble_log_prob, ensemble_sample, init_mdn, log_prob,
                  loss_and_grad, sample_mixture)
from .rng import RngStream, substream
from .simulator import SimConfig, TrajectoryRecord, simulate_batch
from .summaries import SUMMARY_LENGTH, Normalizer, summarize
from .vehicle import PARAM_NAMES, IdentifiedParams

__all__ = [
    "PriorBox", "TrainConfig", "PosteriorSamples", "SbiProblem",
    "TrainingDivergedError", "LeakageError",
    "default_prior_box", "prior_sample", "prior_logpdf", "mdn_logpdf",
    "mdn_gradient", "atomic_loss", "train_round", "posterior_sample",
    "sequential_posterior", "run_snpe", "rejection_abc", "vehicle_problem",
    "write_samples", "read_samples",
]

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


class TrainingDivergedError(RuntimeError):
    """Non-finite loss or density during training."""


class LeakageError(RuntimeError):
    """Pathologically low acceptance when truncating the posterior to the prior box."""


def _master_seed(rng: RngStream) -> int:
    return (rng.seed ^ ((rng.stream_id * _GOLDEN) & _MASK64)) & _MASK64


@dataclass(frozen=True)
class PriorBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower/upper must be equal-length vectors")
        if not np.all(self.lower < self.upper):
            raise ValueError("lower bounds must be strictly below upper bounds")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.widths)))

    def contains(self, theta) -> np.ndarray:
        t = np.atleast_2d(np.asarray(theta, dtype=float))
        return np.all((t >= self.lower) & (t <= self.upper), axis=1)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return gen.uniform(self.lower, self.upper, size=(n, self.dim))


def default_prior_box() -> PriorBox:
    return PriorBox(lower=[1.0, 0.2, -0.2, -0.2, -0.3, -0.3],
                    upper=[1.5, 0.6, 0.5, 0.5, 0.3, 0.3])


def prior_sample(rng: RngStream, box: PriorBox) -> IdentifiedParams:
    gen = rng.generator()
    return IdentifiedParams.from_array(box.sample(gen, 1)[0])


def prior_logpdf(theta, box: PriorBox):
    """Uniform log-density: -log(volume) inside the box, -inf outside."""
    t = np.asarray(theta.as_array() if hasattr(theta, "as_array") else theta,
                   dtype=float)
    single = t.ndim == 1
    inside = box.contains(t)
    out = np.where(inside, -box.log_volume, -np.inf)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 5
    sims_per_round: int = 5000
    atoms: int = 10
    batch_size: int = 256
    epochs: int = 100
    learning_rate: float = 1e-3
    patience: int = 20
    val_fraction: float = 0.1
    pilot_sims: int = 1000
    hidden: tuple = (50, 50)
    components: int = 8
    ensemble_size: int = 3
    posterior_draws: int = 1000
    min_acceptance: float = 1e-3
    max_proposals: int = 1_000_000

    def validate(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        for name in ("sims_per_round", "atoms", "batch_size", "epochs",
                     "patience", "pilot_sims", "components", "posterior_draws",
                     "ensemble_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.atoms > self.batch_size:
            raise ValueError("atoms must not exceed the batch size")
        if not 0 < self.val_fraction <= 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class PosteriorSamples:
    samples: np.ndarray      # (n, dim)
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class SbiProblem:
    """A simulator exposed to the inference loop.

    simulate(theta_matrix (n, dim), streams list[RngStream]) must return
    (raw_summaries (n, summary_dim), valid (n,) bool). Invalid rows are
    resampled by the loop.
    """

    box: PriorBox
    summary_dim: int
    simulate: object


# ---------------------------------------------------------------------------
# density-network wrappers in physical parameter units


def mdn_logpdf(model, theta, x) -> float:
    """log q(theta | x) in physical units for a single pair; accepts a
    single network or an ensemble."""
    t = theta.as_array() if hasattr(theta, "as_array") else np.asarray(theta, float)
    if isinstance(model, MdnEnsemble):
        return float(ensemble_log_prob(model, t[None, :], np.atleast_2d(x))[0])
    return float(log_prob(model, t[None, :], np.atleast_2d(x))[0])


def _sample_density(model, x, n, gen):
    if isinstance(model, MdnEnsemble):
        return ensemble_sample(model, x, n, gen)
    return sample_mixture(model, x, n, gen)


def _contrast_indices(gen: np.random.Generator, B: int, K: int) -> np.ndarray:
    """Atom index matrix (B, K): column 0 is each row itself, the rest a
    uniform random (K-1)-subset of the other rows."""
    idx = np.empty((B, K), dtype=int)
    idx[:, 0] = np.arange(B)
    if K > 1:
        scores = gen.random((B, B))
        np.fill_diagonal(scores, np.inf)
        idx[:, 1:] = np.argpartition(scores, K - 1, axis=1)[:, :K - 1]
    return idx


def _atoms_from_indices(U: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return U[idx]  # (B, K, D)


def mdn_gradient(model: MdnModel, thetas, xs, loss: str = "nll",
                 atom_indices=None) -> np.ndarray:
    """Exact gradient of the chosen loss w.r.t. the flat weights."""
    thetas = np.atleast_2d(np.asarray(thetas, float))
    U = model.to_unit(thetas)
    if atom_indices is None:
        Uk = U[:, None, :]
    else:
        Uk = _atoms_from_indices(U, np.asarray(atom_indices))
    _, grad = loss_and_grad(model, np.atleast_2d(xs), Uk, mode=loss)
    return grad


def atomic_loss(model: MdnModel, thetas, xs, atoms: int, rng: RngStream,
                box: PriorBox) -> float:
    """Contrastive round objective over a batch; prior ratios cancel for the
    uniform box prior, which requires every parameter to lie inside it."""
    thetas = np.atleast_2d(np.asarray(thetas, float))
    if not np.all(box.contains(thetas)):
        raise ValueError("atomic loss requires parameters inside the prior box")
    B = thetas.shape[0]
    if atoms > B:
        raise ValueError("atom count exceeds batch size")
    gen = rng.generator()
    idx = _contrast_indices(gen, B, atoms)
    U = model.to_unit(thetas)
    loss, _ = loss_and_grad(model, np.atleast_2d(xs), _atoms_from_indices(U, idx),
                            mode="atomic")
    return loss


# ---------------------------------------------------------------------------
# training


def train_round(model: MdnModel, thetas: np.ndarray, xs: np.ndarray,
                config: TrainConfig, round_index: int, rng: RngStream,
                val_pool=None):
    """One training round; returns (best-validation model, report dict).

    Round one uses the plain negative log-likelihood (parameters came from
    the prior); later rounds use the atomic objective. Training stops early
    once the validation loss has not improved for `patience` epochs.

    val_pool optionally restricts which rows the validation split may come
    from (the sequential loop passes the newest round's rows, so model
    selection scores the region the round is meant to improve rather than
    the stale broad data).
    """
    config.validate()
    thetas = np.asarray(thetas, float)
    xs = np.asarray(xs, float)
    N = thetas.shape[0]
    if N < 4:
        raise ValueError("dataset too small to train")
    mode = "nll" if round_index <= 1 else "atomic"
    K = 1 if mode == "nll" else config.atoms

    gen = rng.generator()
    if val_pool is None:
        val_pool = np.arange(N)
    else:
        val_pool = np.asarray(val_pool, int)
    perm = val_pool[gen.permutation(val_pool.size)]
    n_val = max(1, min(int(round(config.val_fraction * N)), val_pool.size // 2))
    val_idx = perm[:n_val]
    in_val = np.zeros(N, dtype=bool)
    in_val[val_idx] = True
    train_idx = np.flatnonzero(~in_val)
    n_train = train_idx.size
    if n_train < K:
        raise ValueError("training split smaller than the atom count")

    U_all = model.to_unit(thetas)
    X_val = xs[val_idx]
    U_val = U_all[val_idx]
    if mode == "atomic":
        # several fixed contrast assignments; averaging them makes the
        # validation loss a much less noisy model-selection signal
        k_val = min(K, n_val)
        val_sets = [_atoms_from_indices(U_val, _contrast_indices(gen, n_val, k_val))
                    for _ in range(4)]
    else:
        val_sets = [U_val[:, None, :]]

    params = model.params.copy()
    adam = Adam(params.size, lr=config.learning_rate)
    ema = np.zeros_like(params)
    ema_decay = 0.99
    ema_steps = 0
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    since_best = 0
    min_epochs = min(config.patience, config.epochs // 4)
    train_losses, val_losses = [], []

    for epoch in range(1, config.epochs + 1):
        # cosine step-size decay: the contrast atoms are redrawn each epoch,
        # so the objective is stochastic and a constant step keeps the
        # weights bouncing at the noise floor
        frac = (epoch - 1) / max(1, config.epochs - 1)
        adam.lr = config.learning_rate * (0.02 + 0.98 * 0.5 *
                                          (1.0 + np.cos(np.pi * frac)))
        order = gen.permutation(n_train)
        epoch_losses = []
        for start in range(0, n_train, config.batch_size):
            bidx = train_idx[order[start:start + config.batch_size]]
            if bidx.size < K:
                continue
            Ub = U_all[bidx]
            if mode == "atomic":
                idx = _contrast_indices(gen, bidx.size, K)
                Uk = _atoms_from_indices(Ub, idx)
            else:
                Uk = Ub[:, None, :]
            cur = replace(model, params=params)
            loss, grad = loss_and_grad(cur, xs[bidx], Uk, mode=mode)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(
                    f"non-finite loss/gradient in round {round_index}, epoch {epoch}")
            params = adam.step(params, grad)
            ema = ema_decay * ema + (1.0 - ema_decay) * params
            ema_steps += 1
            epoch_losses.append(loss)
        train_losses.append(float(np.mean(epoch_losses)))

        # candidate weights are the bias-corrected running average of the
        # optimizer trajectory, which has far lower variance than its
        # endpoint while tracking it closely
        ema_hat = ema / (1.0 - ema_decay ** ema_steps)
        cur = replace(model, params=ema_hat)
        val_loss = float(np.mean([loss_and_grad(cur, X_val, Uv, mode=mode)[0]
                                  for Uv in val_sets]))
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(
                f"non-finite validation loss in round {round_index}")
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = ema_hat.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if epoch >= min_epochs and since_best >= config.patience:
                break
    report = {"mode": mode, "epochs_run": len(val_losses),
              "best_epoch": best_epoch, "best_val_loss": best_val,
              "train_losses": train_losses, "val_losses": val_losses}
    return replace(model, params=best_params), report


# ---------------------------------------------------------------------------
# posterior sampling with prior truncation

_SAMPLE_CHUNK = 4096


class _TruncatedMixtureSampler:
    """Streams draws from q(theta | x_obs) restricted to the prior box.

    Draws are generated in fixed-size chunks from one generator, so the
    sequence of accepted samples does not depend on how callers batch
    their requests.
    """

    def __init__(self, model: MdnModel, x_obs: np.ndarray, rng: RngStream,
                 box: PriorBox, min_acceptance: float = 1e-3,
                 max_proposals: int = 1_000_000):
        self.model = model
        self.x_obs = x_obs
        self.gen = rng.generator()
        self.box = box
        self.min_acceptance = min_acceptance
        self.max_proposals = max_proposals
        self.proposals = 0
        self.accepted = 0
        self._buf = np.empty((0, box.dim))

    def draw(self, m: int) -> np.ndarray:
        while self._buf.shape[0] < m:
            draws = _sample_density(self.model, self.x_obs, _SAMPLE_CHUNK, self.gen)
            self.proposals += _SAMPLE_CHUNK
            keep = draws[self.box.contains(draws)]
            self.accepted += keep.shape[0]
            if keep.size:
                self._buf = np.concatenate([self._buf, keep])
            if (self.proposals >= self.max_proposals
                    and self.accepted < self.min_acceptance * self.proposals):
                raise LeakageError(
                    f"acceptance {self.accepted}/{self.proposals} below "
                    f"{self.min_acceptance:.1e}")
        out = self._buf[:m]
        self._buf = self._buf[m:]
        return out

    @property
    def leakage(self) -> float:
        if self.proposals == 0:
            return 0.0
        return 1.0 - self.accepted / self.proposals


def posterior_sample(model, x_obs: np.ndarray, n: int,
                     rng: RngStream, box: PriorBox,
                     min_acceptance: float = 1e-3,
                     max_proposals: int = 1_000_000) -> PosteriorSamples:
    """Draw n posterior samples, rejecting draws outside the prior box."""
    sampler = _TruncatedMixtureSampler(model, x_obs, rng, box,
                                       min_acceptance, max_proposals)
    samples = sampler.draw(n)
    return PosteriorSamples(samples=samples,
                            provenance={"proposals": sampler.proposals,
                                        "leakage": round(sampler.leakage, 6),
                                        "seed": rng.seed,
                                        "stream_id": rng.stream_id})


# ---------------------------------------------------------------------------
# the sequential loop


def _znorm(vals: np.ndarray, norm: Normalizer) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norm.std > 0, (vals - norm.mean) / norm.std, 0.0)


def _collect_simulations(problem: SbiProblem, sampler, n: int, seed: int,
                         stage: str, round_index: int):
    """Run the simulator until n valid rows exist; invalid draws are
    replaced by fresh parameter draws on fresh substreams."""
    thetas_out, vals_out = [], []
    element = 0
    got = 0
    attempts = 0
    while got < n:
        m = n - got
        thetas = np.atleast_2d(sampler(m))
        streams = [substream(seed, stage, round_index, element + i)
                   for i in range(m)]
        element += m
        vals, valid = problem.simulate(thetas, streams)
        valid = np.asarray(valid, bool)
        attempts += m
        if np.any(valid):
            thetas_out.append(thetas[valid])
            vals_out.append(np.asarray(vals)[valid])
            got += int(valid.sum())
        if attempts > 20 * n + 100:
            raise RuntimeError(
                f"simulator invalid rate pathologically high in stage {stage}")
    thetas = np.concatenate(thetas_out)[:n]
    vals = np.concatenate(vals_out)[:n]
    return thetas, vals, attempts - n


def sequential_posterior(problem: SbiProblem, raw_obs: np.ndarray,
                         config: TrainConfig, rng: RngStream):
    """Sequentially trained posterior for one observation.

    Pilot-normalizes the summaries, then alternates simulation rounds and
    training: round one simulates at prior draws, later rounds at draws
    from the current posterior conditioned on the observation. Training
    uses all simulations accumulated so far (the pilot pairs included,
    since they are prior-predictive draws obtained anyway). An ensemble of
    independently initialized networks is trained each round and combined
    with validation-loss weights; the proposal and the returned posterior
    are the ensemble mixture. Returns (model, PosteriorSamples,
    round reports, Normalizer).
    """
    config.validate()
    seed = _master_seed(rng)
    box = problem.box
    raw_obs = np.asarray(raw_obs, float)

    pilot_gen = substream(seed, "pilot_theta").generator()
    pilot_thetas, pilot_vals, pilot_invalid = _collect_simulations(
        problem, lambda m: box.sample(pilot_gen, m), config.pilot_sims,
        seed, "pilot_sim", 0)
    norm = Normalizer(mean=pilot_vals.mean(axis=0),
                      std=pilot_vals.std(axis=0, ddof=1),
                      pilot_count=config.pilot_sims)
    x_obs = _znorm(raw_obs, norm)

    members = [init_mdn(substream(seed, "init", 0, e).generator(),
                        n_in=problem.summary_dim, hidden=tuple(config.hidden),
                        n_components=config.components, dim=box.dim,
                        theta_shift=box.lower, theta_scale=box.widths)
               for e in range(config.ensemble_size)]
    model = None

    all_thetas = pilot_thetas
    all_xs = _znorm(pilot_vals, norm)
    reports = [{"round": 0, "stage": "pilot", "n_sims": config.pilot_sims,
                "n_invalid": pilot_invalid}]

    for rnd in range(1, config.rounds + 1):
        stream = substream(seed, "round_theta", rnd)
        proposal = None
        if rnd == 1:
            theta_gen = stream.generator()
            sampler = lambda m: box.sample(theta_gen, m)
        else:
            proposal = _TruncatedMixtureSampler(
                model, x_obs, stream, box,
                min_acceptance=config.min_acceptance,
                max_proposals=config.max_proposals)
            sampler = proposal.draw

        thetas_r, vals_r, n_invalid = _collect_simulations(
            problem, sampler, config.sims_per_round, seed, "round_sim", rnd)
        xs_r = _znorm(vals_r, norm)
        n_before = all_thetas.shape[0]
        all_thetas = np.concatenate([all_thetas, thetas_r])
        all_xs = np.concatenate([all_xs, xs_r])
        val_pool = np.arange(n_before, all_thetas.shape[0])

        member_reports = []
        val_losses = []
        for e in range(len(members)):
            members[e], trep = train_round(
                members[e], all_thetas, all_xs, config, rnd,
                substream(seed, "train", rnd, e), val_pool=val_pool)
            member_reports.append(trep)
            val_losses.append(trep["best_val_loss"])
        n_val = max(1, min(int(round(config.val_fraction * all_thetas.shape[0])),
                           val_pool.size // 2))
        model = ensemble_from_val_losses(members, val_losses, n_val)

        rep = {"round": rnd, "stage": "train", "n_sims": thetas_r.shape[0],
               "n_invalid": n_invalid, "dataset_size": all_thetas.shape[0],
               "ensemble_weights": [round(float(w), 4)
                                    for w in np.exp(model.log_weights)],
               "members": member_reports}
        if proposal is not None:
            rep["proposal_leakage"] = round(proposal.leakage, 6)
        reports.append(rep)

    final = posterior_sample(model, x_obs, config.posterior_draws,
                             substream(seed, "posterior"), box,
                             min_acceptance=config.min_acceptance,
                             max_proposals=config.max_proposals)
    final.provenance["rounds"] = config.rounds
    final.provenance["observation_hash"] = hashlib.sha256(
        np.ascontiguousarray(raw_obs).tobytes()).hexdigest()
    return model, final, reports, norm


# ---------------------------------------------------------------------------
# vehicle adapter and entry points


def vehicle_problem(sim_config: SimConfig, box: PriorBox,
                    threads: int = 1) -> SbiProblem:
    def sim(theta_matrix, streams):
        recs = simulate_batch(theta_matrix, streams, sim_config, threads=threads)
        n = len(recs)
        vals = np.full((n, SUMMARY_LENGTH), np.nan)
        valid = np.zeros(n, dtype=bool)
        for i, rec in enumerate(recs):
            if rec.valid:
                s = summarize(rec)
                if np.all(np.isfinite(s.values)):
                    vals[i] = s.values
                    valid[i] = True
        return vals, valid

    return SbiProblem(box=box, summary_dim=SUMMARY_LENGTH, simulate=sim)


def run_snpe(observation: TrajectoryRecord, config: TrainConfig,
             sim_config: SimConfig, rng: RngStream, box: PriorBox = None,
             threads: int = 1):
    """Full sequential inference on one observed vehicle trajectory.

    Returns (model, PosteriorSamples, round reports, Normalizer).
    """
    if box is None:
        box = default_prior_box()
    raw_obs = summarize(observation).values
    problem = vehicle_problem(sim_config, box, threads=threads)
    return sequential_posterior(problem, raw_obs, config, rng)


def rejection_abc(observation: TrajectoryRecord, n_sims: int,
                  accept_fraction: float, rng: RngStream,
                  sim_config: SimConfig, box: PriorBox = None,
                  normalizer: Normalizer = None, pilot_sims: int = 1000,
                  threads: int = 1) -> PosteriorSamples:
    """Rejection ABC baseline: keep the prior draws whose simulated summaries
    fall closest (Euclidean, in normalized coordinates) to the observation."""
    if not 0 < accept_fraction <= 1:
        raise ValueError("accept_fraction must lie in (0, 1]")
    n_keep = int(round(n_sims * accept_fraction))
    if n_keep < 100:
        raise ValueError("n_sims * accept_fraction must be at least 100")
    if box is None:
        box = default_prior_box()
    seed = _master_seed(rng)
    problem = vehicle_problem(sim_config, box, threads=threads)

    if normalizer is None:
        pgen = substream(seed, "pilot_theta").generator()
        _, pvals, _ = _collect_simulations(
            problem, lambda m: box.sample(pgen, m), pilot_sims, seed,
            "pilot_sim", 0)
        normalizer = Normalizer(mean=pvals.mean(axis=0),
                                std=pvals.std(axis=0, ddof=1),
                                pilot_count=pilot_sims)
    x_obs = _znorm(summarize(observation).values, normalizer)

    tgen = substream(seed, "round_theta").generator()
    thetas, vals, n_invalid = _collect_simulations(
        problem, lambda m: box.sample(tgen, m), n_sims, seed, "abc_sim", 0)
    xs = _znorm(vals, normalizer)
    dist = np.sqrt(np.sum((xs - x_obs) ** 2, axis=1))
    order = np.argsort(dist, kind="stable")[:n_keep]
    eps = float(dist[order[-1]])
    return PosteriorSamples(
        samples=thetas[order],
        provenance={"method": "rejection_abc", "n_sims": n_sims,
                    "accept_fraction": accept_fraction, "epsilon": eps,
                    "n_invalid": n_invalid, "seed": rng.seed,
                    "stream_id": rng.stream_id})


# ---------------------------------------------------------------------------
# samples files


def write_samples(ps: PosteriorSamples, path, names=PARAM_NAMES) -> None:
    path = Path(path)
    lines = [",".join(names[:ps.samples.shape[1]])]
    for row in ps.samples:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    meta = {"schema": "vehsbi-samples-v1", "n": ps.n}
    meta.update({k: v for k, v in ps.provenance.items()})
    path.with_name(path.name + ".meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1) + "\n")


def read_samples(path) -> PosteriorSamples:
    path = Path(path)
    raw = path.read_text().strip().split("\n")
    data = np.array([[float(v) for v in line.split(",")] for line in raw[1:]])
    prov = {}
    meta_file = path.with_name(path.name + ".meta.json")
    if meta_file.exists():
        prov = json.loads(meta_file.read_text())
    return PosteriorSamples(samples=data, provenance=prov)
