"""Vehicle COG and tire-stiffness identification by simulation-based inference.

A numpy library with six layers: the single-track Dugoff vehicle model
(`vehicle`), excitation and noise (`excitation`), the seeded trajectory
simulator (`simulator`), sufficient statistics (`summaries`), the sequential
mixture-density inference engine with a rejection-ABC baseline (`inference`,
`mdn`), Fisher-information observability (`observability`) and posterior
reporting (`analysis`). The `vehsbi` command drives the full pipeline.
"""

__version__ = "0.1.0"

from .vehicle import (IdentifiedParams, VehicleConstants, VehicleState,
                      ControlInput, Measurement)
from .excitation import ExcitationProfile, NoiseSpec, input_at
from .rng import RngStream, substream
from .simulator import SimConfig, TrajectoryRecord, simulate, simulate_batch
from .summaries import SummaryVector, Normalizer, summarize, fit_normalizer, normalize
from .inference import (PriorBox, TrainConfig, PosteriorSamples,
                        default_prior_box, run_snpe, rejection_abc,
                        posterior_sample)
from .observability import FisherReport, fisher_matrix
from .analysis import posterior_table, pairplot_export
