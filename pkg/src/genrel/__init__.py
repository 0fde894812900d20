"""Association-measure reliability coefficients for a simulated 3PL IRT model."""

__version__ = "0.1.0"

from .assoc import (
    BATTERY,
    ReliabilityEstimate,
    ScoreSet,
    codec_t,
    coefficient_w,
    ksg_mutual_information,
    r_squared,
    schweizer_wolff_sigma,
    squared_correlation,
    table1_battery,
)
from .bench import BenchmarkResult, rae, rrmse
from .experiment import AggregateTable, ExperimentConfig, ReplicationResult, run_replication, run_sweep
from .model import (
    Item,
    ItemBank,
    LatentSpec,
    MonteCarloSample,
    QuadratureGrid,
    draw_item_bank,
    eap_scores,
    percentile_ranks,
    response_probability,
    sample_latents,
    simulate_responses,
)
from .smoother import SmootherConfig, fit_predict
