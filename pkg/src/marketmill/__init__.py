"""Market-mill conditional dynamics: simulation of intraday price increments and
analysis of the asymmetry patterns of their push-response distribution."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConfigError,
    DelayParams,
    IncrementSeries,
    LaplaceParams,
    MillConfig,
    composite_config,
    elementary_config,
    laplace_pdf,
    sample_delay,
    sample_laplace,
    series_rng,
)
from .kernel import (  # noqa: E402
    StrategyMix,
    StrategyMode,
    conditional_density_oracle,
    f_mill,
    sample_asym,
    sample_mill,
    sample_mode,
    sector_of,
)
from .simulator import (  # noqa: E402
    SimBatch,
    scale_specs,
    simulate_batch,
    simulate_composite,
    simulate_elementary,
    simulate_noise,
)
from .analysis import (  # noqa: E402
    AsymmetryAxis,
    BivariateHistogram,
    MillnessReport,
    PairSet,
    aggregate,
    asymmetric_component,
    conditional_mean_response,
    make_pairs,
    millness,
    millness_report,
)
