"""Diffusive molecular-communication link with a porous spheroidal receiver.

Library layout:

- :mod:`spheromc.model`    porous-medium parameters (porosity, tortuosity,
  effective diffusion, boundary jump, first-order sink)
- :mod:`spheromc.specfun`  Legendre and complex spherical Bessel machinery
- :mod:`spheromc.analytic` series Green's function solver and time inversion
- :mod:`spheromc.pbs`      Brownian walker simulator (independent oracle)
- :mod:`spheromc.signal`   time-series observables and receiver metrics
- :mod:`spheromc.cli`      config-driven experiment driver (CSV artifacts)
"""

from .analytic import (
    AliasingError,
    FieldPoint,
    FrequencyGrid,
    ModeSolution,
    ModeSystemError,
    SeriesTruncationError,
    SpheroidCgf,
    TruncationPolicy,
    cgf_frequency,
    cgf_time,
    free_space_cgf,
    mode_coefficients,
    received_signal_analytic,
    wavenumbers,
)
from .model import (
    FirstOrderSink,
    MediumModel,
    SphericalCoord,
    SpheroidGeometry,
    boundary_jump,
    effective_diffusion,
    porosity,
    tortuosity,
)
from .pbs import (
    ParticleEnsemble,
    ProbeSpec,
    SimConfig,
    SimResult,
    estimate_concentration,
    run_simulation,
)
from .signal import (
    NoPeakError,
    PeakMetrics,
    ReceiverComparison,
    TimeSeries,
    compare_receivers,
    generation_rate,
    peak_metrics,
    received_total_E,
    smoothed,
    threshold_activation,
)

__version__ = "0.1.0"
