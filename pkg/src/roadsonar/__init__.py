"""In-air 3D sonar road-surface classification: signal chain, simulator, features, models, evaluation."""

from ._validation import DegenerateInputError, ParameterError
from .beamform import (
    ArrayGeometry,
    Direction,
    DirectionList,
    Energyscape,
    build_energyscape,
    cfar_cleanup,
    default_geometry,
    delay_and_sum,
    steering_delays,
)
from .evaluation import (
    FoldPlan,
    MetricsReport,
    cohens_kappa_weighted,
    f1_weighted,
    filter_rare_classes,
    split_dataset,
    stratification_key,
    sync_join,
    youden_thresholds,
)
from .features import ImagePipeline, VectorPipeline
from .frontend import FrontEnd, SonarFrontEnd
from .signal import (
    ChirpSpec,
    PdmFrame,
    Waveform,
    envelope,
    generate_chirp,
    matched_filter,
    pdm_decode,
    pdm_encode,
)
from .simulate import DatasetSpec, make_scene, render_echoes, synth_dataset

__version__ = "0.1.0"
