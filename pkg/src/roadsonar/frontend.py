"""Recording to energyscape: PDM decode, matched filter, delay-and-sum, envelope, cleanup."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .beamform import (
    CFAR_GUARD,
    CFAR_MIN_FLOOR,
    CFAR_TRAIN,
    DirectionList,
    build_energyscape,
    cfar_cleanup,
    default_geometry,
    steering_offset,
)
from .signal import BASEBAND_RATE, ChirpSpec, generate_chirp, matched_filter, pdm_decode


@dataclass
class CfarParams:
    guard: int = CFAR_GUARD
    train: int = CFAR_TRAIN
    min_floor: float = CFAR_MIN_FLOOR


@dataclass
class FrontEnd:
    """Fixed processing chain shared by ``process`` and the experiments."""

    geometry: object = field(default_factory=lambda: default_geometry(0))
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    cfar: CfarParams = field(default_factory=CfarParams)
    directions: DirectionList = field(default_factory=DirectionList)
    cleanup: bool = True

    def __post_init__(self):
        self._template = generate_chirp(self.chirp)
        fs = self.chirp.sample_rate
        self._max_lead = max(
            int(np.floor(steering_offset(self.geometry, d) * fs + 0.5)) for d in self.directions
        )

    def baseband(self, frame):
        return pdm_decode(frame, self.chirp.sample_rate)

    def __call__(self, frame):
        """PDM frame -> energyscape (rows in :class:`DirectionList` order)."""
        filtered = matched_filter(self.baseband(frame), self._template)
        scape = build_energyscape(filtered, self.directions, self.geometry)
        # the last template-length columns hold partial correlations only
        # (plus the beam advance); blank them so cleanup cannot blow them up
        tail = filtered.n_samples - self._template.n_samples + 1 - self._max_lead
        scape.values[:, max(tail, 0) :] = 0.0
        if self.cleanup:
            scape = cfar_cleanup(scape, self.cfar.guard, self.cfar.train, self.cfar.min_floor)
        return scape


def process_recording(frame, geometry=None, chirp=None, cfar=None, cleanup=True):
    fe = FrontEnd(
        geometry if geometry is not None else default_geometry(0),
        chirp if chirp is not None else ChirpSpec(sample_rate=BASEBAND_RATE),
        cfar if cfar is not None else CfarParams(),
        cleanup=cleanup,
    )
    return fe(frame)


class SonarFrontEnd(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping PDM frames to an ``(n, rows, cols)`` float32 stack."""

    def __init__(self, geometry_seed=0, cfar_guard=CFAR_GUARD, cfar_train=CFAR_TRAIN, cleanup=True):
        self.geometry_seed = geometry_seed
        self.cfar_guard = cfar_guard
        self.cfar_train = cfar_train
        self.cleanup = cleanup

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        fe = FrontEnd(
            default_geometry(self.geometry_seed),
            cfar=CfarParams(self.cfar_guard, self.cfar_train),
            cleanup=self.cleanup,
        )
        return np.stack([fe(f).values.astype(np.float32) for f in X])
