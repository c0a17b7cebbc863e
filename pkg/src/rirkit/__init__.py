"""Room impulse response measurement, simulation, analysis and augmentation."""

from .core import ImpulseResponse, Origin, Signal, circular_cross_correlate, convolve, resample
from .excitation import (EssSpec, MlsSpec, ess_inverse_filter, generate_ess, generate_irs,
                         generate_mls)
from .estimation import (DriftEstimate, compensate_drift, estimate_drift, estimate_rir_ess,
                         estimate_rir_mls)
from .ism import Directivity, MicSpec, RoomSpec, SourceSpec, sabine_beta_from_rt60, simulate_rir_ism
from .analysis import (DecayCurve, SegmentMap, a_weight, estimate_rt30, measure_snr,
                       schroeder_decay)
from .postprocess import compensate_delay, detect_onset, passivate
from .augmentation import (AugmentationPlan, MixParams, SwitchPolicy, build_plan, execute_plan,
                           mix_noise, reverberate, reverberate_switched)
from .chain import ChainSpec, exponential_rir, simulate_measurement
from .metadata import (Placement, RirRecord, cartesian_to_spherical, filter_rirs,
                       relative_to_speaker)

__version__ = "0.1.0"
