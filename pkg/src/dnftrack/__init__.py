"""Event-driven fixed-point LIF simulation of dynamic neural fields for
attention and tracking on event-camera input."""
from .core import (NetworkDef, NetworkError, NetworkState, NeuronParams, RunResult, Simulator,
                   SpikeLog, Synapse, Synapses, UnknownSourceError, poisson_spikes, run, step)
from .events import EventFormatError, EventStream, bin_events, inject, parse_events, read_events
from .models import (CueSpec, Dnf1dConfig, InputBump, TrackerConfig, build_dnf_1d,
                     build_tracker, dump_config, load_config)
from .readout import (NoEstimate, Trajectory, extract_trajectory, population_vector,
                      trajectory_error, upsample_trajectory)
from .synth import SyntheticSceneSpec, gen_synthetic_events, ground_truth

__version__ = "0.1.0"
