"""megsim: deterministic simulator for split generative workflows over
simulated edge networks.

Eleven workflows (two on-device/centralized baselines, four single-server
splits, five multi-server splits) run as declarative message-flow plans over a
linear toy generation pipeline, AWGN channels, and a FIFO discrete-event
kernel, with full communication-overhead, latency, and distortion accounting.
"""

from .channel import (
    ChannelConfigError,
    ChannelSpec,
    effective_snr_db,
    noise_variance,
    transmission_time,
    transmit_analog,
    transmit_digital,
)
from .content import (
    MULTI_ES_PROTOCOLS,
    PROTOCOL_IDS,
    SINGLE_ES_PROTOCOLS,
    ContentGrid,
    GenRequest,
    LatentSeed,
    PayloadSpec,
    SketchGrid,
    TextPrompt,
    payload_bits,
    write_pgm,
)
from .engine import DeviceSpec, Event, EventQueue, SimJob, WorkModel, compute_time, run_jobs
from .executor import Transcript, execute_plan
from .metrics import (
    OverheadRecord,
    OverheadSizes,
    QualityRecord,
    aggregate_trials,
    expected_overhead,
    quality,
    reduction_factor,
)
from .pipeline import (
    PartialContent,
    Pipeline,
    PipelineParams,
    build_pipeline,
    complete,
    decode,
    generate,
    infer,
    merge_partials,
    partial_generate,
    partial_sketch,
    sketch,
    split_seed,
    stitch_tiles,
)
from .protocols import (
    PlanContext,
    ProtocolPlan,
    ProtocolStep,
    build_plan,
    select_output,
    validate_plan,
)
from .runner import RunReport, make_request, run_scenario, sweep_scenario
from .scenario import ScenarioConfig, ScenarioError, load_scenario

__version__ = "0.1.0"
