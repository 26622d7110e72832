"""Runs a protocol plan against a pipeline, channels, and devices.

Execution separates value flow from timing:

* Two value passes run the plan in step order. The reference pass delivers
  every transmission noise-free; the noisy pass pushes analog payloads through
  the AWGN channel. Selection under the oracle policy compares each noisy
  candidate against its own noise-free counterpart, and the reference output
  is then re-resolved with the selected index so it describes the same
  computation the user actually received, minus channel noise.
* A timing pass schedules the plan's jobs on the FIFO device/link resources;
  durations are value-independent (payload bits and work-model costs).

Image-like analog payloads (images, sketches) are transmitted with the
protocol-known mid-gray offset removed and restored at the receiver, so
channel power (and therefore noise) reflects the informative signal only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import ChannelSpec, transmission_time, transmit_analog
from .content import ContentGrid, GenRequest, LatentSeed, SketchGrid, TextPrompt
from .engine import DeviceSpec, SimJob, WorkModel, compute_time, run_jobs
from .pipeline import (
    PartialContent,
    Pipeline,
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
from .protocols import ProtocolPlan, ProtocolStep, select_output
from .streams import substream

GRID_OFFSET = 0.5


def link_name(src: str, dst: str) -> str:
    return f"link:{src}->{dst}"


def default_devices(es_count: int, ue_rate: float = 1e6, es_rate: float = 1e7):
    devices = {"UE": DeviceSpec(id="UE", device_class="UE", compute_rate=ue_rate)}
    for i in range(1, max(es_count, 1) + 1):
        devices[f"ES{i}"] = DeviceSpec(id=f"ES{i}", device_class="ES", compute_rate=es_rate)
    return devices


@dataclass
class StepRecord:
    index: int
    site: str
    action: str
    start: float
    end: float


@dataclass
class TransmitRecord:
    step_index: int
    src: str
    dst: tuple[str, ...]
    payload_kind: str
    bits: int
    symbol_count: int
    direction: str
    noisy: bool
    duration: float


@dataclass
class Transcript:
    """Full record of one executed request."""

    protocol_id: str
    request_id: str
    arrival_time: float
    completion_time: float
    steps: list[StepRecord]
    transmits: list[TransmitRecord]
    final_output: ContentGrid
    reference_output: ContentGrid
    selected_indices: dict[int, int]
    values: dict

    @property
    def response_time(self) -> float:
        return self.completion_time - self.arrival_time

    @property
    def uplink_bits(self) -> int:
        return sum(t.bits for t in self.transmits if t.direction == "uplink")

    @property
    def downlink_bits(self) -> int:
        return sum(t.bits for t in self.transmits if t.direction == "downlink")

    def validate_times(self) -> None:
        by_index = {s.index: s for s in self.steps}
        plan_deps = self.values.get("__deps__", {})
        for idx, deps in plan_deps.items():
            for dep in deps:
                if by_index[idx].start + 1e-12 < by_index[dep].end:
                    raise AssertionError(
                        f"step {idx} starts before its dependency {dep} ends"
                    )


def _resolve(values: dict, name: str, site: str):
    value = values[name]
    if isinstance(value, dict):
        if site not in value:
            raise KeyError(f"value {name} was not delivered to {site}")
        return value[site]
    return value


def final_value(values: dict, plan: ProtocolPlan) -> ContentGrid:
    """The ContentGrid a pass materialized at the UE."""
    return _resolve(values, plan.final_output, "UE")


def _transmit_value(value, spec: ChannelSpec, stream) -> object:
    """Analog delivery of one payload object through the channel."""
    if isinstance(value, TextPrompt):
        return value  # digital, lossless
    if isinstance(value, ContentGrid):
        symbols = value.values.ravel() - GRID_OFFSET
        received = transmit_analog(symbols, spec, stream) + GRID_OFFSET
        return ContentGrid(
            height=value.height, width=value.width,
            values=received.reshape(value.height, value.width),
            bits_per_pixel=value.bits_per_pixel,
        )
    if isinstance(value, SketchGrid):
        symbols = value.values.ravel() - GRID_OFFSET
        received = transmit_analog(symbols, spec, stream) + GRID_OFFSET
        return SketchGrid(
            values=received.reshape(value.values.shape),
            pool_factor=value.pool_factor,
            tile_range=value.tile_range,
            bits_per_pixel=value.bits_per_pixel,
        )
    if isinstance(value, LatentSeed):
        received = transmit_analog(value.values, spec, stream)
        return LatentSeed(values=received, kind=value.kind, sub_range=value.sub_range,
                          bits_per_feature=value.bits_per_feature)
    if isinstance(value, PartialContent):
        received = transmit_analog(value.values, spec, stream)
        return PartialContent(values=received, sub_range=value.sub_range)
    raise TypeError(f"cannot transmit value of type {type(value).__name__}")


def run_values(
    plan: ProtocolPlan,
    pipe: Pipeline,
    request: GenRequest,
    spec: ChannelSpec,
    stream_factory,
    policy,
    *,
    noisy: bool,
    reference_values: dict | None = None,
    forced_select: dict[int, int] | None = None,
) -> tuple[dict, dict[int, int]]:
    """Execute the plan's value flow in step order.

    The noise-free pass (``noisy=False``) is the infinite-SNR re-run of the
    same plan with identical step order.
    """
    values: dict = {"image@UE": request.input_image, "prompt@UE": request.prompt}
    selected: dict[int, int] = {}
    for step in plan.steps:
        if step.action == "transmit":
            payload = _resolve(values, step.inputs[0], step.src)
            if step.item_index is not None:
                payload = payload[step.item_index]
            delivered = {}
            for dst in step.dst:
                if noisy and step.payload.transport == "analog":
                    stream = stream_factory(link_name(step.src, dst))
                    delivered[dst] = _transmit_value(payload, spec, stream)
                else:
                    delivered[dst] = payload
            values[step.output] = delivered
            continue

        site = step.site
        inputs = [_resolve(values, name, site) for name in step.inputs]
        try:
            values[step.output] = _dispatch(step, inputs, plan, pipe, policy,
                                            reference_values, forced_select,
                                            selected)
        except Exception as exc:
            raise RuntimeError(
                f"step {step.index} ({step.action} at {site}) failed: {exc}"
            ) from exc
    return values, selected


def _dispatch(step, inputs, plan, pipe, policy, reference_values, forced_select,
              selected):
    if step.action == "infer":
        return infer(inputs[0], inputs[1], pipe)
    if step.action == "generate":
        return generate(inputs[0], pipe, es_index=step.es_index)
    if step.action == "decode":
        return decode(inputs[0], pipe)
    if step.action == "sketch":
        return sketch(inputs[0], pipe)
    if step.action == "partial_sketch":
        return partial_sketch(inputs[0], step.tile_index, plan.es_count, pipe)
    if step.action == "complete":
        return complete(inputs[0], pipe)
    if step.action == "split":
        return split_seed(inputs[0], step.split_count)
    if step.action == "partial_generate":
        return partial_generate(inputs[0], pipe)
    if step.action == "merge":
        return merge_partials(inputs, pipe)
    if step.action == "stitch":
        return stitch_tiles(inputs)
    if step.action == "select":
        if forced_select and step.index in forced_select:
            idx = forced_select[step.index]
        elif policy == "min_distortion_oracle":
            if reference_values is None:
                idx = 0  # reference pass: all candidates are noise-free, tie -> 0
            else:
                refs = [_resolve(reference_values, name, step.site)
                        for name in step.inputs]
                idx = select_output(inputs, policy, refs)
        else:
            idx = select_output(inputs, policy)
        selected[step.index] = idx
        return inputs[idx]
    raise ValueError(f"unhandled action {step.action!r}")


def build_jobs(
    plan: ProtocolPlan,
    devices: dict[str, DeviceSpec],
    work_model: WorkModel,
    spec: ChannelSpec,
    arrival: float,
    id_start: int,
) -> tuple[list[SimJob], dict[int, tuple[int, float]]]:
    """Turn plan steps into schedulable jobs.

    Contiguous compute steps sharing a ``job_group`` coalesce into one device
    visit, so a device serves a request's run to completion before taking the
    next queued unit. Returns the jobs plus, per step index, its job id and
    the step's time offset within the job.
    """
    jobs: list[SimJob] = []
    step_meta: dict[int, tuple[int, float]] = {}
    step_to_job: dict[int, int] = {}
    group_key_to_job: dict[tuple, int] = {}
    group_members: dict[int, list[ProtocolStep]] = {}

    next_id = id_start
    for step in plan.steps:
        if step.action == "transmit":
            resources = tuple(link_name(step.src, dst) for dst in step.dst)
            job = SimJob(
                job_id=next_id,
                resources=resources,
                duration=transmission_time(step.payload.bits, spec),
                release_time=arrival,
                kind="transmit",
                tag=("transmit", step.index),
            )
            jobs.append(job)
            step_to_job[step.index] = job.job_id
            group_members[job.job_id] = [step]
            next_id += 1
        else:
            key = (step.site, step.job_group or f"solo_{step.index}")
            if key not in group_key_to_job:
                job = SimJob(
                    job_id=next_id,
                    resources=(step.site,),
                    duration=0.0,
                    release_time=arrival,
                    kind="compute",
                    tag=("compute", key),
                )
                jobs.append(job)
                group_key_to_job[key] = job.job_id
                group_members[job.job_id] = []
                next_id += 1
            job_id = group_key_to_job[key]
            step_to_job[step.index] = job_id
            group_members[job_id].append(step)

    by_id = {job.job_id: job for job in jobs}
    for job in jobs:
        members = group_members[job.job_id]
        offset = 0.0
        dep_jobs: set[int] = set()
        for step in members:
            step_meta[step.index] = (job.job_id, offset)
            if step.action != "transmit":
                offset += compute_time(
                    step.action, work_model, devices[step.site], step.cost_fraction
                )
            for dep in step.depends_on:
                dep_job = step_to_job[dep]
                if dep_job != job.job_id:
                    dep_jobs.add(dep_job)
        if job.kind == "compute":
            job.duration = offset
        job.deps = tuple(sorted(dep_jobs))
    return jobs, step_meta


def assemble_transcript(
    plan: ProtocolPlan,
    request: GenRequest,
    spec: ChannelSpec,
    values: dict,
    selected: dict[int, int],
    reference_output: ContentGrid,
    jobs: list[SimJob],
    step_meta: dict[int, tuple[int, float]],
    timings,
    work_model: WorkModel,
    devices: dict[str, DeviceSpec],
) -> Transcript:
    steps: list[StepRecord] = []
    transmits: list[TransmitRecord] = []
    noise_possible = not math.isinf(spec.snr_db)
    completion = request.arrival_time
    for step in plan.steps:
        job_id, offset = step_meta[step.index]
        timing = timings[job_id]
        if step.action == "transmit":
            start, end = timing.start, timing.end
            transmits.append(
                TransmitRecord(
                    step_index=step.index,
                    src=step.src,
                    dst=step.dst,
                    payload_kind=step.payload.payload_kind,
                    bits=step.payload.bits,
                    symbol_count=step.payload.symbol_count,
                    direction="uplink" if step.src == "UE" else "downlink",
                    noisy=step.payload.transport == "analog" and noise_possible,
                    duration=end - start,
                )
            )
        else:
            duration = compute_time(
                step.action, work_model, devices[step.site], step.cost_fraction
            )
            start = timing.start + offset
            end = start + duration
        steps.append(StepRecord(step.index, step.site, step.action, start, end))
        completion = max(completion, end)

    final_output = final_value(values, plan)
    values = dict(values)
    values["__deps__"] = {s.index: s.depends_on for s in plan.steps}
    transcript = Transcript(
        protocol_id=plan.protocol_id,
        request_id=request.request_id,
        arrival_time=request.arrival_time,
        completion_time=completion,
        steps=steps,
        transmits=transmits,
        final_output=final_output,
        reference_output=reference_output,
        selected_indices=selected,
        values=values,
    )
    transcript.validate_times()
    return transcript


def execute_plan(
    plan: ProtocolPlan,
    pipe: Pipeline,
    spec: ChannelSpec,
    request: GenRequest,
    *,
    master_seed: int = 0,
    trial: int = 0,
    devices: dict[str, DeviceSpec] | None = None,
    work_model: WorkModel | None = None,
    policy="min_distortion_oracle",
    stream_factory=None,
) -> Transcript:
    """Execute one request end to end and return its transcript."""
    if devices is None:
        devices = default_devices(plan.es_count)
    if work_model is None:
        work_model = WorkModel()
    if stream_factory is None:
        stream_factory = lambda link: substream(master_seed, "channel", trial, link)

    ref_values, ref_selected = run_values(
        plan, pipe, request, spec, stream_factory, policy, noisy=False
    )
    values, selected = run_values(
        plan, pipe, request, spec, stream_factory, policy,
        noisy=True, reference_values=ref_values,
    )
    if selected and selected != ref_selected:
        ref_values, _ = run_values(
            plan, pipe, request, spec, stream_factory, policy,
            noisy=False, forced_select=selected,
        )
    reference_output = final_value(ref_values, plan)

    jobs, step_meta = build_jobs(plan, devices, work_model, spec,
                                 request.arrival_time, id_start=0)
    timings = run_jobs(jobs)
    return assemble_transcript(
        plan, request, spec, values, selected, reference_output,
        jobs, step_meta, timings, work_model, devices,
    )
