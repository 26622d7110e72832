"""Scenario execution: Monte-Carlo trials, shared-queue request batches,
background load, and parameter sweeps.

All randomness flows from the scenario's master seed through named
sub-streams: requests from ("request", trial, copy), channel noise from
("channel", trial, copy, link), background arrivals from ("background",).
Swept parameters are deliberately absent from the stream names so that a
sweep reuses common random numbers across its values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .content import ContentGrid, GenRequest, TextPrompt
from .engine import SimJob, run_jobs
from .executor import (
    Transcript,
    assemble_transcript,
    build_jobs,
    final_value,
    run_values,
)
from .metrics import quality
from .pipeline import Pipeline, build_pipeline
from .protocols import ProtocolPlan, build_plan
from .scenario import ScenarioConfig
from .streams import substream


@dataclass
class RunReport:
    """Outcome of one executed request."""

    protocol_id: str
    trial: int
    request_id: str
    arrival_time: float
    completion_time: float
    response_time: float
    uplink_bits: int
    downlink_bits: int
    mse: float
    psnr_db: float
    selected_index: int | None = None

    @property
    def aggregate_bits(self) -> int:
        return self.uplink_bits + self.downlink_bits


def make_request(cfg: ScenarioConfig, pipe: Pipeline, protocol_id: str,
                 trial: int, copy: int = 0, arrival: float = 0.0) -> GenRequest:
    """Draw one request: an in-basis input image plus a random prompt embedding.

    The image is synthesized through the pipeline basis with per-pixel spread
    ``request_image_scale`` so its values sit mostly inside [0, 1].
    """
    rng = substream(cfg.master_seed, "request", trial, copy)
    latent = rng.standard_normal(cfg.latent_dim)
    scale = cfg.request_image_scale * math.sqrt(
        pipe.pixel_count / cfg.latent_dim)
    flat = 0.5 + scale * (pipe.basis @ latent)
    image = ContentGrid(
        height=cfg.height, width=cfg.width,
        values=flat.reshape(cfg.height, cfg.width),
        bits_per_pixel=cfg.bits_per_pixel,
    )
    prompt = TextPrompt(
        text=f"prompt-{trial}-{copy}",
        embedding=rng.standard_normal(cfg.text_dim),
        payload_bits=cfg.text_bits,
    )
    return GenRequest(
        request_id=f"{protocol_id.lower()}-t{trial}-r{copy}",
        input_image=image,
        prompt=prompt,
        protocol_id=protocol_id,
        arrival_time=arrival,
    )


def _background_jobs(cfg: ScenarioConfig, trial: int, id_start: int) -> list[SimJob]:
    bg = cfg.background
    if bg is None:
        return []
    rng = substream(cfg.master_seed, "background", trial)
    rate = bg.rate_hz
    device = cfg.devices()[bg.device]
    jobs: list[SimJob] = []
    t = 0.0
    job_id = id_start
    while True:
        t += rng.exponential(1.0 / rate)
        if t >= bg.horizon_s:
            break
        jobs.append(SimJob(
            job_id=job_id,
            resources=(bg.device,),
            duration=bg.work_units / device.compute_rate,
            release_time=t,
            kind="compute",
            tag=("background", job_id),
        ))
        job_id += 1
    return jobs


def run_trial(cfg: ScenarioConfig, pipe: Pipeline, plan: ProtocolPlan,
              trial: int) -> list[Transcript]:
    """Execute one trial: arrival-count requests sharing devices and links."""
    spec = cfg.channel_spec()
    devices = cfg.devices()
    requests = [
        make_request(cfg, pipe, plan.protocol_id, trial, copy,
                     arrival=copy * cfg.arrivals.spacing_s)
        for copy in range(cfg.arrivals.count)
    ]

    per_request = []
    all_jobs: list[SimJob] = []
    next_id = 0
    for copy, request in enumerate(requests):
        factory = lambda link, _t=trial, _c=copy: substream(
            cfg.master_seed, "channel", _t, _c, link)
        ref_values, ref_selected = run_values(
            plan, pipe, request, spec, factory, cfg.selection_policy, noisy=False)
        values, selected = run_values(
            plan, pipe, request, spec, factory, cfg.selection_policy,
            noisy=True, reference_values=ref_values)
        if selected and selected != ref_selected:
            ref_values, _ = run_values(
                plan, pipe, request, spec, factory, cfg.selection_policy,
                noisy=False, forced_select=selected)
        jobs, step_meta = build_jobs(plan, devices, cfg.work_model, spec,
                                     request.arrival_time, id_start=next_id)
        next_id = max(j.job_id for j in jobs) + 1
        all_jobs.extend(jobs)
        per_request.append((request, values, selected,
                            final_value(ref_values, plan), jobs, step_meta))

    all_jobs.extend(_background_jobs(cfg, trial, id_start=next_id))
    timings = run_jobs(all_jobs)

    transcripts = []
    for request, values, selected, reference, jobs, step_meta in per_request:
        transcripts.append(assemble_transcript(
            plan, request, spec, values, selected, reference,
            jobs, step_meta, timings, cfg.work_model, devices,
        ))
    return transcripts


def report_from_transcript(transcript: Transcript, trial: int) -> RunReport:
    q = quality(transcript.final_output, transcript.reference_output)
    selected = None
    if transcript.selected_indices:
        selected = next(iter(transcript.selected_indices.values()))
    return RunReport(
        protocol_id=transcript.protocol_id,
        trial=trial,
        request_id=transcript.request_id,
        arrival_time=transcript.arrival_time,
        completion_time=transcript.completion_time,
        response_time=transcript.response_time,
        uplink_bits=transcript.uplink_bits,
        downlink_bits=transcript.downlink_bits,
        mse=q.mse,
        psnr_db=q.psnr_db,
        selected_index=selected,
    )


def run_scenario(cfg: ScenarioConfig, *, keep_transcripts: bool = False):
    """Run trials x protocols; returns reports (and transcripts when asked).

    Each trial is an independent simulation; requests inside a trial (the
    ``arrivals`` batch plus any background stream) share device and link
    queues. Deterministic for a fixed master seed.
    """
    pipe = build_pipeline(cfg.pipeline_params())
    reports: list[RunReport] = []
    transcripts: list[Transcript] = []
    for protocol_id in cfg.protocols:
        plan = build_plan(protocol_id, cfg.plan_context())
        for trial in range(cfg.trials):
            for transcript in run_trial(cfg, pipe, plan, trial):
                reports.append(report_from_transcript(transcript, trial))
                if keep_transcripts:
                    transcripts.append(transcript)
    if keep_transcripts:
        return reports, transcripts
    return reports


SWEEPABLE = ("snr_db", "es_count", "latent_dim", "pool_factor", "seed_bits")


def sweep_scenario(cfg: ScenarioConfig, parameter: str, values: list):
    """Re-run the scenario once per parameter value; returns {value: reports}."""
    if parameter not in SWEEPABLE:
        raise ValueError(
            f"parameter {parameter!r} is not sweepable (choose from {SWEEPABLE})"
        )
    if not values:
        raise ValueError("sweep needs at least one parameter value")
    results = {}
    for value in values:
        cast = float(value) if parameter == "snr_db" else int(value)
        swept = replace(cfg, **{parameter: cast})
        from .scenario import validate_config

        validate_config(swept)
        results[cast] = run_scenario(swept)
    return results
