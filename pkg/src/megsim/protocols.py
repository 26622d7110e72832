"""Declarative message-flow plans for the eleven generation workflows.

A plan is an ordered, topologically sorted list of steps. Compute steps name
the values they consume and produce; transmit steps move a named value between
sites and carry the payload sizing used for overhead accounting. Values are
addressed as ``name@SITE`` so a plan can be validated for locality: every step
must consume values that are physically present at its site.

Workflows (S = participating edge server count):
  LOCAL    everything on the UE, zero transmissions
  CENTRAL  raw image up, generated image down
  UIEG     UE infers; seed up, image down
  EIUG     image up; ES infers+generates; seed down, UE decodes
  CIAG     seed up, seed down; only latent features ever cross the air
  ESUC     image up; ES sketches; sketch down, UE completes
  UIDG     seed broadcast to S servers; S candidate images down; UE selects
  DIUG     image to each server; S content seeds down; UE decodes and selects
  DSUC     image to each server; S sketches down; UE selects and completes
  UIDCG    seed split into S sub-seeds; partial contents down; UE merges
  DCSUC    image to each server; sketch tiles down; UE stitches and completes
"""

from __future__ import annotations

from dataclasses import dataclass
from graphlib import TopologicalSorter

import numpy as np

from .content import MULTI_ES_PROTOCOLS, PROTOCOL_IDS, PayloadSpec
from .pipeline import split_ranges, tile_row_ranges

COMPUTE_ACTIONS = (
    "infer",
    "generate",
    "partial_generate",
    "decode",
    "sketch",
    "partial_sketch",
    "complete",
    "split",
    "merge",
    "stitch",
    "select",
)
ACTIONS = COMPUTE_ACTIONS + ("transmit",)

UE = "UE"


def es_site(index: int) -> str:
    """1-based edge server site id."""
    return f"ES{index}"


@dataclass(frozen=True)
class ProtocolStep:
    """One step of a plan.

    ``inputs`` and ``output`` are value names; transmit steps additionally
    carry ``payload``, ``src`` and ``dst`` (a tuple of sites: broadcasts list
    every receiver but are accounted once). ``cost_fraction`` scales the work
    model cost for partial operations. ``job_group`` labels contiguous compute
    runs that a device serves as one queued unit.
    """

    index: int
    site: str
    action: str
    inputs: tuple[str, ...]
    output: str
    depends_on: tuple[int, ...]
    payload: PayloadSpec | None = None
    src: str | None = None
    dst: tuple[str, ...] = ()
    es_index: int | None = None
    tile_index: int | None = None
    split_count: int | None = None
    item_index: int | None = None
    cost_fraction: float = 1.0
    job_group: str | None = None


@dataclass(frozen=True)
class ProtocolPlan:
    protocol_id: str
    steps: tuple[ProtocolStep, ...]
    es_count: int
    final_output: str = "output@UE"

    @property
    def transmit_steps(self) -> tuple[ProtocolStep, ...]:
        return tuple(s for s in self.steps if s.action == "transmit")


@dataclass(frozen=True)
class PlanContext:
    """Everything a plan needs from the scenario: dimensions and payload sizes."""

    latent_dim: int
    height: int
    width: int
    pool_factor: int
    image_bits: int
    seed_bits: int
    text_bits: int
    sketch_bits: int
    es_count: int = 1
    broadcast_uplink: bool = True

    @property
    def pixel_count(self) -> int:
        return self.height * self.width

    @property
    def sketch_height(self) -> int:
        return self.height // self.pool_factor

    @property
    def sketch_symbols(self) -> int:
        return (self.height // self.pool_factor) * (self.width // self.pool_factor)


def proportional_bit_split(total_bits: int, weights: list[int]) -> list[int]:
    """Integer split of ``total_bits`` proportional to ``weights``, summing exactly."""
    total_w = sum(weights)
    cuts, acc, prev = [], 0, 0
    for w in weights:
        acc += w
        cut = total_bits * acc // total_w
        cuts.append(cut - prev)
        prev = cut
    return cuts


class _PlanBuilder:
    def __init__(self, protocol_id: str, ctx: PlanContext):
        self.protocol_id = protocol_id
        self.ctx = ctx
        self.steps: list[ProtocolStep] = []
        self.producer: dict[str, int] = {}

    def _deps(self, inputs: tuple[str, ...], extra_deps: tuple[str, ...] = ()) -> tuple[int, ...]:
        names = tuple(inputs) + tuple(extra_deps)
        deps = sorted({self.producer[name] for name in names if name in self.producer})
        return tuple(deps)

    def compute(self, site, action, inputs, output, group, extra_deps=(), **extra) -> str:
        output = f"{output}@{site}"
        inputs = tuple(f"{n}@{site}" if "@" not in n else n for n in inputs)
        step = ProtocolStep(
            index=len(self.steps),
            site=site,
            action=action,
            inputs=inputs,
            output=output,
            depends_on=self._deps(inputs, extra_deps),
            job_group=group,
            **extra,
        )
        self.steps.append(step)
        self.producer[output] = step.index
        return output

    def transmit(self, value, src, dst, kind, bits, symbols, transport="analog",
                 item_index=None, output_name=None) -> str:
        dsts = tuple(dst) if isinstance(dst, (tuple, list)) else (dst,)
        base = output_name or value.split("@")[0]
        if item_index is not None and output_name is None:
            base = f"{base}_{item_index}"
        output = f"{base}@{dsts[0]}" if len(dsts) == 1 else f"{base}@*"
        payload = PayloadSpec(
            payload_kind=kind, bits=int(bits), symbol_count=int(symbols),
            transport=transport,
        )
        step = ProtocolStep(
            index=len(self.steps),
            site=src,
            action="transmit",
            inputs=(value,),
            output=output,
            depends_on=self._deps((value,)),
            payload=payload,
            src=src,
            dst=dsts,
            item_index=item_index,
        )
        self.steps.append(step)
        self.producer[output] = step.index
        return output

    def plan(self) -> ProtocolPlan:
        return ProtocolPlan(
            protocol_id=self.protocol_id,
            steps=tuple(self.steps),
            es_count=0 if self.protocol_id == "LOCAL" else max(1, self._used_es()),
        )

    def _used_es(self) -> int:
        sites = {s.site for s in self.steps} | {d for s in self.steps for d in s.dst}
        return sum(1 for s in sites if s.startswith("ES"))


def build_plan(protocol_id: str, ctx: PlanContext) -> ProtocolPlan:
    """Canonical plan for one workflow; validated before return."""
    if protocol_id not in PROTOCOL_IDS:
        raise ValueError(f"unknown protocol {protocol_id!r}")
    if protocol_id in MULTI_ES_PROTOCOLS and ctx.es_count < 2:
        raise ValueError(f"{protocol_id} requires at least 2 edge servers")
    builder = _PlanBuilder(protocol_id, ctx)
    _BUILDERS[protocol_id](builder, ctx)
    plan = builder.plan()
    validate_plan(plan)
    return plan


def _image_up(b: _PlanBuilder, ctx: PlanContext, es: str) -> str:
    return b.transmit("image@UE", UE, es, "image", ctx.image_bits, ctx.pixel_count)


def _text_up(b: _PlanBuilder, ctx: PlanContext, dst) -> str:
    return b.transmit("prompt@UE", UE, dst, "text", ctx.text_bits, 0,
                      transport="digital_lossless")


def _build_local(b: _PlanBuilder, ctx: PlanContext):
    z = b.compute(UE, "infer", ("image@UE", "prompt@UE"), "task_seed", "ue_gen")
    z2 = b.compute(UE, "generate", (z,), "content_seed", "ue_gen")
    b.compute(UE, "decode", (z2,), "output", "ue_gen")


def _build_central(b: _PlanBuilder, ctx: PlanContext):
    es = es_site(1)
    img = _image_up(b, ctx, es)
    txt = _text_up(b, ctx, es)
    z = b.compute(es, "infer", (img, txt), "task_seed", "es_gen")
    z2 = b.compute(es, "generate", (z,), "content_seed", "es_gen")
    out = b.compute(es, "decode", (z2,), "generated", "es_gen")
    b.transmit(out, es, UE, "image", ctx.image_bits, ctx.pixel_count,
               output_name="output")


def _build_uieg(b: _PlanBuilder, ctx: PlanContext):
    es = es_site(1)
    z = b.compute(UE, "infer", ("image@UE", "prompt@UE"), "task_seed", "ue_prep")
    z_es = b.transmit(z, UE, es, "seed", ctx.seed_bits, ctx.latent_dim)
    txt = _text_up(b, ctx, es)
    # the edge generator is text-conditioned, so it waits for the prompt too
    z2 = b.compute(es, "generate", (z_es,), "content_seed", "es_gen",
                   extra_deps=(txt,))
    out = b.compute(es, "decode", (z2,), "generated", "es_gen")
    b.transmit(out, es, UE, "image", ctx.image_bits, ctx.pixel_count,
               output_name="output")


def _build_eiug(b: _PlanBuilder, ctx: PlanContext):
    es = es_site(1)
    img = _image_up(b, ctx, es)
    txt = _text_up(b, ctx, es)
    z = b.compute(es, "infer", (img, txt), "task_seed", "es_gen")
    z2 = b.compute(es, "generate", (z,), "content_seed", "es_gen")
    z2_ue = b.transmit(z2, es, UE, "seed", ctx.seed_bits, ctx.latent_dim)
    b.compute(UE, "decode", (z2_ue,), "output", "ue_final")


def _build_ciag(b: _PlanBuilder, ctx: PlanContext):
    es = es_site(1)
    z = b.compute(UE, "infer", ("image@UE", "prompt@UE"), "task_seed", "ue_prep")
    z_es = b.transmit(z, UE, es, "seed", ctx.seed_bits, ctx.latent_dim)
    txt = _text_up(b, ctx, es)
    z2 = b.compute(es, "generate", (z_es,), "content_seed", "es_gen",
                   extra_deps=(txt,))
    z2_ue = b.transmit(z2, es, UE, "seed", ctx.seed_bits, ctx.latent_dim)
    b.compute(UE, "decode", (z2_ue,), "output", "ue_final")


def _build_esuc(b: _PlanBuilder, ctx: PlanContext):
    es = es_site(1)
    img = _image_up(b, ctx, es)
    txt = _text_up(b, ctx, es)
    z = b.compute(es, "infer", (img, txt), "task_seed", "es_gen")
    z2 = b.compute(es, "generate", (z,), "content_seed", "es_gen")
    sk = b.compute(es, "sketch", (z2,), "sketch", "es_gen")
    sk_ue = b.transmit(sk, es, UE, "sketch", ctx.sketch_bits, ctx.sketch_symbols)
    b.compute(UE, "complete", (sk_ue,), "output", "ue_final")


def _build_uidg(b: _PlanBuilder, ctx: PlanContext):
    servers = [es_site(i + 1) for i in range(ctx.es_count)]
    z = b.compute(UE, "infer", ("image@UE", "prompt@UE"), "task_seed", "ue_prep")
    if ctx.broadcast_uplink:
        z_all = b.transmit(z, UE, servers, "seed", ctx.seed_bits, ctx.latent_dim)
        txt_all = _text_up(b, ctx, servers)
        seed_at = {es: z_all for es in servers}
        text_at = {es: txt_all for es in servers}
    else:
        seed_at = {es: b.transmit(z, UE, es, "seed", ctx.seed_bits, ctx.latent_dim)
                   for es in servers}
        text_at = {es: _text_up(b, ctx, es) for es in servers}
    candidates = []
    for i, es in enumerate(servers):
        z2 = b.compute(es, "generate", (seed_at[es],), "content_seed", f"es{i + 1}_gen",
                       es_index=i, extra_deps=(text_at[es],))
        y = b.compute(es, "decode", (z2,), "generated", f"es{i + 1}_gen")
        candidates.append(
            b.transmit(y, es, UE, "image", ctx.image_bits, ctx.pixel_count,
                       output_name=f"candidate_{i}")
        )
    b.compute(UE, "select", tuple(candidates), "output", "ue_final")


def _build_diug(b: _PlanBuilder, ctx: PlanContext):
    servers = [es_site(i + 1) for i in range(ctx.es_count)]
    seeds_back = []
    for i, es in enumerate(servers):
        img = _image_up(b, ctx, es)
        txt = _text_up(b, ctx, es)
        z = b.compute(es, "infer", (img, txt), "task_seed", f"es{i + 1}_gen")
        z2 = b.compute(es, "generate", (z,), "content_seed", f"es{i + 1}_gen",
                       es_index=i)
        seeds_back.append(
            b.transmit(z2, es, UE, "seed", ctx.seed_bits, ctx.latent_dim,
                       output_name=f"content_seed_{i}")
        )
    candidates = [
        b.compute(UE, "decode", (name,), f"candidate_{i}", "ue_final")
        for i, name in enumerate(seeds_back)
    ]
    b.compute(UE, "select", tuple(candidates), "output", "ue_final")


def _build_dsuc(b: _PlanBuilder, ctx: PlanContext):
    servers = [es_site(i + 1) for i in range(ctx.es_count)]
    sketches = []
    for i, es in enumerate(servers):
        img = _image_up(b, ctx, es)
        txt = _text_up(b, ctx, es)
        z = b.compute(es, "infer", (img, txt), "task_seed", f"es{i + 1}_gen")
        z2 = b.compute(es, "generate", (z,), "content_seed", f"es{i + 1}_gen",
                       es_index=i)
        sk = b.compute(es, "sketch", (z2,), "sketch", f"es{i + 1}_gen")
        sketches.append(
            b.transmit(sk, es, UE, "sketch", ctx.sketch_bits, ctx.sketch_symbols,
                       output_name=f"sketch_{i}")
        )
    chosen = b.compute(UE, "select", tuple(sketches), "chosen_sketch", "ue_final")
    b.compute(UE, "complete", (chosen,), "output", "ue_final")


def _build_uidcg(b: _PlanBuilder, ctx: PlanContext):
    servers = [es_site(i + 1) for i in range(ctx.es_count)]
    ranges = split_ranges(ctx.latent_dim, ctx.es_count)
    sub_bits = proportional_bit_split(ctx.seed_bits, [hi - lo for lo, hi in ranges])
    z = b.compute(UE, "infer", ("image@UE", "prompt@UE"), "task_seed", "ue_prep")
    subs = b.compute(UE, "split", (z,), "sub_seeds", "ue_prep",
                     split_count=ctx.es_count)
    txt_all = _text_up(b, ctx, servers)
    partials = []
    for i, es in enumerate(servers):
        lo, hi = ranges[i]
        sub_es = b.transmit(subs, UE, es, "sub_seed", sub_bits[i], hi - lo,
                            item_index=i)
        # cooperative servers share the UE's generator, so no es_index here
        part = b.compute(es, "partial_generate", (sub_es,), f"partial_{i}",
                         f"es{i + 1}_gen", extra_deps=(txt_all,),
                         cost_fraction=(hi - lo) / ctx.latent_dim)
        partials.append(
            b.transmit(part, es, UE, "image", ctx.image_bits, ctx.pixel_count)
        )
    b.compute(UE, "merge", tuple(partials), "output", "ue_final")


def _build_dcsuc(b: _PlanBuilder, ctx: PlanContext):
    servers = [es_site(i + 1) for i in range(ctx.es_count)]
    ranges = tile_row_ranges(ctx.sketch_height, ctx.es_count)
    row_total = ctx.sketch_height
    tile_bits = proportional_bit_split(ctx.sketch_bits, [hi - lo for lo, hi in ranges])
    tile_cols = ctx.width // ctx.pool_factor
    tiles = []
    for i, es in enumerate(servers):
        img = _image_up(b, ctx, es)
        txt = _text_up(b, ctx, es)
        z = b.compute(es, "infer", (img, txt), "task_seed", f"es{i + 1}_gen")
        z2 = b.compute(es, "generate", (z,), "content_seed", f"es{i + 1}_gen")
        lo, hi = ranges[i]
        tile = b.compute(es, "partial_sketch", (z2,), f"tile_{i}", f"es{i + 1}_gen",
                         tile_index=i, cost_fraction=(hi - lo) / row_total)
        tiles.append(
            b.transmit(tile, es, UE, "sketch_tile", tile_bits[i],
                       (hi - lo) * tile_cols)
        )
    sk = b.compute(UE, "stitch", tuple(tiles), "sketch_stitched", "ue_final")
    b.compute(UE, "complete", (sk,), "output", "ue_final")


_BUILDERS = {
    "LOCAL": _build_local,
    "CENTRAL": _build_central,
    "UIEG": _build_uieg,
    "EIUG": _build_eiug,
    "CIAG": _build_ciag,
    "ESUC": _build_esuc,
    "UIDG": _build_uidg,
    "DIUG": _build_diug,
    "DSUC": _build_dsuc,
    "UIDCG": _build_uidcg,
    "DCSUC": _build_dcsuc,
}

INITIAL_VALUES = ("image@UE", "prompt@UE")


def validate_plan(plan: ProtocolPlan) -> None:
    """Check acyclicity, value locality, and that the output lands at the UE."""
    graph = {s.index: set(s.depends_on) for s in plan.steps}
    order = list(TopologicalSorter(graph).static_order())  # raises CycleError
    if sorted(order) != list(range(len(plan.steps))):
        raise ValueError("plan steps are not a contiguous index range")
    for step in plan.steps:
        if any(dep >= step.index for dep in step.depends_on):
            raise ValueError(f"step {step.index} depends on a later step")

    # locality: a value named name@SITE is readable only at SITE ('*' broadcasts
    # are readable at each destination of the transmit that produced them)
    produced_at: dict[str, set[str]] = {v: {UE} for v in INITIAL_VALUES}
    for step in plan.steps:
        if step.action == "transmit":
            sites = produced_at.get(step.inputs[0], set())
            if step.src not in sites:
                raise ValueError(
                    f"step {step.index}: transmit source {step.src} does not hold "
                    f"{step.inputs[0]}"
                )
            produced_at[step.output] = set(step.dst)
        else:
            for name in step.inputs:
                sites = produced_at.get(name)
                if sites is None:
                    raise ValueError(f"step {step.index} reads unknown value {name}")
                if step.site not in sites:
                    raise ValueError(
                        f"step {step.index} at {step.site} reads {name} held at {sites}"
                    )
            produced_at[step.output] = {step.site}

    final = plan.steps[-1]
    if final.action == "transmit":
        if final.dst != (UE,):
            raise ValueError("final transmit must deliver to the UE")
    elif final.site != UE:
        raise ValueError("final step must run on the UE")
    if final.output != plan.final_output:
        raise ValueError(f"final step must produce {plan.final_output}")


def operations_summary(plan: ProtocolPlan) -> str:
    """Compact description of who computes what, for the overhead table."""
    by_site: dict[str, list[str]] = {}
    for step in plan.steps:
        if step.action == "transmit":
            continue
        by_site.setdefault(step.site, []).append(step.action)
    parts = []
    for site in sorted(by_site, key=lambda s: (s != UE, s)):
        actions = by_site[site]
        seen = list(dict.fromkeys(actions))
        parts.append(f"{site}: {'+'.join(seen)}")
    if plan.protocol_id == "LOCAL":
        return "; ".join(parts) + "; no transmissions"
    return "; ".join(parts)


def _mse(a, b) -> float:
    va = a.values if hasattr(a, "values") else np.asarray(a, dtype=float)
    vb = b.values if hasattr(b, "values") else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    diff = va - vb
    return float(np.mean(diff * diff))


def select_output(candidates: list, policy, reference=None) -> int:
    """Pick a candidate index under the given policy.

    Policies: ``"first"``; ``("fixed_index", i)``; ``"min_distortion_oracle"``,
    which needs ``reference`` (one noise-free counterpart per candidate, or a
    single grid compared against all) and breaks ties toward the lowest index.
    """
    if not candidates:
        raise ValueError("no candidates to select from")
    if policy == "first":
        return 0
    if isinstance(policy, tuple) and len(policy) == 2 and policy[0] == "fixed_index":
        idx = int(policy[1])
        if not 0 <= idx < len(candidates):
            raise ValueError(f"fixed index {idx} out of range for {len(candidates)} candidates")
        return idx
    if policy == "min_distortion_oracle":
        if reference is None:
            raise ValueError("min_distortion_oracle requires a reference")
        refs = reference if isinstance(reference, (list, tuple)) else [reference] * len(candidates)
        if len(refs) != len(candidates):
            raise ValueError("need one reference per candidate")
        distortions = [_mse(c, r) for c, r in zip(candidates, refs)]
        best = min(range(len(candidates)), key=lambda i: (distortions[i], i))
        return best
    raise ValueError(f"unknown selection policy {policy!r}")
