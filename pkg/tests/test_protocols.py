import numpy as np
import pytest

from megsim import PROTOCOL_IDS, ContentGrid, PlanContext, build_plan, select_output
from megsim.protocols import operations_summary, proportional_bit_split, validate_plan


def ctx(es_count=1, **overrides):
    base = dict(
        latent_dim=8, height=16, width=16, pool_factor=4,
        image_bits=1_300_000, seed_bits=28_000, text_bits=1_000, sketch_bits=81_250,
        es_count=es_count, broadcast_uplink=True,
    )
    base.update(overrides)
    return PlanContext(**base)


def all_plans():
    plans = []
    for pid in PROTOCOL_IDS:
        es = 2 if pid in ("UIDG", "DIUG", "DSUC", "UIDCG", "DCSUC") else 1
        plans.append(build_plan(pid, ctx(es_count=es)))
    return plans


def test_every_plan_validates():
    for plan in all_plans():
        validate_plan(plan)  # raises on any structural defect
        assert plan.steps[-1].output == "output@UE"


def test_local_has_zero_transmissions():
    plan = build_plan("LOCAL", ctx())
    assert plan.transmit_steps == ()
    assert plan.es_count == 0


def test_ciag_moves_exactly_two_analog_payloads():
    plan = build_plan("CIAG", ctx())
    analog = [t for t in plan.transmit_steps if t.payload.transport == "analog"]
    assert len(analog) == 2
    up, down = analog
    assert up.payload.payload_kind == "seed" and up.src == "UE"
    assert down.payload.payload_kind == "seed" and down.dst == ("UE",)


def test_uieg_uplinks_only_a_seed():
    plan = build_plan("UIEG", ctx())
    analog_up = [t for t in plan.transmit_steps
                 if t.payload.transport == "analog" and t.src == "UE"]
    assert [t.payload.payload_kind for t in analog_up] == ["seed"]


def test_eiug_downlinks_only_a_seed():
    plan = build_plan("EIUG", ctx())
    analog_down = [t for t in plan.transmit_steps
                   if t.payload.transport == "analog" and t.src != "UE"]
    assert [t.payload.payload_kind for t in analog_down] == ["seed"]


def test_ciag_never_moves_an_image_sized_payload():
    plan = build_plan("CIAG", ctx())
    for t in plan.transmit_steps:
        assert t.payload.payload_kind != "image"
        assert t.payload.bits < 1_300_000


def test_uidcg_transmit_counts():
    # derived by counting the generated plan's steps: S sub-seed uplinks and
    # S image-sized partial-content downlinks
    plan = build_plan("UIDCG", ctx(es_count=3))
    subs = [t for t in plan.transmit_steps if t.payload.payload_kind == "sub_seed"]
    downs = [t for t in plan.transmit_steps
             if t.src != "UE" and t.payload.transport == "analog"]
    assert len(subs) == 3 and all(t.src == "UE" for t in subs)
    assert len(downs) == 3 and all(t.payload.payload_kind == "image" for t in downs)
    assert sum(t.payload.bits for t in subs) == 28_000
    assert all(t.payload.bits == 1_300_000 for t in downs)


def test_uidg_broadcast_accounted_once():
    plan = build_plan("UIDG", ctx(es_count=3))
    seed_ups = [t for t in plan.transmit_steps if t.payload.payload_kind == "seed"]
    assert len(seed_ups) == 1
    assert seed_ups[0].dst == ("ES1", "ES2", "ES3")
    unicast = build_plan("UIDG", ctx(es_count=3, broadcast_uplink=False))
    seed_ups = [t for t in unicast.transmit_steps if t.payload.payload_kind == "seed"]
    assert len(seed_ups) == 3


def test_dcsuc_tile_bits_total_the_sketch():
    plan = build_plan("DCSUC", ctx(es_count=3))
    tiles = [t for t in plan.transmit_steps if t.payload.payload_kind == "sketch_tile"]
    assert len(tiles) == 3
    assert sum(t.payload.bits for t in tiles) == 81_250


def test_unknown_protocol_and_missing_servers():
    with pytest.raises(ValueError):
        build_plan("TURBO", ctx())
    for pid in ("UIDG", "DIUG", "DSUC", "UIDCG", "DCSUC"):
        with pytest.raises(ValueError):
            build_plan(pid, ctx(es_count=1))


def test_multi_es_plans_use_every_server():
    for pid in ("UIDG", "DIUG", "DSUC", "UIDCG", "DCSUC"):
        plan = build_plan(pid, ctx(es_count=4))
        assert plan.es_count == 4
        sites = {s.site for s in plan.steps}
        assert {"ES1", "ES2", "ES3", "ES4"} <= sites


def test_operations_summary_mentions_sites():
    plan = build_plan("CIAG", ctx())
    summary = operations_summary(plan)
    assert "UE:" in summary and "ES1:" in summary and "generate" in summary


def test_proportional_bit_split_is_exact():
    assert proportional_bit_split(28_000, [3, 3, 2]) == [10_500, 10_500, 7_000]
    for total, weights in ((28_000, [5, 3]), (1_000_001, [1, 1, 1]), (7, [2, 2, 3])):
        parts = proportional_bit_split(total, weights)
        assert sum(parts) == total
        assert all(p >= 0 for p in parts)


# --- select_output ----------------------------------------------------------


def grid_of(fill):
    return ContentGrid(height=2, width=2, values=np.full((2, 2), fill))


def test_single_candidate_under_every_policy():
    candidate = [grid_of(0.3)]
    assert select_output(candidate, "first") == 0
    assert select_output(candidate, ("fixed_index", 0)) == 0
    assert select_output(candidate, "min_distortion_oracle", grid_of(0.9)) == 0


def test_oracle_prefers_the_clean_candidate():
    reference = grid_of(0.5)
    noisy = grid_of(0.5 + 0.2)
    assert select_output([reference, noisy], "min_distortion_oracle", reference) == 0
    assert select_output([noisy, reference], "min_distortion_oracle", reference) == 1


def test_oracle_matches_exhaustive_argmin(rng):
    # brute-force oracle over randomly permuted distortions
    reference = grid_of(0.5)
    for _ in range(20):
        offsets = rng.permutation([0.01, 0.05, 0.1, 0.2, 0.4])
        candidates = [grid_of(0.5 + o) for o in offsets]
        expected = int(np.argmin([np.mean((c.values - 0.5) ** 2) for c in candidates]))
        assert select_output(candidates, "min_distortion_oracle", reference) == expected


def test_fixed_index_bounds():
    with pytest.raises(ValueError):
        select_output([grid_of(0.1)], ("fixed_index", 3))
    with pytest.raises(ValueError):
        select_output([], "first")


def test_per_candidate_references():
    refs = [grid_of(0.2), grid_of(0.8)]
    candidates = [grid_of(0.5), grid_of(0.75)]  # second is closest to its own ref
    assert select_output(candidates, "min_distortion_oracle", refs) == 1
