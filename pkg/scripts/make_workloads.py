#!/usr/bin/env python3
"""Regenerate the bundled workload fixtures under src/agentfork/workloads/.

Every fixture is produced deterministically from a fixed seed, so this
script can be re-run at any time to verify the committed files.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from agentfork.harness.generate import GenerateParams, generate_synthetic
from agentfork.harness.workload import save_workload
from agentfork.policy import Specialization
from agentfork.runtime import NestedSpawn, ScriptedOutcome

OUT = Path(__file__).resolve().parents[1] / "src" / "agentfork" / "workloads"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)

    # Small demo exercising every phase: one spawn, skill promotion, a
    # diff applied, and a modest conflict batch.
    demo = generate_synthetic(
        101,
        GenerateParams(item_count=120, relevance_target_quantile=0.5, conflict_count=400, name="demo"),
    )
    save_workload(demo, OUT / "demo.json")

    # Memory-reduction calibration: keep ~58% of items so the reported
    # token reduction lands at ~42%.
    multi = generate_synthetic(
        202,
        GenerateParams(
            item_count=400,
            relevance_target_quantile=0.58,
            conflict_mix=None,
            conflict_count=0,
            name="multi_file_fix",
        ),
    )
    save_workload(multi, OUT / "multi_file_fix.json")

    # Resolution-tier calibration: ten thousand conflict scenarios mixed
    # to land on the 15/73/12 auto/semantic/escalated split.
    tiers = generate_synthetic(
        303,
        GenerateParams(
            item_count=12,
            relevance_target_quantile=0.5,
            spike=False,
            conflict_mix=(0.15, 0.73, 0.12),
            conflict_count=10_000,
            name="tier_calibration",
        ),
    )
    save_workload(tiers, OUT / "tier_calibration.json")

    # Never crosses the spawn threshold.
    quiet = generate_synthetic(
        404,
        GenerateParams(
            item_count=16, relevance_target_quantile=0.5, spike=False,
            conflict_mix=None, conflict_count=0, name="quiet",
        ),
    )
    save_workload(quiet, OUT / "quiet.json")

    # Exactly one spike, no conflict phase.
    spike = generate_synthetic(
        505,
        GenerateParams(
            item_count=60, relevance_target_quantile=0.5,
            conflict_mix=None, conflict_count=0, name="single_spike",
        ),
    )
    save_workload(spike, OUT / "single_spike.json")

    # Child that runs past the 600 s timeout.
    timeout = generate_synthetic(
        606,
        GenerateParams(
            item_count=24, relevance_target_quantile=0.5,
            conflict_mix=None, conflict_count=0, name="timeout_child",
        ),
    )
    slow = dataclasses.replace(
        timeout.child_outcomes["context_compression"], execution_time=700.0,
        diffs=(), skills_learned=(),
    )
    timeout.child_outcomes = {"context_compression": slow}
    save_workload(timeout, OUT / "timeout_child.json")

    # Depth-limit probe: the spawned child chains nested spawns down to a
    # depth-4 request, which must be rejected.
    depth = generate_synthetic(
        707,
        GenerateParams(
            item_count=24, relevance_target_quantile=0.5,
            conflict_mix=None, conflict_count=0, name="adversarial_depth",
        ),
    )
    leafish = dict(diffs=(), skills_learned=(), tokens_used=100, api_calls=1)
    depth.child_outcomes = {
        "context_compression": dataclasses.replace(
            depth.child_outcomes["context_compression"],
            execution_time=40.0,
            diffs=(), skills_learned=(),
            spawns=(NestedSpawn(outcome_key="nest-d2", specialization=Specialization.RESEARCH_ANALYSIS),),
        ),
        "nest-d2": ScriptedOutcome(
            execution_time=30.0, output="level two work",
            spawns=(NestedSpawn(outcome_key="nest-d3", specialization=Specialization.TESTING_DEBUGGING),),
            **leafish,
        ),
        "nest-d3": ScriptedOutcome(
            execution_time=20.0, output="level three work",
            spawns=(NestedSpawn(outcome_key="nest-d4", specialization=Specialization.REFACTORING),),
            **leafish,
        ),
        "nest-d4": ScriptedOutcome(execution_time=10.0, output="level four never runs", **leafish),
    }
    save_workload(depth, OUT / "adversarial_depth.json")

    # Concurrency-limit probe: the spawned child requests six siblings at
    # once; two must queue and start only as slots free up.
    burst = generate_synthetic(
        808,
        GenerateParams(
            item_count=24, relevance_target_quantile=0.5,
            conflict_mix=None, conflict_count=0, name="adversarial_concurrency",
        ),
    )
    burst.child_outcomes = {
        "context_compression": dataclasses.replace(
            burst.child_outcomes["context_compression"],
            execution_time=90.0,
            diffs=(), skills_learned=(),
            spawns=tuple(
                NestedSpawn(outcome_key="leaf", specialization=Specialization.RESEARCH_ANALYSIS)
                for _ in range(6)
            ),
        ),
        "leaf": ScriptedOutcome(execution_time=15.0, output="leaf work", **leafish),
    }
    save_workload(burst, OUT / "adversarial_concurrency.json")

    for path in sorted(OUT.glob("*.json")):
        print(f"{path.name}: {path.stat().st_size} bytes")


if __name__ == "__main__":
    main()
