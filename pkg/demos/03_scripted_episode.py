"""One scripted episode step by step, then the whole bundled suite.

Replays the authored responses for the first bundled episode so every
prompt, action, and plan update is inspectable, then runs all ten
episodes with the scripted pilot and again with a uniformly random
pilot to contrast the aggregate metrics.

Run from the repository root:

    python3 demos/03_scripted_episode.py
"""

import glob
import os
import re
import time
from importlib import resources

from stmrnav.evaluation import aggregate, format_summary, run_episode, run_suite
from stmrnav.planner import RandomBackend, ScriptedBackend, serialize_action
from stmrnav.world import load_episode, load_scene

FIXTURES = resources.files("stmrnav") / "fixtures"


def scripted_for(episode, index=0):
    return ScriptedBackend.from_file(
        str(FIXTURES / "scripts" / f"{episode.episode_id}.txt"))


def main() -> None:
    scene = load_scene(str(FIXTURES / "riverside.scene"))
    episode = load_episode(str(FIXTURES / "ep001.episode"))
    print(f"instruction: {episode.instruction!r}")
    print(f"goal: {tuple(episode.goal)}  budget: {episode.max_actions} "
          "actions\n")

    result = run_episode(scene, episode, scripted_for(episode))
    for trace in result.step_traces:
        pose = trace.pose
        plan_lines = [ln for ln in trace.prompt.splitlines()
                      if re.match(r"\d+\. \(", ln)]
        print(f"step {trace.index}: at ({pose.x:.1f}, {pose.y:.1f}, "
              f"{pose.z:.1f}) -> {serialize_action(trace.action)}")
        print(f"  plan: {' | '.join(plan_lines)}")
        for note in trace.notes:
            print(f"  note: {note}")
    print(f"\nstopped by {result.stopped_by} after {result.steps} steps")
    print(f"navigation error {result.ne:.3f} m -> success="
          f"{result.success} oracle_success={result.oracle_success}")

    episodes = [load_episode(p) for p in
                sorted(glob.glob(os.path.join(str(FIXTURES),
                                              "ep*.episode")))]
    started = time.perf_counter()
    scripted_results = run_suite(scene, episodes, scripted_for,
                                 parallel=2)
    random_results = run_suite(
        scene, episodes,
        lambda ep, index: RandomBackend(seed=123 + index), parallel=2)
    elapsed = time.perf_counter() - started

    print(f"\nfull suite, scripted pilot ({elapsed:.1f} s for both "
          "runs):")
    print(format_summary(aggregate(scripted_results)), end="")
    print("\nfull suite, random pilot (same episodes, seeded):")
    print(format_summary(aggregate(random_results)), end="")


if __name__ == "__main__":
    main()
