"""Comparing prompt variants: map encodings and plan-state handling.

Two knobs matter most when studying what the language model actually
uses.  The first is the map encoding: the same mapped world can reach
the prompt as the numeric matrix, as a place graph, or as bearing and
range clauses.  The second is plan statefulness: the ledger normally
carries completed sub-goals forward, while the stateless mode rebuilds
the plan from the instruction every step and forgets progress the
moment the evidence leaves the matrix center.

Run from the repository root:

    python3 demos/04_prompt_ablations.py
"""

import re
from importlib import resources

from stmrnav.evaluation import LoopConfig, run_episode
from stmrnav.planner import STOP_RESPONSE, EchoBackend, ScriptedBackend
from stmrnav.world import load_episode, load_scene, parse_episode, parse_scene

FIXTURES = resources.files("stmrnav") / "fixtures"

PATCH_SCENE = """\
stmr-scene v1
cell_size 5
legend 1 road
legend 4 grass
under_label 1

height 8 4
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
label 8 4
4 4 4 4
1 1 1 1
4 4 4 4
4 4 4 4
4 4 4 4
4 4 4 4
1 1 1 1
4 4 4 4
clearance 8 4
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
0 0 0 0
"""

PATCH_EPISODE = """\
stmr-episode v1
id ep_modes
instruction head to the road and head to the pond
start 7.5 7.5 10.0 0.0 0.0 1.5707963267948966
goal 7.5 17.5 10.0
max_actions 4
path 7.5 7.5 10.0 0.0 0.0 1.5707963267948966
path 7.5 17.5 10.0 0.0 0.0 1.5707963267948966
"""


def show_map_block(prompt: str, title: str) -> None:
    lines = prompt.splitlines()
    start = lines.index("Map:")
    end = lines.index("", start)
    print(f"--- {title} ---")
    print("\n".join(lines[start:end]))
    print()


def main() -> None:
    scene = load_scene(str(FIXTURES / "riverside.scene"))
    episode = load_episode(str(FIXTURES / "ep002.episode"))
    print(f"instruction: {episode.instruction!r}\n")

    for fmt in ("stmr", "topo", "metric"):
        result = run_episode(scene, episode, EchoBackend(),
                             config=LoopConfig(map_format=fmt))
        show_map_block(result.step_traces[0].prompt,
                       f"map_format={fmt!r}")

    # plan statefulness: start over a road, complete the first
    # sub-goal, fly away from it, and compare what the next prompt
    # claims in each mode
    patch_scene = parse_scene(PATCH_SCENE)
    patch_episode = parse_episode(PATCH_EPISODE)
    script = ["Action: (straight), (0 degrees), (10 meters)",
              STOP_RESPONSE]
    print("--- plan ledger after leaving the completed landmark ---")
    for mode in ("state", "stateless"):
        result = run_episode(patch_scene, patch_episode,
                             ScriptedBackend(list(script)),
                             config=LoopConfig(mount="down",
                                               plan_mode=mode))
        plan_lines = [ln for ln in
                      result.step_traces[1].prompt.splitlines()
                      if re.match(r"\d+\. \(", ln)]
        print(f"plan_mode={mode!r:12} step 1 sees: "
              f"{' | '.join(plan_lines)}")


if __name__ == "__main__":
    main()
