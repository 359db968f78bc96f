"""Search for shortest plans, then score a hand-written plan against one.

    python3 demos/oracle_plans.py
"""

from appliance_sim import format_action, oracle_plan, parse_plan
from appliance_sim.bench import Corpus, eval_open_loop

corpus = Corpus.load()

for episode_id in ("stand_mixer-01", "coffee_machine-02", "washing_machine-03"):
    ep = corpus.by_id[episode_id]
    spec = corpus.spec_for(ep)
    plan = oracle_plan(spec, ep.initial_state, ep.goal)
    print(f"{ep.id}: {ep.instruction}")
    for i, action in enumerate(plan, 1):
        print(f"  {i}. {format_action(action)}")

ep = corpus.by_id["stand_mixer-01"]
guess = parse_plan(ep.gt_plan.to_text().splitlines()[0] + "\nFlip(lock_lever, \"locked\")\n")
score = eval_open_loop(guess, ep.gt_plan)
print(f"\nguess scores completion {score.completion_rate:.2f}, success {score.success}")
