"""Regenerate the bundled episode corpus.

Each episode is authored as an instruction, an optional setup applied to the
fresh session, a goal and perturbations.  The ground-truth plan is the oracle's
canonical shortest plan; everything else (grounding queries, relevant pages) is
derived from it.  Every episode is checked before anything is written.

    python3 tools/build_corpus.py            # write episodes
    python3 tools/build_corpus.py --plans    # print plans only
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from appliance_sim.actions import OBJECT_KINDS, format_action
from appliance_sim.bench.episodes import EPISODE_SUFFIX, Corpus, Episode, dump_episode, verify_episode
from appliance_sim.bench.planners import CorruptPlanner, OraclePlanner
from appliance_sim.bench.tasks import RUNNERS
from appliance_sim.session import Perturbation, create_session
from appliance_sim.spec import parse_effect, parse_predicate
from appliance_sim.statespace import oracle_plan

DATA = Path(__file__).resolve().parents[1] / "src" / "appliance_sim" / "data"


def ep(id, instruction, goal, setup=(), perturb=()):
    return {"id": id, "instruction": instruction, "goal": goal, "setup": list(setup), "perturb": list(perturb)}


def S(ref, to):
    return {"set": ref, "to": to}


def P(at_step, *changes):
    return {"at_step": at_step, "changes": list(changes)}


EPISODES = {
    "microwave": [
        ep("microwave-01", "Heat the bowl for 3 minutes on high power.",
           [["obj:bowl", "==", "turntable"], ["hand", "==", "none"], ["part:timer_knob", "==", "3"],
            ["part:power_knob", "==", "high"], ["param:running", "==", 1]],
           perturb=[P(3, S("part:power_knob", "low")), P(7, S("part:door", "open"))]),
        ep("microwave-02", "Heat for 1 minute.",
           [["part:door", "==", "closed"], ["part:timer_knob", "==", "1"], ["param:running", "==", 1]],
           setup=[S("part:door", "open")],
           perturb=[P(2, S("part:door", "open"))]),
        ep("microwave-03", "Set medium power for 2 minutes and start heating.",
           [["part:power_knob", "==", "medium"], ["part:timer_knob", "==", "2"], ["param:running", "==", 1]],
           perturb=[P(1, S("part:timer_knob", "4"))]),
        ep("microwave-04", "Take the bowl out of the microwave and close the door.",
           [["obj:bowl", "==", "counter"], ["hand", "==", "none"], ["part:door", "==", "closed"]],
           setup=[S("obj:bowl", "turntable")],
           perturb=[P(1, S("part:door", "closed"))]),
        ep("microwave-05", "Stop the microwave and open the door.",
           [["param:running", "==", 0], ["part:door", "==", "open"], ["part:timer_knob", "==", "0"]],
           setup=[S("part:timer_knob", "4"), S("param:running", 1)],
           perturb=[P(1, S("part:door", "closed"))]),
    ],
    "air_fryer": [
        ep("air_fryer-01", "Cook the fries for 15 minutes at 200 degrees.",
           [["obj:fries", "==", "basket"], ["hand", "==", "none"], ["part:basket", "==", "in"],
            ["part:temp_knob", "==", "200"], ["part:timer_knob", "==", "15"]],
           perturb=[P(2, S("part:timer_knob", "0")), P(6, S("part:temp_knob", "80"))]),
        ep("air_fryer-02", "Set 160 degrees for 10 minutes.",
           [["part:temp_knob", "==", "160"], ["part:timer_knob", "==", "10"], ["part:basket", "==", "in"]],
           perturb=[P(1, S("part:temp_knob", "80"))]),
        ep("air_fryer-03", "Turn the timer off and take the fries out onto the plate.",
           [["obj:fries", "==", "plate"], ["hand", "==", "none"], ["part:basket", "==", "in"], ["part:timer_knob", "==", "0"]],
           setup=[S("obj:fries", "basket"), S("part:timer_knob", "20"), S("part:temp_knob", "200")],
           perturb=[P(1, S("part:timer_knob", "25"))]),
        ep("air_fryer-04", "Reheat the fries for 5 minutes at 120 degrees.",
           [["obj:fries", "==", "basket"], ["hand", "==", "none"], ["part:basket", "==", "in"],
            ["part:temp_knob", "==", "120"], ["part:timer_knob", "==", "5"]],
           perturb=[P(3, S("part:basket", "in"))]),
        ep("air_fryer-05", "Push the basket in and preheat at 200 degrees for 5 minutes.",
           [["part:basket", "==", "in"], ["part:temp_knob", "==", "200"], ["part:timer_knob", "==", "5"]],
           setup=[S("part:basket", "out")],
           perturb=[P(2, S("part:timer_knob", "30"))]),
    ],
    "toaster": [
        ep("toaster-01", "Toast a slice of bread at browning level 4.",
           [["obj:bread", "==", "slot"], ["hand", "==", "none"], ["part:browning_knob", "==", "4"], ["param:toasting", "==", 1]],
           perturb=[P(1, S("part:browning_knob", "1")), P(4, S("obj:bread", "plate"))]),
        ep("toaster-02", "Toast a slice of bread at browning level 2.",
           [["obj:bread", "==", "slot"], ["hand", "==", "none"], ["part:browning_knob", "==", "2"], ["param:toasting", "==", 1]],
           perturb=[P(4, S("part:browning_knob", "5"))]),
        ep("toaster-03", "Stop toasting and turn the browning down to 1.",
           [["param:toasting", "==", 0], ["part:browning_knob", "==", "1"]],
           setup=[S("obj:bread", "slot"), S("part:browning_knob", "5"), S("part:lever", "down"), S("param:toasting", 1)],
           perturb=[P(1, S("part:browning_knob", "3"))]),
        ep("toaster-04", "The bread is already in the slot. Toast it at level 5.",
           [["obj:bread", "==", "slot"], ["part:browning_knob", "==", "5"], ["param:toasting", "==", 1]],
           setup=[S("obj:bread", "slot")],
           perturb=[P(1, S("obj:bread", "plate"))]),
        ep("toaster-05", "Toast a slice of bread at browning level 3.",
           [["obj:bread", "==", "slot"], ["hand", "==", "none"], ["part:browning_knob", "==", "3"], ["param:toasting", "==", 1]],
           perturb=[P(4, S("part:browning_knob", "1"))]),
    ],
    "stand_mixer": [
        ep("stand_mixer-01", "Add the flour, lock the head down and mix at speed 2.",
           [["param:flour_added", "==", 1], ["part:motor_head", "==", "closed"], ["part:lock_lever", "==", "locked"],
            ["part:speed_knob", "==", "2"], ["hand", "==", "none"]],
           perturb=[P(5, S("part:lock_lever", "locked")), P(7, S("part:speed_knob", "off"))]),
        ep("stand_mixer-02", "Tilt the motor head open.", [["part:motor_head", "==", "open"]],
           perturb=[P(1, S("part:lock_lever", "locked"))]),
        ep("stand_mixer-03", "Lower and lock the motor head, then mix at speed 3.",
           [["part:motor_head", "==", "closed"], ["part:lock_lever", "==", "locked"], ["part:speed_knob", "==", "3"]],
           setup=[S("part:lock_lever", "unlocked"), S("part:motor_head", "open"), S("param:flour_added", 1)],
           perturb=[P(2, S("part:motor_head", "open"))]),
        ep("stand_mixer-04", "Stop the mixer and tilt the head open.",
           [["part:speed_knob", "==", "off"], ["part:motor_head", "==", "open"]],
           setup=[S("part:speed_knob", "2"), S("param:flour_added", 1)],
           perturb=[P(1, S("part:speed_knob", "3"))]),
        ep("stand_mixer-05", "Add the flour and mix at speed 1 with the head locked.",
           [["param:flour_added", "==", 1], ["part:motor_head", "==", "closed"], ["part:lock_lever", "==", "locked"],
            ["part:speed_knob", "==", "1"], ["hand", "==", "none"]],
           perturb=[P(4, S("part:motor_head", "closed"))]),
    ],
    "washing_machine": [
        ep("washing_machine-01", "Wash the laundry on the wool program.",
           [["obj:laundry", "==", "drum"], ["hand", "==", "none"], ["part:door", "==", "closed"],
            ["part:program_knob", "==", "wool"], ["param:running", "==", 1]],
           perturb=[P(1, S("part:program_knob", "cotton")), P(6, S("part:door", "open"))]),
        ep("washing_machine-02", "The laundry is loaded. Run a quick wash.",
           [["part:program_knob", "==", "quick"], ["param:running", "==", 1]],
           setup=[S("obj:laundry", "drum")],
           perturb=[P(1, S("part:program_knob", "wool"))]),
        ep("washing_machine-03", "Pause the wash, unload the laundry into the basket and close the door.",
           [["obj:laundry", "==", "basket"], ["hand", "==", "none"], ["param:running", "==", 0], ["part:door", "==", "closed"]],
           setup=[S("obj:laundry", "drum"), S("param:running", 1)],
           perturb=[P(2, S("part:door", "closed"))]),
        ep("washing_machine-04", "Wash the laundry on the synthetic program.",
           [["obj:laundry", "==", "drum"], ["hand", "==", "none"], ["part:door", "==", "closed"],
            ["part:program_knob", "==", "synthetic"], ["param:running", "==", 1]],
           perturb=[P(5, S("obj:laundry", "basket"))]),
        ep("washing_machine-05", "Close the door and start a cotton wash.",
           [["part:program_knob", "==", "cotton"], ["param:running", "==", 1]],
           setup=[S("obj:laundry", "drum"), S("part:door", "open"), S("part:program_knob", "quick")],
           perturb=[P(2, S("part:door", "open"))]),
    ],
    "coffee_machine": [
        ep("coffee_machine-01", "Brew a large coffee.",
           [["param:brewing", "==", 1], ["part:size_knob", "==", "large"], ["hand", "==", "none"]],
           perturb=[P(2, S("part:size_knob", "small")), P(7, S("param:water", 0))]),
        ep("coffee_machine-02", "The machine is on and filled. Brew a small coffee.",
           [["param:brewing", "==", 1], ["part:size_knob", "==", "small"], ["hand", "==", "none"]],
           setup=[S("param:power", "on"), S("param:water", 1)],
           perturb=[P(2, S("part:size_knob", "large"))]),
        ep("coffee_machine-03", "Fill the water tank and switch the machine on.",
           [["param:water", "==", 1], ["param:power", "==", "on"], ["hand", "==", "none"]],
           perturb=[P(3, S("param:water", 0))]),
        ep("coffee_machine-04", "Brew a medium coffee.",
           [["param:brewing", "==", 1], ["part:size_knob", "==", "medium"], ["hand", "==", "none"]],
           perturb=[P(5, S("obj:cup", "shelf"))]),
        ep("coffee_machine-05", "Switch the machine off and put the cup back on the shelf.",
           [["param:power", "==", "off"], ["obj:cup", "==", "shelf"], ["hand", "==", "none"]],
           setup=[S("param:power", "on"), S("param:water", 1), S("obj:cup", "tray"), S("param:brewing", 1)],
           perturb=[P(1, S("part:size_knob", "large"))]),
    ],
    "oven": [
        ep("oven-01", "Bake the tray at 200 degrees for 30 minutes.",
           [["obj:tray", "==", "rack"], ["hand", "==", "none"], ["part:door", "==", "closed"],
            ["part:mode_knob", "==", "bake"], ["part:temp_knob", "==", "200"], ["part:timer_knob", "==", "30"]],
           perturb=[P(3, S("part:mode_knob", "off")), P(7, S("obj:tray", "counter"))]),
        ep("oven-02", "Grill at 250 degrees for 15 minutes.",
           [["part:mode_knob", "==", "grill"], ["part:temp_knob", "==", "250"], ["part:timer_knob", "==", "15"]],
           perturb=[P(2, S("part:mode_knob", "off"))]),
        ep("oven-03", "Switch the oven off and take the tray out.",
           [["obj:tray", "==", "counter"], ["hand", "==", "none"], ["part:door", "==", "closed"],
            ["part:mode_knob", "==", "off"], ["part:temp_knob", "==", "off"]],
           setup=[S("obj:tray", "rack"), S("part:mode_knob", "fan"), S("part:temp_knob", "200"), S("part:timer_knob", "30")],
           perturb=[P(2, S("part:temp_knob", "250"))]),
        ep("oven-04", "Cook the tray with the fan at 150 degrees for 45 minutes.",
           [["obj:tray", "==", "rack"], ["hand", "==", "none"], ["part:door", "==", "closed"],
            ["part:mode_knob", "==", "fan"], ["part:temp_knob", "==", "150"], ["part:timer_knob", "==", "45"]],
           perturb=[P(5, S("part:door", "closed"))]),
        ep("oven-05", "The tray is in. Bake at 150 degrees for 15 minutes.",
           [["part:mode_knob", "==", "bake"], ["part:temp_knob", "==", "150"], ["part:timer_knob", "==", "15"]],
           setup=[S("obj:tray", "rack")],
           perturb=[P(1, S("part:mode_knob", "grill"))]),
    ],
    "kettle": [
        ep("kettle-01", "Fill the kettle and boil the water.", [["param:heating", "==", 1], ["hand", "==", "none"]],
           perturb=[P(2, S("part:lid", "closed")), P(4, S("part:switch", "off"))]),
        ep("kettle-02", "The kettle has water. Close the lid and boil it.",
           [["param:heating", "==", 1]], setup=[S("param:water", 1), S("part:lid", "open")],
           perturb=[P(1, S("part:lid", "open"))]),
        ep("kettle-03", "Switch the kettle off and open the lid.",
           [["part:switch", "==", "off"], ["part:lid", "==", "open"]],
           setup=[S("param:water", 1), S("part:switch", "on")],
           perturb=[P(1, S("part:lid", "closed"))]),
        ep("kettle-04", "Fill the kettle with water and close the lid.",
           [["param:water", "==", 1], ["part:lid", "==", "closed"], ["hand", "==", "none"]],
           perturb=[P(1, S("part:lid", "closed"))]),
        ep("kettle-05", "The lid is open. Fill the kettle and boil the water.",
           [["param:heating", "==", 1], ["hand", "==", "none"]], setup=[S("part:lid", "open")],
           perturb=[P(4, S("part:switch", "off"))]),
    ],
    "induction_cooker": [
        ep("induction_cooker-01", "Put the pan on the cooking zone and cook at level 5 for 30 minutes.",
           [["obj:pan", "==", "zone"], ["hand", "==", "none"], ["param:power", "==", "on"],
            ["param:level", "==", 5], ["param:timer", "==", 30]],
           perturb=[P(2, S("param:level", 2)), P(3, S("param:level", 8))]),
        ep("induction_cooker-02", "Switch on the hob and set level 3.",
           [["param:power", "==", "on"], ["param:level", "==", 3]],
           perturb=[P(1, S("param:level", 6))]),
        ep("induction_cooker-03", "Turn the heat down to level 2 and set a 20 minute timer.",
           [["param:level", "==", 2], ["param:timer", "==", 20]],
           setup=[S("param:power", "on"), S("param:level", 7)],
           perturb=[P(1, S("param:level", 9))]),
        ep("induction_cooker-04", "Switch the hob off and move the pan back to the counter.",
           [["param:power", "==", "off"], ["obj:pan", "==", "counter"], ["hand", "==", "none"]],
           setup=[S("param:power", "on"), S("param:level", 4), S("obj:pan", "zone")],
           perturb=[P(0, S("param:level", 8))]),
        ep("induction_cooker-05", "Put the pan on and cook at full power for 60 minutes.",
           [["obj:pan", "==", "zone"], ["hand", "==", "none"], ["param:power", "==", "on"],
            ["param:level", "==", 9], ["param:timer", "==", 60]],
           perturb=[P(3, S("param:timer", 10))]),
    ],
}


def initial_state(spec, setup):
    session = create_session(spec, 0)
    for raw in setup:
        eff = parse_effect(raw)
        if session._apply(eff) is None:
            raise SystemExit(f"setup effect {raw} changes nothing")
        session._settle()
    return session.snapshot()


def plan_parts(spec, plan):
    names = []
    for action in plan:
        if action.kind in OBJECT_KINDS:
            parts = [action.args[1]] if action.kind == "Pour" else []
        else:
            parts = [action.args[0]]
        names += [p for p in parts if p in spec.part_map and p not in names]
    return names


def relevant_pages(spec, manual, order, plan):
    basic = min(manual.indices("operating_procedure"))
    pages = {
        "component_description": sorted(manual.indices("component_description")),
        "operating_procedure": [basic, basic + 1 + order],
    }
    guarded = {m.part for m in spec.mechanisms_of_kind("safety_lock") + spec.mechanisms_of_kind("magnetic_attraction")}
    if guarded & set(plan_parts(spec, plan)):
        pages["safety_precaution"] = sorted(manual.indices("safety_precaution"))
    return pages


def build(corpus_specs):
    episodes = []
    for appliance, items in EPISODES.items():
        spec = corpus_specs[appliance]
        for item in items:
            state = initial_state(spec, item["setup"])
            goal = parse_predicate(item["goal"])
            plan = oracle_plan(spec, state, goal)
            perts = tuple(Perturbation.from_json(p) for p in item["perturb"])
            episodes.append(Episode(item["id"], appliance, item["instruction"], state, goal, plan, perts, {}, tuple(plan_parts(spec, plan))))
    # manuals embed every recipe, so pages are assigned once all plans exist
    corpus = Corpus(corpus_specs, episodes)
    final = []
    for appliance in EPISODES:
        mine = [e for e in corpus.episodes if e.appliance == appliance]
        manual = corpus.manual(appliance)
        for order, e in enumerate(mine):
            pages = relevant_pages(corpus_specs[appliance], manual, order, e.gt_plan)
            final.append(Episode(e.id, e.appliance, e.instruction, e.initial_state, e.goal, e.gt_plan, e.perturbations,
                                 {k: tuple(v) for k, v in pages.items()}, e.grounding_queries))
    return Corpus(corpus_specs, final)


def check(corpus):
    problems = []
    oracle = OraclePlanner()
    for e in corpus.episodes:
        spec = corpus.spec_for(e)
        problems += [f"{e.id}: {p}" for p in verify_episode(spec, e, corpus.manual(e.appliance))]
        if not e.perturbations:
            problems.append(f"{e.id}: no perturbation")
        for task in (2, 4, 5):
            report = RUNNERS[task](corpus, e, oracle).report
            m = report.metrics
            score = m.get("stepwise_success_rate", m.get("success"))
            if score != 1 and score is not True:
                problems.append(f"{e.id}: oracle scores {m} on task {task}")
            if task == 4 and m["queries"] != len(e.perturbations):
                problems.append(f"{e.id}: closed loop reached {m['queries']} of {len(e.perturbations)} perturbations")
        L = len(e.gt_plan)
        for k in range(1, L + 1):
            report = RUNNERS[5](corpus, e, CorruptPlanner(k)).report
            if abs(report.metrics["completion_rate"] - (k - 1) / L) > 1e-12 or report.metrics["success"]:
                problems.append(f"{e.id}: corrupt:{k} scores {report.metrics}")
    return problems


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plans", action="store_true", help="print oracle plans and exit")
    args = ap.parse_args(argv)
    specs = Corpus.load(DATA).specs
    corpus = build(specs)
    if args.plans:
        for e in corpus.episodes:
            print(e.id, [format_action(a) for a in e.gt_plan])
        return 0
    problems = check(corpus)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return 1
    out = DATA / "episodes"
    out.mkdir(exist_ok=True)
    for old in out.glob(f"*{EPISODE_SUFFIX}"):
        old.unlink()
    for e in corpus.episodes:
        (out / f"{e.id}{EPISODE_SUFFIX}").write_text(dump_episode(e), encoding="utf-8")
    n_perts = sum(len(e.perturbations) for e in corpus.episodes)
    print(f"wrote {len(corpus.episodes)} episodes, {n_perts} perturbation steps")
    return 0


if __name__ == "__main__":
    sys.exit(main())
