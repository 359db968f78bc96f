"""Drive a microwave by hand: open it, load a bowl, heat, watch the timer run out.

    python3 demos/walkthrough_microwave.py
"""

from appliance_sim import create_session
from appliance_sim.bench import Corpus

spec = Corpus.load().specs["microwave"]
session = create_session(spec)

steps = [
    'Press(door_open_button, "pressed", 1)',  # the trigger swings the door open
    "Pick(bowl)",
    "Move(bowl, counter, turntable)",
    "Place(bowl)",
    "Close(door)",
    'Rotate(timer_knob, "2", 72.0)',
    'Press(start_button, "pressed", 1)',
]
for text in steps:
    outcome = session.execute_action(text)
    print(f"{text:40} {outcome.status}")

print()
print(session.observe().to_text())

# two detents at ten ticks each
for _ in range(4):
    obs = session.step(5)
    print(f"tick {obs.tick:3}  timer={obs.label('timer_knob')}  screen={dict(obs.screen)['time']!r}  "
          f"turntable={obs.part('turntable').joint_value:g}")

# a rejected action leaves no trace in the state
before = session.snapshot()
outcome = session.execute_action("Open(door)")
print(f"\nOpen(door): {outcome.error}: {outcome.message}")
assert session.snapshot() == before
