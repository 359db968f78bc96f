"""Command-line frontend: ``appliance-sim <command> ...``.

Exit status: 0 on success, 1 for findings, divergence or an unreachable goal,
2 for I/O problems, bad usage and planner infrastructure failures.  Benchmark
scores never change the exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .actions import Plan, parse_action, parse_plan
from .errors import (
    ActionParseError,
    ApplianceSimError,
    EpisodeError,
    InvalidEffect,
    PlannerError,
    SpecError,
    StateSpaceExceeded,
    UnreachableGoal,
)
from .manual import render_manual, render_panel_schematic, write_manual
from .session import Perturbation, create_session, read_trace, replay_trace
from .spec import load_spec_file, parse_effect
from .statespace import oracle_plan
from .validation import Finding, validate_spec

ENV_PREFIX = "APPSIM_"
TASK_CHOICES = ("1", "2", "3", "4", "5", "all")

log = logging.getLogger("appliance_sim")


class UsageError(Exception):
    """Bad input files or arguments; maps to exit status 2."""


def _env(name, default):
    return os.environ.get(ENV_PREFIX + name, default)


def _env_int(name, default):
    raw = _env(name, None)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {ENV_PREFIX}{name} must be an integer, got {raw!r}") from None


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=_env_int("SEED", 0), help="random seed (default 0, env APPSIM_SEED)")
    g.add_argument("--corpus", default=_env("CORPUS", None), help="corpus root with specs/ and episodes/ (default: bundled, env APPSIM_CORPUS)")
    g.add_argument("--out", default=_env("OUT", None), help="output directory (env APPSIM_OUT)")
    g.add_argument("--jobs", type=_positive, default=_env_int("JOBS", 1), help="worker threads for bench (default 1, env APPSIM_JOBS)")
    g.add_argument("--verbose", "-v", action="count", default=_env_int("VERBOSE", 0), help="more logging; repeat for debug (env APPSIM_VERBOSE)")
    return p


# --- loading helpers ------------------------------------------------------------


def _corpus(args):
    from .bench.episodes import Corpus

    try:
        return Corpus.load(args.corpus)
    except (OSError, SpecError, EpisodeError) as exc:
        raise UsageError(f"cannot load corpus: {exc}") from None


def _spec(ref, args):
    """A spec from a file path, or by id from the corpus."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        try:
            return load_spec_file(path)
        except OSError as exc:
            raise UsageError(f"{ref}: {exc.strerror or exc}") from None
    corpus = _corpus(args)
    if ref not in corpus.specs:
        raise UsageError(f"{ref}: no such file or bundled appliance")
    return corpus.specs[ref]


def _episode(ref, args):
    from .bench.episodes import load_episode_file

    path = Path(ref)
    if path.name.endswith(".json") or path.exists():
        try:
            return load_episode_file(path)
        except OSError as exc:
            raise UsageError(f"{ref}: {exc.strerror or exc}") from None
    corpus = _corpus(args)
    if ref not in corpus.by_id:
        raise UsageError(f"{ref}: no such file or bundled episode")
    return corpus.by_id[ref]


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


# --- validate -------------------------------------------------------------------


def _validate_spec_file(path: Path, out):
    try:
        spec = load_spec_file(path)
    except SpecError as exc:
        out.append(Finding("error", type(exc).__name__, exc.path, exc.detail).line(path))
        return None
    out.extend(f.line(path) for f in validate_spec(spec).findings)
    return spec


def cmd_validate(args) -> int:
    from .bench.episodes import EPISODE_SUFFIX, load_episode_file, verify_episode

    targets = [Path(p) for p in args.paths]
    if not targets:
        root = Path(args.corpus) if args.corpus else None
        if root is None:
            from .bench.episodes import bundled_root

            root = bundled_root()
        targets = [root]
    spec_files, episode_files = [], []
    for t in targets:
        if t.is_dir():
            files = sorted(t.rglob("*.json"))
            episode_files += [f for f in files if f.name.endswith(EPISODE_SUFFIX)]
            spec_files += [f for f in files if not f.name.endswith(EPISODE_SUFFIX) and f.parent.name != "schema"]
        elif t.is_file():
            (episode_files if t.name.endswith(EPISODE_SUFFIX) else spec_files).append(t)
        else:
            print(f"error: {t}: no such file or directory", file=sys.stderr)
            return 2
    lines, specs = [], {}
    try:
        for f in spec_files:
            spec = _validate_spec_file(f, lines)
            if spec is not None:
                specs[spec.id] = spec
        if episode_files and not specs:
            specs = dict(_corpus(args).specs)
        for f in episode_files:
            try:
                ep = load_episode_file(f)
            except EpisodeError as exc:
                lines.append(Finding("error", "episode", "$", str(exc)).line(f))
                continue
            spec = specs.get(ep.appliance)
            if spec is None:
                lines.append(Finding("error", "episode", "$.appliance", f"unknown appliance {ep.appliance!r}").line(f))
                continue
            lines += [Finding("error", "episode", "$", p).line(f) for p in verify_episode(spec, ep)]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in lines:
        print(line)
    n_err = sum(line.startswith("error:") for line in lines)
    print(f"{len(spec_files)} specs, {len(episode_files)} episodes, {n_err} errors", file=sys.stderr)
    return 1 if n_err else 0


# --- manual / schematic ---------------------------------------------------------


def cmd_manual(args) -> int:
    spec = _spec(args.spec, args)
    recipes = ()
    if not Path(args.spec).exists():
        recipes = _corpus(args).recipes(spec.id)
    doc = render_manual(spec, args.seed, recipes)
    out = Path(args.out or f"manual_{spec.id}")
    write_manual(doc, out)
    print(f"{len(doc)} pages written to {out}")
    return 0


def cmd_schematic(args) -> int:
    spec = _spec(args.spec, args)
    svg = render_panel_schematic(spec)
    if args.out:
        _write(Path(args.out) / f"{spec.id}.svg", svg)
    else:
        sys.stdout.write(svg)
    return 0


# --- simulate -------------------------------------------------------------------

_SIM_HELP = """commands:
  <Action>(args...)      execute one atomic action, e.g. Press(start_button, "pressed", 1)
  tick N                 advance N ticks
  perturb REF VALUE      external change, e.g. perturb part:door open
  perturb JSON           one effect object or a list of them
  obs                    print the current observation
  help                   this text
  quit                   leave"""


def _perturbation(rest: str) -> Perturbation:
    rest = rest.strip()
    if rest[:1] in "[{":
        raw = json.loads(rest)
        raw = raw if isinstance(raw, list) else [raw]
    else:
        ref, _, value = rest.partition(" ")
        value = value.strip()
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
        raw = [{"set": ref, "to": value}]
    try:
        return Perturbation(0, tuple(parse_effect(e) for e in raw))
    except ValueError as exc:
        raise InvalidEffect(str(exc)) from None


def _outcome_text(outcome) -> str:
    if outcome.ok:
        head = "ok"
        effects = [f"  effect {e.target} {e.name} = {e.value}" for e in outcome.effects_applied]
        return "\n".join([head, *effects, outcome.observation.to_text()])
    return f"rejected {outcome.error}: {outcome.message}"


def cmd_simulate(args) -> int:
    spec = _spec(args.spec, args)
    session = create_session(spec, args.seed)
    out = sys.stdout
    for raw in sys.stdin:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        print(f"> {line}", file=out)
        word, _, rest = line.partition(" ")
        try:
            if word == "quit":
                break
            if word == "help":
                print(_SIM_HELP, file=out)
            elif word == "obs":
                print(session.observe().to_text(), file=out)
            elif word == "tick":
                n = int(rest.strip() or "1")
                print(session.step(n).to_text(), file=out)
            elif word == "perturb":
                print(session.apply_perturbation(_perturbation(rest)).to_text(), file=out)
            else:
                print(_outcome_text(session.execute_action(parse_action(line))), file=out)
        except ActionParseError as exc:
            print(f"error {exc.code}: {exc}", file=out)
        except (InvalidEffect, json.JSONDecodeError) as exc:
            print(f"error InvalidEffect: {exc}", file=out)
        except ValueError as exc:
            print(f"error: {exc}", file=out)
    if args.record:
        Path(args.record).parent.mkdir(parents=True, exist_ok=True)
        session.write_trace(args.record)
    return 0


# --- solve / replay / score -----------------------------------------------------


def cmd_solve(args) -> int:
    episode = _episode(args.episode, args)
    spec = _spec(args.spec, args) if args.spec else _spec(episode.appliance, args)
    try:
        plan = oracle_plan(spec, episode.initial_state, episode.goal)
    except (UnreachableGoal, StateSpaceExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = plan.to_text()
    if args.out:
        _write(Path(args.out) / f"{episode.id}.plan", text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_replay(args) -> int:
    spec = _spec(args.spec, args)
    try:
        events = read_trace(args.trace)
    except OSError as exc:
        print(f"error: {args.trace}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: {args.trace}: {exc}", file=sys.stderr)
        return 1
    initial = None
    if args.initial:
        initial = json.loads(Path(args.initial).read_text(encoding="utf-8"))
    session, diverged = replay_trace(spec, events, initial, args.seed)
    if diverged is not None:
        seq = events[diverged].get("seq", diverged) if diverged < len(events) else diverged
        print(f"divergence at seq {seq}", file=sys.stderr)
        return 1
    print(session.observe().to_text())
    return 0


def cmd_score(args) -> int:
    from .bench.metrics import eval_open_loop

    episode = _episode(args.episode, args)
    try:
        text = Path(args.plan).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {args.plan}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    try:
        plan = parse_plan(text)
    except ActionParseError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        plan = Plan()
    m = eval_open_loop(plan, episode.gt_plan)
    print(json.dumps({"episode": episode.id, "completion_rate": m.completion_rate, "success": m.success}, sort_keys=True))
    return 0


# --- bench ----------------------------------------------------------------------


def cmd_bench(args) -> int:
    from .bench.planners import make_planner
    from .bench.tasks import run_bench, write_bench

    corpus = _corpus(args)
    tasks = (1, 2, 3, 4, 5) if args.task == "all" else (int(args.task),)
    address = f"replay:{args.predictions}" if args.predictions else args.planner
    try:
        planner = make_planner(address, seed=args.seed, timeout=args.timeout, retries=args.retries)
    except (PlannerError, ValueError, OSError) as exc:
        print(f"error: planner {address!r}: {exc}", file=sys.stderr)
        return 2
    episodes = None
    if args.episodes:
        wanted = set(args.episodes.split(","))
        missing = wanted - set(corpus.by_id)
        if missing:
            print(f"error: unknown episodes {sorted(missing)}", file=sys.stderr)
            return 2
        episodes = wanted
    try:
        result = run_bench(corpus, planner, tasks, seed=args.seed, jobs=args.jobs, episodes=episodes)
    finally:
        planner.close()
    out = Path(args.out or "bench_out")
    write_bench(result, out)
    print(result.table())
    unavailable = sum(1 for runs in result.runs.values() for run in runs for entry in run.log if entry.get("error") == "PlannerUnavailable")
    if unavailable:
        print(f"error: planner unavailable for {unavailable} requests", file=sys.stderr)
        return 2
    return 0


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="appliance-sim",
        description="Simulate appliance specs and run the benchmark tasks.",
        epilog=f"Every global option can also be set through an environment variable with prefix {ENV_PREFIX}.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("validate", parents=[common], help="check specs and episodes")
    p.add_argument("paths", nargs="*", help="spec files, episode files or directories (default: the corpus)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("manual", parents=[common], help="render the manual pages of a spec")
    p.add_argument("spec", help="spec file or bundled appliance id")
    p.set_defaults(func=cmd_manual)

    p = sub.add_parser("schematic", parents=[common], help="render the SVG panel schematic of a spec")
    p.add_argument("spec", help="spec file or bundled appliance id")
    p.set_defaults(func=cmd_schematic)

    p = sub.add_parser("simulate", parents=[common], help="drive a session from standard input", epilog=_SIM_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("spec", help="spec file or bundled appliance id")
    p.add_argument("--record", metavar="FILE", help="write the trace log here on exit")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", parents=[common], help="print the oracle plan of an episode")
    p.add_argument("episode", help="episode file or bundled episode id")
    p.add_argument("--spec", help="spec file (default: the episode's bundled appliance)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", parents=[common], help="run benchmark tasks over the corpus")
    p.add_argument("task", choices=TASK_CHOICES, help="task number or 'all'")
    p.add_argument("--planner", default=_env("PLANNER", "builtin:oracle"),
                   help="builtin:oracle | builtin:random | builtin:corrupt:K | stdio:CMD | http://HOST:PORT (env APPSIM_PLANNER)")
    p.add_argument("--predictions", metavar="DIR", help="score saved prediction files instead of calling a planner")
    p.add_argument("--timeout", type=float, default=float(_env("TIMEOUT", 30)), help="seconds per planner request (env APPSIM_TIMEOUT)")
    p.add_argument("--retries", type=int, default=_env_int("RETRIES", 0), help="retries after a planner timeout (env APPSIM_RETRIES)")
    p.add_argument("--episodes", metavar="IDS", help="comma-separated episode ids (default: all)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", parents=[common], help="re-execute a trace log and check it matches")
    p.add_argument("spec", help="spec file or bundled appliance id")
    p.add_argument("trace", help="trace log (JSON lines)")
    p.add_argument("--initial", metavar="FILE", help="starting snapshot (default: fresh session with --seed)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("score", parents=[common], help="score a plan file against an episode's gt_plan")
    p.add_argument("episode", help="episode file or bundled episode id")
    p.add_argument("plan", help="plan file, one action per line")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ApplianceSimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
