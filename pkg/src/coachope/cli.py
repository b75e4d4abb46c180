"""``coachope`` command line: evaluate, diagnose, simulate, synth.

Settings resolve in three layers: built-in defaults, then a JSON file given
with ``--config``, then explicit flags. Every output embeds the resolved
settings and seed. Failures print a JSON error object on stderr and exit
with 2 (usage), 3 (data validation) or 4 (estimation).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .behavior import PROPENSITY_FLOOR
from .core import CoachError, ContractError, EstimationError, ParseError, ValidationError, parse_log, serialize_log, validate_sessions
from .features import build_frame
from .ope import diagnostics, fit_context
from .policies import DEFAULT_CLIP, PolicyName, PolicySpec, always_tool_from_log, standard_policies
from .report import evaluate
from .rewards import CuriositySchedule
from .simulator.archetypes import SimConfig, SimPolicy, run_policy
from .simulator.synthetic import generate_synthetic_bandit_log, resolve_spec

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_ESTIMATION = 0, 2, 3, 4
SIM_SCHEMA_VERSION = "coachope.sim-report/1"
DIAG_SCHEMA_VERSION = "coachope.diagnostics/1"

DEFAULTS = {
    "evaluate": {
        "policy": ["all"], "reward": "total", "n_boot": 1000, "clip": DEFAULT_CLIP, "seed": 0,
        "folds": None, "eps": PROPENSITY_FLOOR, "user_reward": "zscore", "level": 0.95,
        "threads": 1, "out": None, "csv": None,
    },
    "diagnose": {
        "clip": DEFAULT_CLIP, "seed": 0, "folds": None, "eps": PROPENSITY_FLOOR, "out": None,
    },
    "simulate": {
        "policy": ["all"], "lam": 0.1, "k": 2, "episodes": 200, "rollouts": 3, "seed": None,
        "threads": 1, "out": None, "csv": None, "traces": None, "sim": {},
    },
    "synth": {"spec": "default", "seed": None, "out": None, "truth": None, "n_sessions": None},
}


class UsageError(CoachError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="coachope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, seed=True):
        p.add_argument("--config", help="JSON file of settings (flags take precedence)")
        if seed:
            p.add_argument("--seed", type=int, default=S)
        p.add_argument("--out", default=S, help="output path (stdout if omitted)")

    ev = sub.add_parser("evaluate", help="off-policy estimates with bootstrap intervals")
    common(ev)
    ev.add_argument("--log", required=True)
    ev.add_argument("--policy", action="append", default=S,
                    help="notool|alwaystool|heuristic|personalized|all or a policy JSON file; repeatable")
    ev.add_argument("--reward", choices=["obj", "user", "total"], default=S)
    ev.add_argument("--n-boot", dest="n_boot", type=int, default=S)
    ev.add_argument("--clip", type=float, default=S)
    ev.add_argument("--folds", type=int, default=S)
    ev.add_argument("--eps", type=float, default=S)
    ev.add_argument("--user-reward", dest="user_reward", choices=["zscore", "raw"], default=S)
    ev.add_argument("--level", type=float, default=S)
    ev.add_argument("--threads", type=int, default=S)
    ev.add_argument("--csv", default=S, help="prefix for estimates/heterogeneity CSV tables")

    dg = sub.add_parser("diagnose", help="log validation plus behavior-model diagnostics")
    common(dg)
    dg.add_argument("--log", required=True)
    dg.add_argument("--clip", type=float, default=S)
    dg.add_argument("--folds", type=int, default=S)
    dg.add_argument("--eps", type=float, default=S)

    sm = sub.add_parser("simulate", help="hidden-archetype simulation")
    common(sm)
    sm.add_argument("--policy", action="append", default=S,
                    choices=["heuristic", "personalized", "curiosity", "all"])
    sm.add_argument("--lambda", dest="lam", type=float, default=S)
    sm.add_argument("--k", type=int, default=S)
    sm.add_argument("--episodes", type=int, default=S)
    sm.add_argument("--rollouts", type=int, default=S)
    sm.add_argument("--threads", type=int, default=S)
    sm.add_argument("--csv", default=S)
    sm.add_argument("--traces", default=S, help="write per-episode traces as JSON lines")

    sy = sub.add_parser("synth", help="synthetic logged-bandit data with analytic truth")
    common(sy)
    sy.add_argument("--spec", default=S, help="preset name or spec JSON file")
    sy.add_argument("--truth", default=S, help="truth sidecar path (default: <out>.truth.json)")
    sy.add_argument("--n-sessions", dest="n_sessions", type=int, default=S)
    return parser


def resolve(ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[ns.command])
    given = vars(ns).copy()
    config_path = given.pop("config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {ns.command}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(given)
    if isinstance(cfg.get("policy"), str):
        cfg["policy"] = [cfg["policy"]]
    _check(cfg)
    return cfg


def _check(cfg: dict) -> None:
    cmd = cfg["command"]
    if "clip" in cfg and not cfg["clip"] > 0:
        raise UsageError("clip must be > 0")
    if "eps" in cfg and not 0 < cfg["eps"] < 0.125:
        raise UsageError("eps must lie in (0, 0.125)")
    if cfg.get("folds") is not None and cfg["folds"] < 2:
        raise UsageError("folds must be >= 2")
    if cmd == "evaluate":
        if cfg["n_boot"] != 0 and cfg["n_boot"] < 100:
            raise UsageError("n_boot must be 0 (no intervals) or >= 100")
        if not 0 < cfg["level"] < 1:
            raise UsageError("level must lie in (0, 1)")
    if cmd in ("evaluate", "simulate") and cfg["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if cmd in ("simulate", "synth") and cfg["seed"] is None:
        raise UsageError(f"{cmd} requires --seed")
    if cmd == "simulate":
        if cfg["episodes"] < 1:
            raise UsageError("episodes must be >= 1")
        if cfg["rollouts"] < 1:
            raise UsageError("rollouts must be >= 1")
        if cfg["lam"] < 0 or cfg["k"] < 0:
            raise UsageError("lambda and k must be >= 0")
    if cmd == "synth" and cfg["out"] is None:
        raise UsageError("synth requires --out")


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load_sessions(path: str):
    try:
        with open(path, "rb") as fh:
            return parse_log(fh)
    except OSError as exc:
        raise UsageError(f"cannot read log {path}: {exc}") from exc


def _target_policies(names: list[str], frame, eps: float) -> list:
    out = []
    for name in names:
        if name == "all":
            out.extend(standard_policies(frame, eps=eps))
        elif Path(name).suffix == ".json":
            try:
                out.append(PolicySpec.load(name))
            except OSError as exc:
                raise UsageError(f"cannot read policy {name}: {exc}") from exc
        else:
            try:
                spec = PolicySpec.named(name, eps=eps)
            except ContractError as exc:
                raise UsageError(str(exc)) from exc
            out.append(always_tool_from_log(frame, eps=eps) if spec.name is PolicyName.ALWAYS_TOOL else spec)
    return out


def cmd_evaluate(cfg: dict) -> int:
    sessions = _load_sessions(cfg["log"])
    frame = build_frame(sessions)
    policies = _target_policies(cfg["policy"], frame, cfg["eps"])
    report = evaluate(
        sessions, policies, reward=cfg["reward"], n_boot=cfg["n_boot"], clip=cfg["clip"],
        seed=cfg["seed"], n_folds=cfg["folds"], eps=cfg["eps"], user_reward=cfg["user_reward"],
        level=cfg["level"], workers=cfg["threads"], config=_public(cfg),
    )
    _emit(report.to_json(), cfg["out"])
    if cfg["csv"]:
        Path(f"{cfg['csv']}_estimates.csv").write_text(report.estimates_csv())
        Path(f"{cfg['csv']}_archetypes.csv").write_text(report.heterogeneity_csv())
    if report.failed:
        failures = [f"{e.policy}: {err}" for e in report.estimates for err in e.errors]
        _error("estimation", "; ".join(failures))
        return EXIT_ESTIMATION
    return EXIT_OK


def cmd_diagnose(cfg: dict) -> int:
    sessions = _load_sessions(cfg["log"])
    validation = validate_sessions(sessions)
    frame = build_frame(sessions)
    ctx = fit_context(frame, n_folds=cfg["folds"], eps=cfg["eps"], seed=cfg["seed"])
    per_policy = {}
    for policy in standard_policies(frame, eps=cfg["eps"]):
        per_policy[policy.display_name] = diagnostics(ctx.ratios(policy, cfg["clip"]), frame.rated, ctx).to_dict()
    doc = {
        "schema_version": DIAG_SCHEMA_VERSION,
        "config": _public(cfg),
        "seed": cfg["seed"],
        "validation": validation.to_dict(),
        "policies": per_policy,
    }
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", cfg["out"])
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    try:
        sim_cfg = SimConfig.from_dict(cfg["sim"]) if cfg["sim"] else SimConfig()
    except (ContractError, TypeError) as exc:
        raise UsageError(f"invalid simulator config: {exc}") from exc
    schedule = CuriositySchedule(cfg["lam"], cfg["k"])
    names = cfg["policy"]
    chosen = list(SimPolicy) if "all" in names else [SimPolicy(n) for n in dict.fromkeys(names)]
    results, traces = [], []
    for policy in chosen:
        metrics, episodes = run_policy(
            policy, cfg["episodes"], schedule, cfg["seed"], sim_cfg,
            n_rollouts=cfg["rollouts"], return_traces=True, workers=cfg["threads"],
        )
        results.append(metrics.to_dict())
        if cfg["traces"]:
            traces.extend(
                json.dumps({"policy": metrics.policy, **tr.to_dict()}, sort_keys=True)
                for rolls in episodes for tr in rolls
            )
    doc = {
        "schema_version": SIM_SCHEMA_VERSION,
        "config": _public(cfg),
        "simulator": sim_cfg.to_dict(),
        "seed": cfg["seed"],
        "metrics": [_nan_to_none(r) for r in results],
    }
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", cfg["out"])
    if cfg["csv"]:
        cols = ["policy", "final_return", "goal_success", "pass_at_3", "trait_id_turn",
                "trait_id_rate", "trait_accuracy", "archetype_alignment"]
        lines = [",".join(cols)]
        for r in results:
            lines.append(",".join([r["policy"]] + [f"{r[c]:.6f}" for c in cols[1:]]))
        Path(cfg["csv"]).write_text("\n".join(lines) + "\n")
    if cfg["traces"]:
        Path(cfg["traces"]).write_text("\n".join(traces) + "\n")
    return EXIT_OK


def cmd_synth(cfg: dict) -> int:
    try:
        spec = resolve_spec(cfg["spec"])
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"cannot load spec {cfg['spec']}: {exc}") from exc
    if cfg["n_sessions"] is not None:
        spec = type(spec).from_dict({**spec.to_dict(), "n_sessions": cfg["n_sessions"]})
    log = generate_synthetic_bandit_log(spec, cfg["seed"])
    Path(cfg["out"]).write_text(serialize_log(log.sessions))
    truth_path = cfg["truth"] or f"{cfg['out']}.truth.json"
    Path(truth_path).write_text(log.truth_json() + "\n")
    return EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "diagnose": cmd_diagnose, "simulate": cmd_simulate, "synth": cmd_synth}


def _public(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in ("out", "csv", "traces", "threads", "truth")}


def _nan_to_none(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and v != v else v) for k, v in d.items()}


def _error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message, **extra}}, sort_keys=True) + "\n")


def main(argv: Optional[list[str]] = None) -> int:
    ns = _build_parser().parse_args(argv)
    try:
        cfg = resolve(ns)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        _error("usage", str(exc))
        return EXIT_USAGE
    except ParseError as exc:
        _error("validation", str(exc), line=exc.line_no)
        return EXIT_VALIDATION
    except ValidationError as exc:
        _error("validation", str(exc), session_id=exc.session_id)
        return EXIT_VALIDATION
    except EstimationError as exc:
        _error("estimation", str(exc))
        return EXIT_ESTIMATION
    except ContractError as exc:
        _error("usage", str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
