"""Command-line driver: ``ssx explain | eval | train | render``.

Exit codes: 0 success, 2 configuration error, 3 pipeline error. Every
stochastic choice is drawn from generators seeded with ``[seed, stream]``;
the streams are listed in the run manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, reference
from .env import (
    DEFAULT_MINIPAC_LAYOUT,
    EnvModel,
    FourRooms,
    InvalidConfiguration,
    MiniPac,
    enumerate_reachable,
    four_rooms_env,
    minipac_env,
    random_live_states,
)
from .pathgraph import local_approximation
from .pipeline import SSXParams, SSXResult, policy_reachable, run_ssx
from .policy import ScriptedMiniPacPolicy, load_policy, save_policy, value_iteration
from .render import render_explanation, line_chart

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3

# generator streams, seeded as default_rng([seed, stream])
STREAMS = {"root": 1, "eval_roots": 2, "perturbation": 3, "render": 4}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage


@contextmanager
def stage(name: str):
    try:
        yield
    except (ConfigError, PipelineError):
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
        raise PipelineError(name, exc) from exc


def rng_for(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng([seed, STREAMS[stream]])


# -- building blocks ---------------------------------------------------------

def build_env(cfg: RunConfig) -> EnvModel:
    try:
        if cfg["env.type"] == "four_rooms":
            return four_rooms_env(cfg["env.grid_size"], cfg["env.goal"])
        layout = DEFAULT_MINIPAC_LAYOUT
        if cfg["env.layout"]:
            try:
                layout = Path(cfg["env.layout"]).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read layout {cfg['env.layout']}: {exc.strerror}") from None
        return minipac_env(layout, cfg["env.scheme"], pill_duration=cfg["env.pill_duration"])
    except InvalidConfiguration as exc:
        raise ConfigError(f"invalid environment: {exc}") from None


def layout_hash(env: EnvModel) -> str:
    return hashlib.sha256(env.layout.to_text().encode()).hexdigest()


def params_from(cfg: RunConfig, seed: int) -> SSXParams:
    s = cfg.section("ssx")
    params = SSXParams(
        k=s["k"], eta=s["eta"], eps_phi=s["eps_phi"], restarts=s["restarts"], lam=s["lambda"],
        eps_g=s["eps_g"], min_gain_ratio=s["min_gain_ratio"],
        max_strategic_per_meta=s["max_strategic_per_meta"], horizon=s["horizon"],
        sample_fraction=s["sample_fraction"], seed=seed,
        normalize_counts=s["normalize_counts"], weighted_counts=s["weighted_counts"])
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params


def choose_root(cfg: RunConfig, env: EnvModel, seed: int):
    spec = cfg["root.state"]
    if spec == "start":
        return env.initial_state()
    if spec == "random":
        if not isinstance(env, MiniPac):
            raise ConfigError("root.state = random is only supported for MiniPac")
        try:
            return random_live_states(env, 1, rng_for(seed, "root"),
                                      cfg["root.min_ghost_distance"], cfg["root.pill_eaten"])[0]
        except ValueError as exc:
            raise ConfigError(f"root: {exc}") from None
    try:
        return env.decode(spec)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"cannot decode root.state {spec!r}: {exc}") from None


def build_policy(cfg: RunConfig, env: EnvModel, states):
    kind = cfg["policy.kind"]
    if kind == "scripted":
        return ScriptedMiniPacPolicy(env, temperature=cfg["policy.temperature"]), None
    if kind == "file":
        return load_policy(cfg["policy.path"], env), None
    values, policy = value_iteration(env, cfg["policy.discount"], cfg["policy.tolerance"],
                                     temperature=cfg["policy.temperature"], states=states)
    return policy, values


def explain(cfg: RunConfig, seed: int) -> tuple[EnvModel, SSXResult, object]:
    with stage("environment"):
        env = build_env(cfg)
        params = params_from(cfg, seed)
        root = choose_root(cfg, env, seed)
    with stage("states"):
        if params.horizon is None:
            states = enumerate_reachable(env, root)
        else:
            states = local_approximation(env, root, params.horizon)
    with stage("policy"):
        policy, _ = build_policy(cfg, env, states)
        if params.horizon is not None:
            states = policy_reachable(env, policy, states)
    with stage("ssx"):
        result = run_ssx(env, policy, states, params)
    return env, result, root


def explanation_doc(cfg: RunConfig, env: EnvModel, result: SSXResult, root, seed: int) -> dict:
    expl = result.explanation
    part = expl.partition
    enc = [env.encode(s) for s in result.states]
    metas = []
    for ss in expl.strategic:
        metas.append({
            "index": ss.meta_state,
            "size": int((part.assignment == ss.meta_state).sum()),
            "strategic": [enc[i] for i in ss.states],
            "strategic_indices": [int(i) for i in ss.states],
            "gains": [float(g) for g in ss.gains],
            "degenerate": ss.degenerate,
            "goal": ss.meta_state == expl.goal_meta_state,
        })
    return {
        "ssx_version": __version__,
        "config_hash": cfg.hash(),
        "seed": seed,
        "env": {"type": cfg["env.type"], "layout_hash": layout_hash(env),
                "scheme": env.reward_scheme.value},
        "params": asdict(params_from(cfg, seed)),
        "root": env.encode(root) if root is not None else None,
        "states": enc,
        "partition": part.to_json(),
        "meta_states": metas,
        "goal_meta_state": expl.goal_meta_state,
    }


def dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_manifest(out: Path, cfg: RunConfig, seed: int, command: str, files: list[str]) -> None:
    entries = {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in sorted(files)}
    doc = {
        "ssx_version": __version__,
        "command": command,
        "config_hash": cfg.hash(),
        "config": cfg.canonical().splitlines(),
        "seed": seed,
        "rng": {name: f"numpy default_rng([{seed}, {sid}])" for name, sid in STREAMS.items()},
        "files": entries,
    }
    (out / "manifest.json").write_text(dump_json(doc))


def _render(env, result_states, doc, cfg, seed) -> str:
    from .metastates import MetaStatePartition
    from .strategic import Explanation, StrategicSet

    part = MetaStatePartition(
        assignment=np.asarray(doc["partition"]["assignment"], dtype=np.int64),
        centroids=np.asarray(doc["partition"]["centroids"]), objective=doc["partition"]["objective"],
        eta=doc["partition"]["eta"], history=doc["partition"]["history"], counts=None)
    sets = [StrategicSet(m["index"], m["strategic_indices"], m["gains"], 0.0, m["degenerate"])
            for m in doc["meta_states"]]
    expl = Explanation(part, sets, doc["goal_meta_state"])
    if isinstance(env, FourRooms):
        style = {"cell": cfg["render.cell"]}
    else:
        style = {"samples": cfg["render.samples"], "cell": max(cfg["render.cell"] // 2, 6),
                 "seed": int(rng_for(seed, "render").integers(2**31))}
    return render_explanation(expl, env, result_states, **style)


# -- subcommands -------------------------------------------------------------

def cmd_explain(cfg: RunConfig, out: Path, seed: int, threads: int) -> int:
    env, result, root = explain(cfg, seed)
    with stage("serialise"):
        out.mkdir(parents=True, exist_ok=True)
        doc = explanation_doc(cfg, env, result, root, seed)
        (out / "explanation.json").write_text(dump_json(doc))
    with stage("render"):
        (out / "explanation.svg").write_text(_render(env, result.states, doc, cfg, seed))
    write_manifest(out, cfg, seed, "explain", ["explanation.json", "explanation.svg"])
    n_meta = len(doc["meta_states"])
    print(f"explained {len(result.states)} states with {n_meta} meta-states -> {out}")
    for m in doc["meta_states"]:
        flag = " (degenerate)" if m["degenerate"] else ""
        print(f"  meta-state {m['index']}: {m['size']} states, strategic {m['strategic']}{flag}")
    return EXIT_OK


def cmd_render(cfg: RunConfig, out: Path, seed: int, source: Path) -> int:
    with stage("load"):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read explanation {source}: {exc}") from None
        env = build_env(cfg)
        if doc["env"]["layout_hash"] != layout_hash(env):
            raise ConfigError("explanation was produced for a different layout")
        states = [env.decode(s) for s in doc["states"]]
    with stage("render"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "explanation.svg").write_text(_render(env, states, doc, cfg, doc.get("seed", seed)))
    write_manifest(out, cfg, seed, "render", ["explanation.svg"])
    print(f"rendered {source} -> {out / 'explanation.svg'}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: Path, seed: int) -> int:
    with stage("environment"):
        env = build_env(cfg)
        root = choose_root(cfg, env, seed)
    with stage("states"):
        horizon = cfg["ssx.horizon"]
        states = (enumerate_reachable(env, root) if horizon is None
                  else local_approximation(env, root, horizon))
    with stage("train"):
        values, policy = value_iteration(env, cfg["policy.discount"], cfg["policy.tolerance"],
                                         temperature=cfg["policy.temperature"], states=states)
        out.mkdir(parents=True, exist_ok=True)
        save_policy(out / "policy.json", policy, env, values)
    write_manifest(out, cfg, seed, "train", ["policy.json"])
    print(f"value iteration converged in {values.iterations} sweeps "
          f"(residual {values.residual:.2e}) over {len(states)} states -> {out / 'policy.json'}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path, seed: int, threads: int, study: str) -> int:
    from . import evalharness as ev

    with stage("environment"):
        env = build_env(cfg)
        params = params_from(cfg, seed)
    files: list[str] = []
    out.mkdir(parents=True, exist_ok=True)

    def roots(n):
        if not isinstance(env, MiniPac):
            raise ConfigError(f"the {study} study needs a MiniPac environment")
        try:
            if cfg["eval.root_source"] == "trajectory":
                return ev.trajectory_roots(env, policy_for(), n, seed)
            return random_live_states(env, n, rng_for(seed, "eval_roots"),
                                      cfg["root.min_ghost_distance"], cfg["root.pill_eaten"])
        except ValueError as exc:
            raise ConfigError(f"eval roots: {exc}") from None

    def save_csv(name, header, rows):
        ev.write_csv(out / name, header, rows)
        files.append(name)

    def save_svg(name, text):
        (out / name).write_text(text)
        files.append(name)

    def policy_for():
        if isinstance(env, MiniPac) and cfg["policy.kind"] == "scripted":
            return ScriptedMiniPacPolicy(env, temperature=cfg["policy.temperature"])
        if cfg["policy.kind"] == "file":
            return load_policy(cfg["policy.path"], env)
        raise ConfigError("evaluation studies need policy.kind = scripted or file")

    if study == "growth":
        with stage("growth"):
            if isinstance(env, MiniPac):
                rs = roots(cfg["eval.growth_roots"])
            else:
                rng = rng_for(seed, "eval_roots")
                cells = env.layout.open_cells()
                rs = [env.decode(f"{r},{c}") for r, c in
                      (cells[i] for i in rng.integers(len(cells), size=cfg["eval.growth_roots"]))]
            rows = ev.growth_study(env, rs, cfg["eval.n_max"])
        save_csv("growth.csv", ["N", "mean_states"], rows)
        ns = [r[0] for r in rows]
        save_svg("growth.svg", line_chart(
            {"local states": (ns, [r[1] for r in rows]), "3^N": (ns, [3.0 ** n for n in ns]),
             "5^N": (ns, [5.0 ** n for n in ns])},
            xlabel="N", ylabel="unique states", title="local state-space growth", log_y=True))
        for n, v in rows:
            print(f"N={n}: {v:.1f}")
    elif study == "sampling":
        with stage("sampling"):
            rows = ev.sampling_study(env, policy_for(), roots(cfg["eval.roots"]),
                                     cfg["eval.fractions"], cfg["eval.seeds"], params,
                                     workers=threads)
        save_csv("sampling.csv",
                 ["fraction", "seed", "displacement", "count_time", "exact_time", "time_ratio"],
                 [(r.fraction, r.seed, r.displacement, r.count_time, r.exact_time, r.time_ratio)
                  for r in rows])
        fr = sorted({r.fraction for r in rows})
        disp = [np.mean([r.displacement for r in rows if r.fraction == f]) for f in fr]
        ratio = [np.mean([r.time_ratio for r in rows if r.fraction == f]) for f in fr]
        save_svg("sampling.svg", line_chart(
            {"agent displacement": (fr, disp), "time ratio": (fr, ratio)},
            xlabel="sample fraction", title="out-path sampling"))
        for f, d, t in zip(fr, disp, ratio):
            print(f"fraction {f:g}: displacement {d:.3f}, time ratio {t:.3f}")
    elif study == "horizon":
        with stage("horizon"):
            table = ev.horizon_faithfulness(env, policy_for(), roots(cfg["eval.roots"]),
                                            cfg["eval.horizons"], params, workers=threads)
        hs = table.horizons
        for e in ev.ENTITIES:
            save_csv(f"horizon_{e}.csv", ["N"] + [str(h) for h in hs],
                     [[h] + [float(x) for x in row] for h, row in zip(hs, table.tables[e])])
        gaps = sorted({abs(a - b) for a in hs for b in hs if a != b})
        series = {}
        for e in ev.ENTITIES:
            t = table.tables[e]
            series[e] = (gaps, [float(np.mean([t[i, j] for i in range(len(hs))
                                               for j in range(len(hs))
                                               if abs(hs[i] - hs[j]) == g])) for g in gaps])
        save_svg("horizon.svg", line_chart(series, xlabel="|N_i - N_j|", ylabel="distance",
                                           title="horizon faithfulness"))
        print(f"agent spearman {table.spearman():.3f}; mean distance agent "
              f"{table.mean('agent'):.3f}, ghost {table.mean('ghost'):.3f}, "
              f"food {table.mean('food'):.3f}")
    elif study == "perturbation":
        with stage("perturbation"):
            rep = ev.perturbation_stability(env, policy_for(), roots(cfg["eval.roots"]),
                                            cfg["eval.n_perturbations"], cfg["eval.n_food_removed"],
                                            int(rng_for(seed, "perturbation").integers(2**31)),
                                            params, workers=threads)
        save_csv("perturbation.csv", ["entity", "condition", "mean_distance", "trials", "seed"],
                 [(e, c, v, rep.trials, rep.seed) for (e, c), v in sorted(rep.rows.items())])
        series = {e: (list(range(len(v))), sorted(v)) for (e, _), v in sorted(rep.raw.items())}
        save_svg("perturbation.svg", line_chart(series, xlabel="trial (sorted)",
                                                ylabel="distance", title="perturbation stability"))
        for (e, c), v in sorted(rep.rows.items()):
            print(f"{e} {c}: {v:.3f}")
    elif study == "ksweep":
        with stage("ksweep"):
            if isinstance(env, MiniPac):
                root = choose_root(cfg, env, seed)
                states = local_approximation(env, root, params.horizon)
                policy = policy_for()
                states = policy_reachable(env, policy, states)
            else:
                states = enumerate_reachable(env)
                policy, _ = build_policy(cfg, env, states)
            from .pathgraph import MIN_LIKELIHOOD, build_gamma
            from .policy import induce_transition_model
            pm = build_gamma(induce_transition_model(env, policy, states, drop_below=MIN_LIKELIHOOD))
            ks = [k for k in cfg["eval.k_values"] if k <= len(states)]
            rows = ev.k_sweep(pm, None, ks, params.eta, seeds=[seed], restarts=params.restarts,
                              weighted_counts=params.weighted_counts)
        save_csv("ksweep.csv", ["k", "objective", "distance_term"], rows)
        save_svg("ksweep.svg", line_chart({"objective": ([r[0] for r in rows], [r[1] for r in rows])},
                                          xlabel="k", title="clustering objective"))
        for k, obj, _ in rows:
            print(f"k={k}: {obj:.4f}")
    else:
        raise ConfigError(f"unknown study {study!r}")
    write_manifest(out, cfg, seed, f"eval {study}", files)
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssx", description="Strategic-state explanations of policies.")
    p.add_argument("--version", action="version", version=f"ssx {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_out=True):
        sp.add_argument("--config", help="config file (section.key = value lines)")
        sp.add_argument("--out", required=False, help="output directory")
        sp.add_argument("--seed", type=int, help="master seed (overrides ssx.seed)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap for studies")

    common(sub.add_parser("explain", help="explain a policy and render the result"))
    ev = sub.add_parser("eval", help="run an evaluation study")
    common(ev)
    ev.add_argument("--study", required=True,
                    choices=["sampling", "horizon", "perturbation", "growth", "ksweep"])
    common(sub.add_parser("train", help="value iteration; writes policy.json"))
    rd = sub.add_parser("render", help="re-render an explanation JSON")
    common(rd)
    rd.add_argument("--input", required=True, help="explanation.json to render")
    sub.add_parser("config-reference", help="print every config key with its default")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "config-reference":
        sys.stdout.write(reference())
        return EXIT_OK
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config) if args.config else load_config_defaults()
        seed = cfg["ssx.seed"] if args.seed is None else args.seed
        if args.seed is not None:
            cfg = cfg.with_overrides(**{"ssx.seed": seed})
        out_dir = args.out or cfg["output.dir"]
        if not out_dir:
            raise ConfigError("no output directory: pass --out or set output.dir")
        out = Path(out_dir)
        if args.command == "explain":
            return cmd_explain(cfg, out, seed, args.threads)
        if args.command == "eval":
            return cmd_eval(cfg, out, seed, args.threads, args.study)
        if args.command == "train":
            return cmd_train(cfg, out, seed)
        return cmd_render(cfg, out, seed, Path(args.input))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


def load_config_defaults() -> RunConfig:
    from .config import defaults
    return defaults()


if __name__ == "__main__":
    sys.exit(main())
