"""Command line: generate scenarios, run pipeline stages, emit plot data.

Layout under the run root::

    scenarios/s00000.jsonl ... split.txt
    features/s00000.jsonl ... index.txt
    checkpoints/<model>_<fold>.ckpt
    reports/eval.txt eval.kv eval_items.tsv brake.txt brake.kv
    plots/*.tsv
"""

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from oie import artifacts as A
from oie import experiments as E
from oie import model as M
from oie.config import RunConfig, atomic_write, data_hash, load_config, scenario_hash, train_hash
from oie.errors import InvalidConfig, IoFailure, MissingPrerequisite, OIEError, ProvenanceMismatch, UnknownKind
from oie.evaluation import SUBSETS, build_items, precision_recall_curve
from oie.scenario_sim import (
    GOALS,
    dumps_scenario,
    generate_scenario,
    loads_scenario,
)

STAGES = ("featurize", "train", "eval", "brake")
PLOT_KINDS = ("ir-profiles", "pr-curves", "ap-bars")
MODEL_KINDS = tuple(sorted(E.TRAINED))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--config", help="sectioned key = value run configuration")
    p.add_argument("--seed", type=int, help="training / random-baseline seed")
    p.add_argument("--out", help="run root directory (overrides the config)")
    p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser():
    parser = _Parser(prog="oie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    gen = sub.add_parser("generate", help="simulate scenarios and write the fold manifest")
    gen.add_argument("--seeds", required=True, help="range like 0-299, or a comma list")
    _common(gen)
    pipe = sub.add_parser("pipeline", help="run one pipeline stage")
    pipe.add_argument("stage", choices=STAGES)
    _common(pipe)
    plot = sub.add_parser("plot", help="write plot-ready column files")
    plot.add_argument("--kind", required=True)
    plot.add_argument("--input", help="report or scenario file to plot from")
    _common(plot)
    return parser


def parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            seeds.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError as exc:
            raise UsageError(f"bad seed range {text!r}") from exc
    if not seeds:
        raise UsageError("empty seed range")
    return sorted(set(seeds))


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out:
        cfg = dataclasses.replace(cfg, root=args.out)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=args.seed))
    return cfg.validate()


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _generate_one(job):
    seed, scenario_config, path = job
    sc = generate_scenario(seed, scenario_config)
    atomic_write(path, dumps_scenario(sc))
    return sc.id, sc.maneuver, [a.goal_label for a in sc.annotations]


def cmd_generate(cfg, seeds, force=False, jobs=1):
    out = cfg.scenarios_dir
    targets = [out / f"s{s:05d}.jsonl" for s in seeds] + [out / "split.txt"]
    existing = [t for t in targets if t.exists()]
    if existing and not force:
        raise IoFailure(f"refusing to overwrite {len(existing)} existing files in {out} (use --force)")
    work = [(s, cfg.scenario, out / f"s{s:05d}.jsonl") for s in seeds]
    results = _map(_generate_one, work, jobs)
    folds = E.assign_folds(seeds)
    lines = [f"s{s:05d} {folds[s]}" for s in seeds]
    atomic_write(out / "split.txt", A.header(scenario_hash=scenario_hash(cfg)) + "\n".join(lines) + "\n")
    balance = {p: {g: 0 for g in GOALS} for p in E.PARTS}
    for (sid, maneuver, labels), s in zip(results, seeds):
        balance[folds[s]][maneuver] += 1
    for part in E.PARTS:
        counts = " ".join(f"{g}={balance[part][g]}" for g in GOALS)
        _log(f"{part}: {sum(balance[part].values())} scenarios ({counts})")
    return [r[0] for r in results]


def read_manifest(cfg):
    path = cfg.scenarios_dir / "split.txt"
    text = A.read_text(path, "split manifest")
    A.require_hash(A.read_header(text), "scenario_hash", scenario_hash(cfg), path)
    return [tuple(line.split()) for line in A._body(text)]


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


def _map(fn, work, jobs):
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, work))
    return [fn(w) for w in work]


def _featurize_one(job):
    sid, fold, src, dst, settings, dhash = job
    sc = loads_scenario(A.read_text(src, f"scenario {sid}"))
    clips = E.build_clips(sc, settings, fold=fold)
    atomic_write(dst, A.dumps_clips(clips, data_hash=dhash, scenario=sid))
    return sid


def cmd_featurize(cfg, jobs=1):
    manifest = read_manifest(cfg)
    dhash = data_hash(cfg)
    settings = cfg.data_settings()
    work = [
        (sid, fold, cfg.scenarios_dir / f"{sid}.jsonl", cfg.features_dir / f"{sid}.jsonl", settings, dhash)
        for sid, fold in manifest
    ]
    _map(_featurize_one, work, jobs)
    index = "".join(f"{sid} {fold}\n" for sid, fold in manifest)
    atomic_write(cfg.features_dir / "index.txt", A.header(data_hash=dhash) + index)


def load_clips(cfg):
    index_path = cfg.features_dir / "index.txt"
    text = A.read_text(index_path, "feature index (run `pipeline featurize`)")
    dhash = data_hash(cfg)
    A.require_hash(A.read_header(text), "data_hash", dhash, index_path)
    clips = []
    for line in A._body(text):
        sid = line.split()[0]
        path = cfg.features_dir / f"{sid}.jsonl"
        ftext = A.read_text(path, f"features for {sid}")
        A.require_hash(A.read_header(ftext), "data_hash", dhash, path)
        clips.extend(A.loads_clips(ftext))
    return clips


def checkpoint_path(cfg, kind, fold):
    return cfg.checkpoints_dir / f"{kind}_{fold}.ckpt"


def _train_one(job):
    cfg, kind, fold, train_clips = job
    params, history = E.train_kind(kind, train_clips, cfg.train, cfg.pipeline.hidden)
    extra = {"data_hash": data_hash(cfg), "kind": kind, "fold": fold, "seed": cfg.train.seed,
             "final_loss": history[-1]["loss"] if history else None}
    atomic_write(checkpoint_path(cfg, kind, fold), M.dumps_checkpoint(params, train_hash(cfg), extra))
    return kind, fold


def cmd_train(cfg, jobs=1):
    clips = load_clips(cfg)
    work = []
    for fold in E.PARTS:
        E.check_hygiene(clips, fold)
        train, _ = E.split(clips, fold)
        work.extend((cfg, kind, fold, train) for kind in MODEL_KINDS)
    for kind, fold in _map(_train_one, work, jobs):
        _log(f"trained {kind} on the parts other than {fold}")


def load_models(cfg, kinds):
    """Checkpoints for every fold; all must come from this run's settings."""
    expected = train_hash(cfg)
    models, seen = {}, set()
    for fold in E.PARTS:
        for kind in kinds:
            path = checkpoint_path(cfg, kind, fold)
            params, head = M.loads_checkpoint(A.read_text(path, f"checkpoint {path.name} (run `pipeline train`)"))
            seen.add((head["config_hash"], head.get("extra", {}).get("seed")))
            if head["config_hash"] != expected:
                raise ProvenanceMismatch(f"{path}: config_hash={head['config_hash']}, expected {expected}")
            models[(kind, fold)] = params
    if len(seen) > 1:
        raise ProvenanceMismatch(f"checkpoints come from mixed runs: {sorted(map(str, seen))}")
    return models


def _fmt(v):
    return "   n/a" if v is None else f"{v:6.1f}"


def eval_table(reports):
    """Per-fold rows and fold-averaged rows: baseline x (Lt, St, Rt, All, mAP)."""
    cols = SUBSETS + ("mAP",)
    lines = ["baseline       fold  " + "  ".join(f"{c:>6}" for c in cols)]
    for name in E.BASELINES:
        per = [reports[(name, f)] for f in E.PARTS]
        for r in per:
            vals = [r.ap.get(c) for c in SUBSETS] + [r.category_ap.get("mAP")]
            lines.append(f"{name:<14} {r.fold:<5} " + "  ".join(_fmt(v) for v in vals))
        mean = []
        for c in cols:
            vs = [(r.category_ap.get("mAP") if c == "mAP" else r.ap.get(c)) for r in per]
            vs = [v for v in vs if v is not None]
            mean.append(float(np.mean(vs)) if vs else None)
        lines.append(f"{name:<14} {'avg':<5} " + "  ".join(_fmt(v) for v in mean))
    return "\n".join(lines) + "\n"


def cmd_eval(cfg):
    clips = load_clips(cfg)
    models = load_models(cfg, ("goalVisual", "visual", "visualImage"))
    reports, values, items = {}, {}, []
    for fold in E.PARTS:
        E.check_hygiene(clips, fold)
        _, test = E.split(clips, fold)
        fold_models = {k: models[(k, fold)] for k in ("goalVisual", "visual", "visualImage")}
        for name in E.BASELINES:
            r = E.run_baseline(name, fold, clips, models=fold_models, seed=cfg.train.seed)
            reports[(name, fold)] = r
            for sub in SUBSETS:
                values[f"{name}.{fold}.{sub}"] = r.ap.get(sub)
            for cat, v in r.category_ap.items():
                values[f"{name}.{fold}.{cat}"] = v
            scores = E.baseline_scores(name, test, fold_models, cfg.train.seed)
            for score, label, goal, _ in build_items([c.truth for c in test], [c.last_boxes for c in test], scores):
                items.append(f"{name}\t{fold}\t{goal}\t{score!r}\t{label}")
    meta = {"config_hash": train_hash(cfg), "data_hash": data_hash(cfg), "seed": cfg.train.seed}
    out = cfg.reports_dir
    atomic_write(out / "eval.txt", A.header(**meta) + eval_table(reports))
    atomic_write(out / "eval.kv", A.dumps_key_values(values, **meta))
    atomic_write(out / "eval_items.tsv", A.header(**meta) + "baseline\tfold\tgoal\tscore\tlabel\n" + "\n".join(items) + "\n")
    return reports


def cmd_brake(cfg):
    clips = load_clips(cfg)
    models = load_models(cfg, ("goalVisual", "brake"))
    values, lines = {}, ["fold  weighted  uniform"]
    for fold in E.PARTS:
        _, test = E.split(clips, fold)
        imp = E.score_clips(models[("goalVisual", fold)], test)
        br = E.score_clips(models[("brake", fold)], test)
        w, u = E.brake_experiment(test, imp, br)
        values[f"{fold}.weighted"], values[f"{fold}.uniform"] = w, u
        lines.append(f"{fold:<5} {w:8.2f} {u:8.2f}")
    meta = {"config_hash": train_hash(cfg), "data_hash": data_hash(cfg)}
    atomic_write(cfg.reports_dir / "brake.txt", A.header(**meta) + "\n".join(lines) + "\n")
    atomic_write(cfg.reports_dir / "brake.kv", A.dumps_key_values(values, **meta))
    return values


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------


def _columns(names, rows):
    out = ["\t".join(names)]
    out.extend("\t".join(repr(float(v)) if not isinstance(v, str) else v for v in row) for row in rows)
    return "\n".join(out) + "\n"


def plot_ir_profiles(scenario_text):
    """Near-point and mean IR of the CAN-derived profile at every clip frame."""
    from oie.features import FeatureConfig
    from oie.path_geometry import ir_profile_from_can
    from oie.scenario_sim import FRAME_RATE, derive_can

    sc = loads_scenario(scenario_text)
    L = FeatureConfig().horizon
    rows = []
    for f in range(len(sc.annotations)):
        ir = ir_profile_from_can(derive_can(sc.ego, f, L), 1.0, L).values
        rows.append((f, f / FRAME_RATE, ir[0], ir.mean(), ir.min()))
    return sc.id, _columns(["frame", "time_s", "ir_near", "ir_mean", "ir_min"], rows)


def plot_pr_curves(items_text):
    groups = {}
    for line in A._body(items_text)[1:]:
        name, fold, goal, score, label = line.split("\t")
        for key in ((name, goal), (name, "All")):
            groups.setdefault(key, ([], []))
            groups[key][0].append(float(score))
            groups[key][1].append(int(label))
    out = {}
    for (name, subset), (scores, labels) in sorted(groups.items()):
        recall, precision = precision_recall_curve(scores, labels)
        out[f"pr_{name}_{subset}.tsv"] = _columns(["recall", "precision"], zip(recall, precision))
    return out


def plot_ap_bars(kv_text):
    values = A.loads_key_values(kv_text)
    rows = []
    for name in E.BASELINES:
        row = [name]
        for sub in SUBSETS:
            vs = [values.get(f"{name}.{f}.{sub}") for f in E.PARTS]
            vs = [v for v in vs if v is not None]
            row.append(float(np.mean(vs)) if vs else float("nan"))
        rows.append(row)
    return _columns(["baseline"] + list(SUBSETS), rows)


def _one_per_maneuver(directory):
    """First scenario file (by name) for each maneuver."""
    import json

    picked = {}
    for path in sorted(Path(directory).glob("s*.jsonl")):
        with path.open() as fh:
            maneuver = json.loads(fh.readline()).get("maneuver")
        picked.setdefault(maneuver, path)
        if len(picked) == len(GOALS):
            break
    return [picked[g] for g in GOALS if g in picked]


def cmd_plot(cfg, kind, source=None):
    if kind not in PLOT_KINDS:
        raise UnknownKind(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    plots = Path(cfg.root) / "plots"
    written = []
    if kind == "ir-profiles":
        sources = [Path(source)] if source else _one_per_maneuver(cfg.scenarios_dir)
        if not sources:
            raise MissingPrerequisite(f"no scenarios under {cfg.scenarios_dir}")
        for src in sources:
            sid, text = plot_ir_profiles(A.read_text(src, "scenario"))
            written.append(plots / f"ir_{sid}.tsv")
            atomic_write(written[-1], text)
        return written
    default = {"pr-curves": "eval_items.tsv", "ap-bars": "eval.kv"}[kind]
    path = Path(source) if source else cfg.reports_dir / default
    text = A.read_text(path, "report (run `pipeline eval`)")
    if not A._body(text):
        raise IoFailure(f"report {path} is empty")
    if kind == "pr-curves":
        for name, body in plot_pr_curves(text).items():
            written.append(plots / name)
            atomic_write(written[-1], body)
    else:
        written.append(plots / "ap_bars.tsv")
        atomic_write(written[-1], plot_ap_bars(text))
    return written


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("choose a command: generate, pipeline or plot")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    cfg = resolve_config(args)
    if args.command == "generate":
        cmd_generate(cfg, parse_seeds(args.seeds), force=args.force, jobs=args.jobs)
    elif args.command == "pipeline":
        if args.stage == "featurize":
            cmd_featurize(cfg, args.jobs)
        elif args.stage == "train":
            cmd_train(cfg, args.jobs)
        elif args.stage == "eval":
            sys.stdout.write(eval_table(cmd_eval(cfg)))
        else:
            for k, v in cmd_brake(cfg).items():
                print(f"{k} = {v:.2f}")
    else:
        for path in cmd_plot(cfg, args.kind, args.input):
            print(path)


def main(argv=None):
    try:
        run(argv)
    except UsageError as exc:
        print(f"oie: usage error: {exc}", file=sys.stderr)
        return 1
    except (UnknownKind, InvalidConfig) as exc:
        print(f"oie: {exc}", file=sys.stderr)
        return 1
    except OIEError as exc:
        print(f"oie: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
