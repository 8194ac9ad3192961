"""Command-line entry point: prepare, train, eval, attack, export-embeddings, sweep.

A run is described by one JSON document such as::

    {
      "seed": 0,
      "dataset": {"kind": "synthetic", "n_users": 2000, "rho": 1.0},
      "split": {"ratios": [0.7, 0.1, 0.2], "public_fraction": 0.8},
      "train": {"lam": 1.0, "max_epochs": 50},
      "defense": {"strategy": "adversarial"},
      "eval": {"k": [10], "n_negatives": 99, "window": 10},
      "attack": {"max_epochs": 200}
    }

Every section is optional. A single seed drives data generation, splits,
training, defenses and the test-time attacker; ``PRIVNET_SEED`` overrides the
file and ``--seed`` overrides both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, nn
from .data import (
    SplitSpec,
    SyntheticConfig,
    content_hash,
    filter_users,
    generate_synthetic,
    load_container,
    load_movielens,
    save_container,
)
from .defenses import DefenseConfig, apply_defense
from .errors import ConfigError, DataError, FormatError, PrivNetError
from .eval import AttackConfig, EvalReport, evaluate_model, test_time_attack, write_embeddings
from .eval.privacy import user_representations
from .train import LAMBDA_GRID, PUBLIC_FRACTION_GRID, TrainConfig, build_models, fit, write_history

log = logging.getLogger("privnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


# -- configuration -----------------------------------------------------------

def _pick(cls, section: dict, name: str, drop=("seed",)) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ConfigError(f"unknown {name} options: {sorted(unknown)}")
    bad = set(section) & set(drop)
    if bad:
        raise ConfigError(f"set the seed at the top level, not in {name}")
    return dict(section)


@dataclass
class ExperimentConfig:
    seed: int = 0
    dataset: dict = field(default_factory=lambda: {"kind": "synthetic"})
    split: SplitSpec = field(default_factory=SplitSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    ks: tuple[int, ...] = (10,)
    n_negatives: int = 99
    window: int = 10
    attack: AttackConfig = field(default_factory=AttackConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {"seed", "dataset", "split", "train", "defense", "eval", "attack"}
        if unknown:
            raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
        seed = int(d.get("seed", 0))
        dataset = dict(d.get("dataset", {"kind": "synthetic"}))
        kind = dataset.get("kind", "synthetic")
        if kind == "synthetic":
            syn = {k: v for k, v in dataset.items() if k != "kind"}
            _pick(SyntheticConfig, syn, "dataset")
            SyntheticConfig(**syn, seed=seed).validate()
        elif kind == "movielens":
            missing = {"ratings", "users", "movies", "year_threshold"} - set(dataset)
            if missing:
                raise ConfigError(f"movielens dataset needs {sorted(missing)}")
        else:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        split = _pick(SplitSpec, d.get("split", {}), "split")
        if "ratios" in split:
            split["ratios"] = tuple(split["ratios"])
        train = _pick(TrainConfig, d.get("train", {}), "train")
        defense = _pick(DefenseConfig, d.get("defense", {}), "defense")
        attack = _pick(AttackConfig, d.get("attack", {}), "attack")
        ev = dict(d.get("eval", {}))
        unknown = set(ev) - {"k", "n_negatives", "window"}
        if unknown:
            raise ConfigError(f"unknown eval options: {sorted(unknown)}")
        ks = ev.get("k", [10])
        ks = tuple(int(k) for k in (ks if isinstance(ks, (list, tuple)) else [ks]))
        if not ks or min(ks) < 1:
            raise ConfigError(f"eval K values must be positive, got {ks}")
        try:
            cfg = cls(seed=seed, dataset=dataset,
                      split=SplitSpec(**split, seed=seed),
                      train=TrainConfig(**train, seed=seed),
                      defense=DefenseConfig(**defense, seed=seed),
                      ks=ks, n_negatives=int(ev.get("n_negatives", 99)),
                      window=int(ev.get("window", 10)),
                      attack=AttackConfig(**attack, seed=seed))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if cfg.n_negatives < 1 or cfg.window < 1:
            raise ConfigError("n_negatives and window must be positive")
        return cfg

    def to_dict(self) -> dict:
        split = asdict(self.split)
        split["ratios"] = list(split["ratios"])
        return {
            "seed": self.seed,
            "dataset": dict(self.dataset),
            "split": {k: v for k, v in split.items() if k != "seed"},
            "train": {k: v for k, v in self.train.to_dict().items() if k != "seed"},
            "defense": {k: v for k, v in self.defense.to_dict().items() if k != "seed"},
            "eval": {"k": list(self.ks), "n_negatives": self.n_negatives, "window": self.window},
            "attack": {k: v for k, v in asdict(self.attack).items() if k != "seed"},
        }

    @property
    def method(self) -> str:
        name = self.defense.strategy
        return name if self.train.transfer else f"{name}/no-transfer"


# flag name -> (section, key, type); names follow the hyperparameter table
OVERRIDES = {
    "lambda": ("train", "lam", float),
    "batch_size": ("train", "batch_size", int),
    "learning_rate": ("train", "learning_rate", float),
    "epochs": ("train", "max_epochs", int),
    "patience": ("train", "patience", int),
    "clip_norm": ("train", "clip_norm", float),
    "embed_dim": ("train", "embed_dim", int),
    "neg_ratio": ("train", "neg_ratio", int),
    "transfer_layers": ("train", "n_transfer_layers", int),
    "strategy": ("defense", "strategy", str),
    "noise_level": ("defense", "noise_level", float),
    "dummy_count": ("defense", "dummy_count", int),
    "public_fraction": ("split", "public_fraction", float),
}


def load_config(path, args=None, env=None) -> ExperimentConfig:
    """Merge file values, then ``PRIVNET_SEED``, then command-line flags."""
    env = os.environ if env is None else env
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    if env.get("PRIVNET_SEED"):
        try:
            raw["seed"] = int(env["PRIVNET_SEED"])
        except ValueError:
            raise ConfigError(f"PRIVNET_SEED must be an integer, got {env['PRIVNET_SEED']!r}") from None
    if args is not None:
        if getattr(args, "seed", None) is not None:
            raw["seed"] = args.seed
        for flag, (section, key, _) in OVERRIDES.items():
            value = getattr(args, flag, None)
            if value is not None:
                raw.setdefault(section, {})[key] = value
        if getattr(args, "no_transfer", False):
            raw.setdefault("train", {})["transfer"] = False
    return ExperimentConfig.from_dict(raw)


# -- building blocks ---------------------------------------------------------

def prepare_dataset(cfg: ExperimentConfig, out_path):
    ds = cfg.dataset
    if ds.get("kind", "synthetic") == "synthetic":
        syn = SyntheticConfig(**{k: v for k, v in ds.items() if k != "kind"}, seed=cfg.seed)
        source, target, table = generate_synthetic(syn)
        meta = {"kind": "synthetic", "config": syn.to_dict()}
    else:
        source, target, table = load_movielens(ds["ratings"], ds["users"], ds["movies"],
                                               ds["year_threshold"])
        source, target, table = filter_users(source, target, table, min_source=2, min_target=3)
        meta = {"kind": "movielens", "year_threshold": ds["year_threshold"]}
    data = save_container(out_path, source, target, table, cfg.split, cfg.window,
                          cfg.n_negatives, meta)
    return data, source, target


def dataset_summary(source, target) -> str:
    rows = [("domain", "users", "items", "interactions", "density")]
    for log_ in (source, target):
        dens = log_.n_events / max(1, log_.n_users * log_.n_items)
        rows.append((log_.domain, str(log_.n_users), str(log_.n_items), str(log_.n_events),
                     f"{100 * dens:.3f}%"))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append(f"shared users: {source.n_users}")
    return "\n".join(lines)


def load_run_data(cfg: ExperimentConfig, data_path):
    """Container plus the run's public-user partition and source-side defense."""
    path = Path(data_path)
    if not path.exists():
        raise DataError(f"dataset container {path} not found; run 'privnet prepare' first")
    data, _, payload = load_container(path)
    stored = payload.get("split", {})
    same_split = (stored.get("public_fraction") == cfg.split.public_fraction
                  and stored.get("seed") == cfg.split.seed
                  and tuple(stored.get("ratios", ())) == tuple(cfg.split.ratios))
    if not same_split:
        data = data.with_public_fraction(cfg.split.public_fraction, cfg.split.seed, cfg.split.ratios)
    if cfg.defense.strategy in ("ldp_noise", "blurme"):
        data = data.with_source(apply_defense(data.source, cfg.defense))
    return data


def _effective_train(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig.from_dict({**cfg.train.to_dict(),
                                  "lam": cfg.defense.effective_lambda(cfg.train.lam)})


def run_training(cfg: ExperimentConfig, data_path, run_dir, evaluate: bool = True) -> dict:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    data = load_run_data(cfg, data_path)
    tcfg = _effective_train(cfg)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    start = time.time()
    result = fit(data, tcfg, callback=lambda e, row: log.info("epoch %d val HR@%d %.4f",
                                                              e, tcfg.eval_k, row["val_hr"]))
    write_history(run_dir / "history.csv", result.history)
    nn.save_checkpoint(run_dir / "model.ckpt", result.model.state_dict(),
                       {"kind": "recommender", "model": result.model.config.to_dict(),
                        "best_epoch": result.best_epoch})
    nn.save_checkpoint(run_dir / "attacker.ckpt", result.attacker.state_dict(),
                       {"kind": "attacker", "class_counts": result.attacker.class_counts})
    info = {"seed": cfg.seed, "dataset": str(Path(data_path).resolve()),
            "dataset_hash": content_hash(data_path), "best_epoch": result.best_epoch,
            "epochs_run": len(result.history), "train_seconds": round(time.time() - start, 3),
            "effective_lambda": tcfg.lam, "method": cfg.method, "version": __version__}
    (run_dir / "run.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    if evaluate:
        report = evaluate_run(run_dir)
        info["report"] = report
    return info


def _load_run(run_dir, data_path=None):
    run_dir = Path(run_dir)
    try:
        cfg = ExperimentConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
        info = json.loads((run_dir / "run.json").read_text())
    except FileNotFoundError as exc:
        raise DataError(f"{run_dir} is not a run directory ({exc.filename} missing)") from None
    data_path = Path(data_path or info["dataset"])
    if not data_path.exists():
        raise DataError(f"dataset container {data_path} not found")
    if content_hash(data_path) != info["dataset_hash"]:
        raise DataError(f"{data_path} differs from the container this run was trained on")
    data = load_run_data(cfg, data_path)
    model, attacker = build_models(data, _effective_train(cfg))
    state, _ = nn.load_checkpoint(run_dir / "model.ckpt")
    model.load_state_dict(state)
    return cfg, info, data, model


def evaluate_run(run_dir, data_path=None) -> EvalReport:
    cfg, info, data, model = _load_run(run_dir, data_path)
    report, _, reps = evaluate_model(model, data, cfg.ks, cfg.attack, cfg.method,
                                     info["effective_lambda"], cluster_seed=cfg.seed)
    run_dir = Path(run_dir)
    report.write_csv(run_dir / "report.csv")
    (run_dir / "report.txt").write_text(report.table() + "\n")
    write_embeddings(run_dir / "embeddings.tsv", reps)
    return report


# -- commands ----------------------------------------------------------------

def cmd_prepare(args) -> int:
    cfg = load_config(args.config, args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _, source, target = prepare_dataset(cfg, out)
    print(dataset_summary(source, target))
    print(f"wrote {out} (sha1 {content_hash(out)})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args)
    info = run_training(cfg, args.data, args.out, evaluate=not args.no_eval)
    report = info.pop("report", None)
    print(f"best epoch {info['best_epoch']} of {info['epochs_run']}; run saved to {args.out}")
    if report is not None:
        print(report.table())
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate_run(args.run, args.data)
    print(report.table())
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg, info, data, model = _load_run(args.run, args.data)
    outcome = test_time_attack(model, data, cfg.attack)
    report = EvalReport()
    for res in outcome.results:
        for metric, value in (("Precision", res.precision), ("Recall", res.recall),
                              ("F1", res.f1), ("F1-majority", res.majority_f1)):
            report.add(cfg.method, info["effective_lambda"], metric, value, res.attribute)
    report.write_csv(Path(args.run) / "attack.csv")
    print(report.table())
    print(f"attacker trained for {outcome.epochs} epochs on {len(data.privacy.fit)} public users")
    return EXIT_OK


def cmd_export(args) -> int:
    _, _, data, model = _load_run(args.run, args.data)
    out = Path(args.out) if args.out else Path(args.run) / "embeddings.tsv"
    write_embeddings(out, user_representations(model, data))
    print(f"wrote {data.n_users} user vectors to {out}")
    return EXIT_OK


def _sweep_one(job):
    cfg_dict, data_path, run_dir = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    run_training(cfg, data_path, run_dir)
    return run_dir


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args)
    if args.grid == "lambda":
        values = args.values or list(LAMBDA_GRID)
        section, key, label = "train", "lam", "lambda"
    else:
        values = args.values or list(PUBLIC_FRACTION_GRID)
        section, key, label = "split", "public_fraction", "public"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for v in values:
        d = cfg.to_dict()
        d[section][key] = float(v)
        ExperimentConfig.from_dict(d)  # fail fast before any training
        jobs.append((d, str(args.data), str(out / f"{label}={float(v):g}")))
    if args.parallel > 1:
        with ProcessPoolExecutor(args.parallel) as pool:
            dirs = list(pool.map(_sweep_one, jobs))
    else:
        dirs = [_sweep_one(job) for job in jobs]
    combined = EvalReport()
    for d in dirs:
        part = EvalReport.read_csv(Path(d) / "report.csv")
        if args.grid == "public_fraction":
            tag = Path(d).name
            part.rows = [type(r)(f"{r.method}[{tag}]", r.lam, r.metric, r.attribute, r.value)
                         for r in part.rows]
        combined.extend(part)
    combined.write_csv(out / "report.csv")
    (out / "report.txt").write_text(combined.table() + "\n")
    print(combined.table())
    return EXIT_OK


# -- argument parsing --------------------------------------------------------

def _add_overrides(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="overrides PRIVNET_SEED and the config seed")
    for flag, (_, _, typ) in OVERRIDES.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ)
    p.add_argument("--no-transfer", action="store_true", help="train the target-only model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privnet", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a dataset container")
    _add_overrides(p)
    p.add_argument("--out", required=True, help="container path to write")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model into a run directory")
    _add_overrides(p)
    p.add_argument("--data", required=True, help="dataset container")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--no-eval", action="store_true", help="skip the final report")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "write the evaluation report of a run"),
                                 ("attack", cmd_attack, "run the test-time attacker on a run"),
                                 ("export-embeddings", cmd_export, "export transferred user vectors")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("run", help="run directory")
        p.add_argument("--data", help="dataset container (default: the one recorded in the run)")
        if name == "export-embeddings":
            p.add_argument("--out", help="output TSV (default: <run>/embeddings.tsv)")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="one run per grid value")
    _add_overrides(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", choices=("lambda", "public_fraction"), default="lambda")
    p.add_argument("--values", type=float, nargs="+", help="grid values (default: standard grid)")
    p.add_argument("--parallel", type=int, default=1, help="number of concurrent runs")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PrivNetError, FloatingPointError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
