"""End-to-end orchestration: gen -> train -> fit-detector -> eval -> report.

Stages are composable and individually seeded; every command honors
--seed and reproduces byte-identical outputs. Configuration precedence is
CLI flags > JSON config file > built-in defaults. The default output
directory comes from $CSIAUTH_OUT when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import analytic, datasets, detectors, gan, neuralnet
from .channel import NoiseModel
from .evaluate import (
    accuracy_curve,
    curves_from_confusions,
    emit_report,
    gan_decider,
    iforest_decider,
    load_confusions,
    lof_decider,
    ocsvm_decider,
    spearman_vs_snr,
    threshold_decider,
)
from .rng import RngStream
from .threshold import Threshold

DEFAULT_SEED = 7
DEFAULT_OUT = "runs"
DEFAULT_Z_MULTIPLIERS = (1.0, 3.0, 5.0, 6.0)
ANALYTIC_CONFIGS = ((1, 1), (2, 2), (4, 4), (8, 8))
ANALYTIC_MULTIPLIERS = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)

DATASET_FILES = ("master", "train", "test", "test_accidental", "test_nefarious")


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    out_dir: Path = Path(DEFAULT_OUT)
    snr_grid: tuple[float, ...] = datasets.DEFAULT_SNR_GRID
    z_multipliers: tuple[float, ...] = DEFAULT_Z_MULTIPLIERS
    jobs: int = 1
    pooled: bool = False
    gan_overrides: dict = field(default_factory=dict)
    detector_overrides: dict = field(default_factory=dict)
    analytic_trials: int = 50

    @property
    def data_dir(self) -> Path:
        return self.out_dir / "datasets"

    @property
    def model_dir(self) -> Path:
        return self.out_dir / "models"

    @property
    def report_dir(self) -> Path:
        return self.out_dir / "reports"


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """Parse 'a:b:step' into an inclusive grid."""
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a:b:step, got {text!r}") from exc
    if step <= 0 or b < a:
        raise argparse.ArgumentTypeError(f"bad grid bounds in {text!r}")
    grid = []
    v = a
    while v <= b + 1e-9:
        grid.append(round(v, 9))
        v += step
    return tuple(grid)


def parse_multipliers(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of reals, got {text!r}") from exc


def _global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed (u64)")
    parser.add_argument("--out", type=Path, default=None, metavar="DIR",
                        help="output directory (default: $CSIAUTH_OUT or ./runs)")
    parser.add_argument("--config", type=Path, default=None, metavar="JSON",
                        help="JSON config file; CLI flags override it")
    parser.add_argument("--jobs", type=int, default=None, metavar="N",
                        help="worker cap for per-SNR stages")
    parser.add_argument("--pooled", action="store_true", default=None,
                        help="train/evaluate one pooled GAN instead of one per SNR")
    parser.add_argument("--snr-grid", type=parse_snr_grid, default=None, metavar="A:B:STEP",
                        help="SNR grid in dB (default 0:30:2)")
    parser.add_argument("--z-mult", type=parse_multipliers, default=None, metavar="LIST",
                        help="threshold multipliers for the hypothesis-test baselines")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common)
    parser = argparse.ArgumentParser(
        prog="csiauth",
        description="CSI-based physical-layer authentication workbench",
    )
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen", parents=[common], help="generate all datasets")
    p.set_defaults(func=cmd_gen)
    p = sub.add_parser("train", parents=[common], help="train GAN discriminators")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("fit-detector", parents=[common], help="fit a one-class detector")
    p.add_argument("--algo", required=True, choices=("lof", "iforest", "ocsvm"))
    p.set_defaults(func=cmd_fit_detector)
    p = sub.add_parser("eval", parents=[common], help="evaluate all methods on both test sets")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("analytic", parents=[common], help="accidental-authentication sweep CSV")
    p.set_defaults(func=cmd_analytic)
    p = sub.add_parser("report", parents=[common], help="regenerate reports from saved confusions")
    p.set_defaults(func=cmd_report)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_cfg = {}
    if args.config is not None:
        file_cfg = json.loads(Path(args.config).read_text())

    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        if key in file_cfg:
            return file_cfg[key]
        return fallback

    out = pick(args.out, "out", os.environ.get("CSIAUTH_OUT", DEFAULT_OUT))
    grid = pick(args.snr_grid, "snr_grid", datasets.DEFAULT_SNR_GRID)
    if isinstance(grid, str):
        grid = parse_snr_grid(grid)
    z_mult = pick(args.z_mult, "z_mult", DEFAULT_Z_MULTIPLIERS)
    cfg = RunConfig(
        seed=int(pick(args.seed, "seed", DEFAULT_SEED)),
        out_dir=Path(out),
        snr_grid=tuple(float(s) for s in grid),
        z_multipliers=tuple(float(m) for m in z_mult),
        jobs=max(1, int(pick(args.jobs, "jobs", 1))),
        pooled=bool(pick(args.pooled, "pooled", False)),
        gan_overrides=dict(file_cfg.get("gan", {})),
        detector_overrides=dict(file_cfg.get("detectors", {})),
        analytic_trials=int(file_cfg.get("analytic_trials", 50)),
    )
    return cfg


def _parallel(jobs: int, tasks: list):
    """Run 0-arg callables; results in task order regardless of scheduling."""
    if jobs <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def _snr_tag(snr: float) -> str:
    return format(snr, "g")


# ---------------------------------------------------------------------------
# Stages

def cmd_gen(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    master = datasets.build_master(rng, snr_grid=cfg.snr_grid)
    train, test = datasets.split_train_test(master)
    accidental = datasets.build_accidental(test, rng)
    nefarious = datasets.build_nefarious(test, datasets.default_nefarious_offsets(), rng)
    built = {
        "master": master,
        "train": train,
        "test": test,
        "test_accidental": accidental,
        "test_nefarious": nefarious,
    }
    for name, ds in built.items():
        path = cfg.data_dir / f"{name}.csv"
        datasets.write_dataset(path, ds)
        datasets.verify_counts(datasets.read_dataset(path))
        print(f"wrote {path} ({len(ds.samples)} samples)")
    return 0


def _load_train(cfg: RunConfig) -> datasets.Dataset:
    path = cfg.data_dir / "train.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing {path}; run `csiauth gen` first")
    return datasets.read_dataset(path)


def cmd_train(cfg: RunConfig) -> int:
    train_ds = _load_train(cfg)
    cfg.model_dir.mkdir(parents=True, exist_ok=True)
    tc = gan.TrainConfig(**cfg.gan_overrides)
    rng = RngStream(cfg.seed)

    def job(snr: float | None):
        if snr is None:
            samples = train_ds.samples
            stream = rng.substream("gan-train", "pooled")
            name = "gan_pooled"
        else:
            samples = datasets.slice_snr(train_ds.samples, snr)
            stream = rng.substream("gan-train", snr)
            name = f"gan_snr{_snr_tag(snr)}"
        disc, report = gan.train_gan(samples, tc, stream)
        return name, disc, report

    keys = [None] if cfg.pooled else list(train_ds.manifest.snr_grid)
    results = _parallel(cfg.jobs, [lambda s=s: job(s) for s in keys])
    for name, disc, report in results:
        ckpt = cfg.model_dir / f"{name}.json"
        neuralnet.save_checkpoint(disc, ckpt)
        gan.write_report_csv(report, cfg.model_dir / f"{name}_train_report.csv")
        print(f"wrote {ckpt} (epochs={report.epochs_run})")
    return 0


def cmd_fit_detector(cfg: RunConfig, algo: str) -> int:
    train_ds = _load_train(cfg)
    cfg.model_dir.mkdir(parents=True, exist_ok=True)
    ov = cfg.detector_overrides
    rng = RngStream(cfg.seed)

    def job(snr: float):
        x = datasets.features(datasets.slice_snr(train_ds.samples, snr))
        if algo == "lof":
            model = detectors.lof_fit(
                x, k=int(ov.get("lof_k", detectors.LOF_K)),
                threshold=float(ov.get("lof_threshold", detectors.LOF_THRESHOLD)),
            )
        elif algo == "iforest":
            model = detectors.iforest_fit(
                x,
                n_trees=int(ov.get("iforest_trees", detectors.IFOREST_TREES)),
                subsample=min(int(ov.get("iforest_subsample", detectors.IFOREST_SUBSAMPLE)), x.shape[0]),
                rng=rng.substream("iforest", snr),
                threshold=float(ov.get("iforest_threshold", detectors.IFOREST_THRESHOLD)),
            )
        else:
            gamma = ov.get("ocsvm_gamma")
            model = detectors.ocsvm_fit(
                x, nu=float(ov.get("ocsvm_nu", detectors.OCSVM_NU)),
                gamma=float(gamma) if gamma is not None else None,
            )
        return snr, model

    results = _parallel(cfg.jobs, [lambda s=s: job(s) for s in train_ds.manifest.snr_grid])
    for snr, model in results:
        path = cfg.model_dir / f"{algo}_snr{_snr_tag(snr)}.json"
        detectors.save_model(model, path)
        print(f"wrote {path}")
    return 0


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path}; run `{hint}` first")
    return path


def cmd_eval(cfg: RunConfig) -> int:
    test_sets = {}
    for name in ("test_accidental", "test_nefarious"):
        path = _require(cfg.data_dir / f"{name}.csv", "csiauth gen")
        test_sets[name.removeprefix("test_")] = datasets.read_dataset(path)

    grid = next(iter(test_sets.values())).manifest.snr_grid
    deciders_by_method: dict[str, dict[float, object]] = {}

    if cfg.pooled:
        ckpt = _require(cfg.model_dir / "gan_pooled.json", "csiauth train --pooled")
        disc = neuralnet.load_checkpoint(ckpt)
        deciders_by_method["gan"] = {snr: gan_decider(disc) for snr in grid}
    else:
        gan_deciders = {}
        for snr in grid:
            ckpt = _require(cfg.model_dir / f"gan_snr{_snr_tag(snr)}.json", "csiauth train")
            gan_deciders[snr] = gan_decider(neuralnet.load_checkpoint(ckpt))
        deciders_by_method["gan"] = gan_deciders

    adapters = {"lof": lof_decider, "iforest": iforest_decider, "ocsvm": ocsvm_decider}
    for algo, adapt in adapters.items():
        per_snr = {}
        for snr in grid:
            path = _require(
                cfg.model_dir / f"{algo}_snr{_snr_tag(snr)}.json",
                f"csiauth fit-detector --algo {algo}",
            )
            per_snr[snr] = adapt(detectors.load_model(path))
        deciders_by_method[algo] = per_snr

    h_true = next(iter(test_sets.values())).manifest.h_true
    for mult in cfg.z_multipliers:
        method = f"hypothesis-z{format(mult, 'g')}"
        deciders_by_method[method] = {
            snr: threshold_decider(h_true, Threshold.from_sigma2(mult, NoiseModel(snr).sigma2))
            for snr in grid
        }

    for ds_name, ds in test_sets.items():
        curves, matrices = [], []
        for method in sorted(deciders_by_method):
            curve, cms = accuracy_curve(deciders_by_method[method], ds, method)
            curves.append(curve)
            matrices.extend(cms)
            rho = spearman_vs_snr(curve)
            if rho < 0.8:
                print(f"note: {method} on {ds_name}: accuracy-vs-SNR rank correlation {rho:.2f} < 0.8")
        out = cfg.report_dir / ds_name
        written = emit_report(curves, matrices, out)
        print(f"wrote {len(written)} report files under {out}")
    return 0


def cmd_analytic(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed).substream("analytic")
    rows = analytic.sweep_auth_probability(
        list(ANALYTIC_CONFIGS), list(ANALYTIC_MULTIPLIERS), cfg.analytic_trials, rng
    )
    out = cfg.out_dir / "analytic"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "auth_probability_sweep.csv"
    analytic.write_sweep_csv(rows, path)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    regenerated = 0
    if not cfg.report_dir.exists():
        raise FileNotFoundError(f"missing {cfg.report_dir}; run `csiauth eval` first")
    for ds_dir in sorted(p for p in cfg.report_dir.iterdir() if p.is_dir()):
        matrices = load_confusions(ds_dir)
        if not matrices:
            continue
        curves = curves_from_confusions(matrices)
        emit_report(curves, matrices, ds_dir)
        regenerated += 1
        print(f"regenerated reports under {ds_dir}")
    if not regenerated:
        raise FileNotFoundError(f"no confusion files under {cfg.report_dir}; run `csiauth eval` first")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_help()
        return 2
    cfg = resolve_config(args)
    try:
        if args.func is cmd_fit_detector:
            return cmd_fit_detector(cfg, args.algo)
        return args.func(cfg)
    except (FileNotFoundError, ValueError, datasets.DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
