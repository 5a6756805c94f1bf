"""Command-line entry point: ``dcloss <command> [options]``.

Every command accepts ``--config FILE`` holding ``key = value`` lines; flags
given on the command line override the file. Output files begin with
``#``-prefixed lines recording the resolved configuration (the output path
and config path excluded), so rerunning with that configuration reproduces
the file byte-for-byte.

Exit status: 0 success, 1 experiment/check failure, 2 usage or I/O error.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, datagen, experiments
from .errors import DomainError, FormatError, TrainingDiverged
from .label_codec import DEFAULT_BINS, DEFAULT_SIGMA, encode_gaussian
from .losses import DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, LossSpec, profile
from .metrics import DEFAULT_CS_THRESHOLD, evaluate
from .model import TrainConfig, load_checkpoint, predict_ages, save_checkpoint, train
from .numcheck import check

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def int_list(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def float_list(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


# name -> (type, default); None default means required
COMMON = {"seed": (int, 0)}

LOSS_OPTS = {
    "loss": (str, "dc"),
    "alpha": (float, 0.01),
    "lambda1": (float, DEFAULT_LAMBDA1),
    "lambda2": (float, DEFAULT_LAMBDA2),
}

TRAIN_OPTS = {
    **LOSS_OPTS,
    "epochs": (int, 30),
    "batch_size": (int, 80),
    "momentum": (float, 0.9),
    "weight_decay": (float, 5e-4),
    "lr_start": (float, experiments.TASK_LR_START),
    "lr_end": (float, experiments.TASK_LR_END),
    "hidden": (int_list, [64, 64]),
    "activation": (str, "relu"),
    "sigma": (float, DEFAULT_SIGMA),
    "backend": (str, "auto"),
}

COMMANDS = {
    "gen-data": {
        "domains": (int, 2),
        "severity": (float, experiments.TASK_SEVERITY),
        "noise": (float, 0.05),
        "subjects": (int, experiments.TASK_SUBJECTS),
        "images": (int, experiments.TASK_IMAGES),
        "bins": (int, DEFAULT_BINS),
        "dim": (int, experiments.TASK_DIM),
        "train_domains": (int_list, [0]),
        "test_domains": (int_list, [1]),
        "holdout": (float, experiments.TASK_HOLDOUT),
    },
    "gradcheck": {
        **LOSS_OPTS,
        "trials": (int, 100),
        "tol": (float, 1e-5),
        "bins": (int, 10),
        "step": (float, 1e-5),
    },
    "gradcompare": {
        "age": (int, 50),
        "bins": (int, 100),
        "sigma": (float, DEFAULT_SIGMA),
        "alpha": (float, 0.01),
        "samples": (int, 100),
        "max_shift": (int, 10),
        "noise": (float, 0.01),
    },
    "profile": {
        "y1": (int, None),
        "y2": (int, None),
        "bins": (int, DEFAULT_BINS),
        "sigma": (float, DEFAULT_SIGMA),
        "loss": (str, "both"),
    },
    "train": {"data": (str, None), **TRAIN_OPTS},
    "eval": {"model": (str, None), "data": (str, None), "threshold": (int, DEFAULT_CS_THRESHOLD)},
    "sweep-alpha": {
        "train_data": (str, None),
        "test_data": (str, None),
        "alphas": (float_list, [0.01, 0.05, 0.1, 0.2, 0.5, 0.8]),
        "seeds": (int_list, None),
        "jobs": (int, 1),
        **{k: v for k, v in TRAIN_OPTS.items() if k not in ("loss", "alpha")},
    },
}

HELP = {
    "gen-data": "generate a synthetic multi-domain dataset and its SC split",
    "gradcheck": "compare analytic and finite-difference logit gradients",
    "gradcompare": "KL vs DC gradient magnitudes on perturbed distributions",
    "profile": "per-bin KL / DC contributions between two Gaussian labels",
    "train": "train an MLP on a dataset file",
    "eval": "evaluate a checkpoint on a dataset file (MAE / CS)",
    "sweep-alpha": "cross-domain MAE as a function of the DC alpha",
}

OUT_REQUIRED = {"gen-data", "gradcompare", "profile", "train", "eval", "sweep-alpha"}


def build_parser():
    parser = argparse.ArgumentParser(prog="dcloss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dcloss {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        for key, (typ, _) in {**opts, **COMMON}.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
        p.add_argument("--config", default=None, help="key = value file; flags take precedence")
        p.add_argument("--out", default=None, help="output path")
    return parser


def read_config_file(path):
    items = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            items[k.replace("-", "_")] = v
    return items


def resolve(args):
    """Merge defaults < config file < flags into a plain dict."""
    opts = {**COMMANDS[args.command], **COMMON}
    cfg = {k: default for k, (_, default) in opts.items()}
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        for k, v in read_config_file(args.config).items():
            if k not in opts:
                raise UsageError(f"unknown key {k!r} in {args.config}")
            try:
                cfg[k] = opts[k][0](v)
            except ValueError as exc:
                raise UsageError(f"{args.config}: bad value for {k}: {exc}") from None
    for k in opts:
        v = getattr(args, k)
        if v is not None:
            cfg[k] = v
    if args.command == "sweep-alpha" and cfg["seeds"] is None:
        cfg["seeds"] = [cfg["seed"]]
    missing = [k for k, v in cfg.items() if v is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if args.command in OUT_REQUIRED and not args.out:
        raise UsageError("--out is required")
    return cfg


def header_lines(command, cfg):
    lines = [f"# dcloss {__version__} {command}"]
    lines += [f"# {k} = {_fmt(cfg[k])}" for k in sorted(cfg)]
    return lines


def write_table(path, command, cfg, columns, rows, footer=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines(command, cfg):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        for line in footer:
            fh.write(f"# {line}\n")


def _loss_spec(cfg, alpha=None):
    try:
        return LossSpec(
            cfg["loss"],
            cfg["alpha"] if alpha is None else alpha,
            cfg["lambda1"],
            cfg["lambda2"],
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _train_config(cfg, alpha=None, seed=None):
    try:
        return TrainConfig(
            loss=_loss_spec(cfg, alpha),
            epochs=cfg["epochs"],
            batch_size=cfg["batch_size"],
            momentum=cfg["momentum"],
            weight_decay=cfg["weight_decay"],
            lr_start=cfg["lr_start"],
            lr_end=cfg["lr_end"],
            seed=cfg["seed"] if seed is None else seed,
            hidden=tuple(cfg["hidden"]),
            activation=cfg["activation"],
            sigma=cfg["sigma"],
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _backend(cfg):
    b = cfg.get("backend", "auto")
    if b not in ("auto", "numba", "numpy"):
        raise UsageError(f"--backend must be auto, numba or numpy, got {b!r}")
    return None if b == "auto" else b


def _load_data(path):
    if not os.path.isfile(path):
        raise UsageError(f"dataset not found: {path}")
    try:
        return datagen.load(path)
    except FormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


# ------------------------------------------------------------------ commands


def cmd_gen_data(cfg, out):
    try:
        domains = datagen.make_domains(cfg["domains"], cfg["dim"], cfg["severity"],
                                       noise_std=cfg["noise"], seed=cfg["seed"])
        data = datagen.generate(domains, cfg["subjects"], cfg["images"], cfg["bins"],
                                cfg["dim"], seed=cfg["seed"])
        tr, cross = datagen.split_sc(data, cfg["train_domains"], cfg["test_domains"])
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(out, exist_ok=True)
    meta = {k: _fmt(cfg[k]) for k in sorted(cfg)}
    datagen.save(os.path.join(out, "all.csv"), data, meta)
    datagen.save(os.path.join(out, "cross.csv"), cross, meta)
    if cfg["holdout"] > 0:
        tr, intra = datagen.split_subjects(tr, cfg["holdout"], seed=cfg["seed"])
        datagen.save(os.path.join(out, "intra.csv"), intra, meta)
    datagen.save(os.path.join(out, "train.csv"), tr, meta)
    print(f"wrote {len(data)} samples to {out} "
          f"(train {len(tr)}, cross {len(cross)}, dropped {cross.dropped})")
    return EXIT_OK


def cmd_gradcheck(cfg, out):
    spec = _loss_spec(cfg)
    if cfg["trials"] < 1:
        raise UsageError("--trials must be >= 1")
    report = check(spec, cfg["trials"], cfg["tol"], cfg["seed"], L=cfg["bins"], h=cfg["step"])
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {spec.kind.value}: max_rel_err={report.max_rel_err:.3e} "
          f"max_abs_err={report.max_abs_err:.3e} worst_index={report.worst_index}")
    if out:
        rows = [(k, v) for k, v in report.as_dict().items()]
        write_table(out, "gradcheck", cfg, ["key", "value"], rows)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_gradcompare(cfg, out):
    try:
        rows = experiments.gradient_comparison(
            age=cfg["age"], L=cfg["bins"], sigma=cfg["sigma"], alpha=cfg["alpha"],
            n_samples=cfg["samples"], max_shift=cfg["max_shift"],
            noise_level=cfg["noise"], seed=cfg["seed"],
        )
    except (DomainError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    L = cfg["bins"]
    columns = ["sample", "shift", "kl_max_abs", "dc_max_abs", "dc_below_kl"]
    columns += [f"kl_grad_{i}" for i in range(1, L + 1)]
    columns += [f"dc_grad_{i}" for i in range(1, L + 1)]
    table = [
        [n, r.shift, r.kl_max, r.dc_max, int(r.dc_max < r.kl_max),
         *map(float, r.kl_grad), *map(float, r.dc_grad)]
        for n, r in enumerate(rows)
    ]
    frac = experiments.fraction_dc_below_kl(rows)
    write_table(out, "gradcompare", cfg, columns, table,
                footer=[f"fraction_dc_below_kl = {frac!r}"])
    print(f"max|dL_DC/dz| < max|dL_KL/dz| in {100 * frac:.1f}% of {len(rows)} samples")
    return EXIT_OK


def cmd_profile(cfg, out):
    L, sigma = cfg["bins"], cfg["sigma"]
    kinds = {"both": ("kl", "dc"), "kl": ("kl",), "dc": ("dc",)}.get(cfg["loss"])
    if kinds is None:
        raise UsageError("--loss must be kl, dc or both")
    try:
        p = encode_gaussian(cfg["y1"], L, sigma)
        q = encode_gaussian(cfg["y2"], L, sigma)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    cols = {k: profile(p, q, LossSpec(k)) for k in kinds}
    rows = [[i + 1, float(p[i]), float(q[i]), *(float(cols[k][i]) for k in kinds)] for i in range(L)]
    write_table(out, "profile", cfg, ["bin", "p", "q", *kinds], rows)
    return EXIT_OK


def cmd_train(cfg, out):
    data = _load_data(cfg["data"])
    tcfg = _train_config(cfg)
    try:
        model, trace = train(data, tcfg, backend=_backend(cfg))
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    save_checkpoint(out, model, tcfg, trace)
    trace_path = os.path.splitext(out)[0] + ".trace.csv"
    rows = [(e, trace.lr[e], trace.loss[e]) for e in range(len(trace.loss))]
    write_table(trace_path, "train", cfg, ["epoch", "lr", "mean_loss"], rows)
    print(f"final mean loss {trace.loss[-1]:.6g}; wrote {out} and {trace_path}")
    return EXIT_OK


def cmd_eval(cfg, out):
    if not os.path.isfile(cfg["model"]):
        raise UsageError(f"checkpoint not found: {cfg['model']}")
    try:
        model, _, _ = load_checkpoint(cfg["model"])
    except FormatError as exc:
        raise UsageError(f"{cfg['model']}: {exc}") from None
    data = _load_data(cfg["data"])
    if model.layer_dims[0] != data.D or model.n_bins != data.L:
        raise UsageError(
            f"checkpoint expects D={model.layer_dims[0]}, L={model.n_bins}; "
            f"dataset has D={data.D}, L={data.L}"
        )
    report = evaluate(predict_ages(model, data.features), data.ages, cfg["threshold"])
    write_table(out, "eval", cfg, ["key", "value"], list(report.as_dict().items()))
    print(f"MAE {report.mae:.4f}  CS(I={report.threshold_I}) {report.cs:.2f}%  n={report.n}")
    return EXIT_OK


def _sweep_job(args):
    train_data, test_data, tcfg, backend = args
    model, _ = train(train_data, tcfg, backend=backend)
    return evaluate(predict_ages(model, test_data.features), test_data.ages).mae


def cmd_sweep_alpha(cfg, out):
    alphas, seeds = cfg["alphas"], cfg["seeds"]
    if not alphas:
        raise UsageError("--alphas is empty")
    tr = _load_data(cfg["train_data"])
    te = _load_data(cfg["test_data"])
    base = dict(cfg, loss="dc", alpha=0.5)
    jobs = [(tr, te, _train_config(base, alpha=a, seed=s), _backend(cfg))
            for a in alphas for s in seeds]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            maes = list(pool.map(_sweep_job, jobs))
    else:
        maes = [_sweep_job(j) for j in jobs]
    grid = np.array(maes).reshape(len(alphas), len(seeds))
    rows = [[a, float(grid[i].mean()), *map(float, grid[i])] for i, a in enumerate(alphas)]
    write_table(out, "sweep-alpha", cfg, ["alpha", "mae_mean", *(f"mae_seed{s}" for s in seeds)], rows)
    for a, m, *_ in rows:
        print(f"alpha={a:<6g} cross MAE {m:.4f}")
    return EXIT_OK


HANDLERS = {
    "gen-data": cmd_gen_data,
    "gradcheck": cmd_gradcheck,
    "gradcompare": cmd_gradcompare,
    "profile": cmd_profile,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-alpha": cmd_sweep_alpha,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if "loss" in cfg and args.command != "profile":
            _loss_spec(cfg, alpha=cfg.get("alpha", 0.5))
        return HANDLERS[args.command](cfg, args.out)
    except UsageError as exc:
        print(f"dcloss {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dcloss {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
