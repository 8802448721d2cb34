"""``autofeat`` command line.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are flag
names with dashes replaced by underscores.  Explicit flags override the file,
which overrides the built-in defaults.  On success a single ``key=value``
summary line is printed; exit status is 0 on success, 2 on usage errors and
1 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import models as ae
from .dataio import load_csv, load_images, write_points_csv, write_svg_lines
from .nn import grad_check
from .pipelines.anomaly import AnomalyConfig, run_anomaly_pipeline
from .pipelines.denoise import DenoiseConfig, run_denoising_pipeline
from .pipelines.hashing import HashConfig, run_hashing_pipeline
from .pipelines.synthetic import lorenz_generate, make_clusters, make_shapes, make_topics
from .pipelines.visualize import VisualizeConfig, run_visualization_pipeline
from .tensor import Rng

DEFAULT_GRADCHECK_ARCH = "input:6+dense:5:relu+dense:3:sigmoid+dense:5:relu+output:linear"

# rng streams for synthetic inputs generated by the CLI
STREAM_DATA = 20


class UsageError(Exception):
    pass


def _required(p: argparse.ArgumentParser, *flags, help: str, **kwargs) -> None:
    # checked after the config file is merged, so a config may supply it
    action = p.add_argument(*flags, help=f"{help} (required)", **kwargs)
    p.set_defaults(_required=p.get_default("_required") + [action])


def _common(p: argparse.ArgumentParser, out_help: str | None = "output directory") -> None:
    p.add_argument("--config", metavar="FILE", help="JSON file of flag values (flags win)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    if out_help:
        _required(p, "--out", help=out_help)


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.default is None or action.help.endswith("(required)"):
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = argparse.ArgumentParser(prog="autofeat", description="Autoencoder feature-learning toolkit.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def _new(sub, name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.set_defaults(_required=[])
        return sp

    p = _new(sub, "visualize", help="2-D/3-D codes of a tabular dataset", formatter_class=fmt)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV file with a header row")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N instances of 3 Gaussian clusters in 10 dimensions")
    p.add_argument("--label", help="label column (name or index)")
    p.add_argument("--dims", type=int, choices=(2, 3), default=3, help="code dimension")
    p.add_argument("--epochs", type=int, default=100, help="training epochs")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--rho", type=float, default=0.1, help="sparsity target activation")
    p.add_argument("--beta", type=float, default=0.2, help="sparsity penalty weight")
    _common(p)

    p = _new(sub, "denoise", help="convolutional denoising of images", formatter_class=fmt)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--images", help="directory of PGM/PPM images")
    src.add_argument("--synthetic", type=int, metavar="N", default=250, help="use N synthetic shape images")
    p.add_argument("--size", type=int, default=16, help="synthetic image side length")
    p.add_argument("--sd", type=float, default=0.05, help="Gaussian noise sd")
    p.add_argument("--epochs", type=int, default=30, help="training epochs")
    p.add_argument("--batch", type=int, default=500, help="mini-batch size")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction")
    _common(p)

    p = _new(sub, "anomaly", help="reconstruction-error anomaly detection on a time series", formatter_class=fmt)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--series", help="CSV time series (one row per step)")
    src.add_argument("--synthetic", action="store_true", help="use a Lorenz series (the default without --series)")
    p.add_argument("--train-steps", type=int, default=5000, help="training steps of the series")
    p.add_argument("--test-steps", type=int, default=1000, help="test steps following the training split")
    p.add_argument("--inject", type=int, nargs=2, metavar=("START", "END"), default=[400, 500], help="anomalous test interval")
    p.add_argument("--no-inject", action="store_true", help="do not inject an anomaly")
    p.add_argument("--window", type=int, default=1, help="consecutive steps per instance")
    p.add_argument("--epochs", type=int, default=50, help="training epochs")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size")
    p.add_argument("--sd", type=float, default=0.05, help="denoising corruption sd")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    _common(p)

    p = _new(sub, "hash", help="semantic hashing of bag-of-words documents", formatter_class=fmt)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--corpus", help="CSV of word counts, one document per row")
    src.add_argument("--synthetic", type=int, metavar="N", default=2000, help="use N synthetic topic documents")
    p.add_argument("--label", help="label column of the corpus CSV to ignore")
    p.add_argument("--topics", type=int, default=10, help="topics in the synthetic corpus")
    p.add_argument("--vocab", type=int, default=1000, help="vocabulary cap")
    p.add_argument("--bits", type=int, default=10, help="hash code width")
    p.add_argument("--threshold", type=float, default=0.5, help="code-unit threshold for a 1 bit")
    p.add_argument("--noise-sd", type=float, default=16.0, help="noise sd before the code layer")
    p.add_argument("--epochs", type=int, default=50, help="training epochs")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--pair-cap", type=int, default=1_000_000, help="maximum evaluated pairs")
    _common(p)

    p = _new(sub, "lorenz", help="integrate the Lorenz system", formatter_class=fmt)
    _required(p, "--steps", type=int, help="number of output rows")
    p.add_argument("--dt", type=float, default=0.01, help="integration step")
    p.add_argument("--discard", type=int, default=1000, help="initial transient steps dropped")
    p.add_argument("--init", type=float, nargs=3, metavar=("X", "Y", "Z"), default=[1.0, 1.0, 1.0], help="initial state")
    p.add_argument("--config", metavar="FILE", help="JSON file of flag values (flags win)")
    _required(p, "--out", help="output directory")

    p = _new(sub, "train", help="train an autoencoder on a CSV dataset", formatter_class=fmt)
    _required(p, "--data", help="CSV file with a header row")
    p.add_argument("--label", help="label column to exclude (name or index)")
    _required(p, "--arch", help="architecture string, e.g. input:8+dense:3:sigmoid+output")
    p.add_argument("--variant", choices=("basic", "sparse", "denoising"), default="basic", help="autoencoder variant")
    p.add_argument("--loss", choices=("mse", "bce"), default="mse", help="reconstruction loss")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam", help="optimizer")
    p.add_argument("--epochs", type=int, default=20, help="training epochs")
    p.add_argument("--batch", type=int, default=32, help="mini-batch size")
    p.add_argument("--lr", type=float, default=0.001, help="learning rate")
    p.add_argument("--sd", type=float, default=0.05, help="denoising corruption sd")
    p.add_argument("--rho", type=float, default=0.1, help="sparsity target activation")
    p.add_argument("--beta", type=float, default=0.2, help="sparsity penalty weight")
    _common(p, out_help="model file to write")

    p = _new(sub, "encode", help="encode a CSV dataset with a saved model", formatter_class=fmt)
    _required(p, "--model", help="model file")
    _required(p, "--data", help="CSV file with a header row")
    p.add_argument("--label", help="label column to carry through (name or index)")
    p.add_argument("--config", metavar="FILE", help="JSON file of flag values (flags win)")
    _required(p, "--out", help="codes CSV to write")

    p = _new(sub, "gradcheck", help="compare backprop with finite differences", formatter_class=fmt)
    p.add_argument("--arch", default=DEFAULT_GRADCHECK_ARCH, help="architecture string")
    p.add_argument("--h", type=float, default=1e-6, help="finite-difference step")
    p.add_argument("--loss", choices=("mse", "bce"), default="mse", help="reconstruction loss")
    p.add_argument("--batch", type=int, default=4, help="random instances")
    _common(p, out_help=None)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001 - argparse exposes no public lookup
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sp = _subparser(parser, args.command)
        try:
            values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            sp.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(values, dict):
            sp.error("config file must hold a JSON object")
        known = {a.dest for a in sp._actions}  # noqa: SLF001
        unknown = sorted(set(values) - known - {"config", "help"})
        if unknown:
            sp.error(f"unknown config keys: {', '.join(unknown)}")
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    missing = [a.option_strings[0] for a in args._required if getattr(args, a.dest) is None]
    if missing:
        _subparser(parser, args.command).error(f"the following arguments are required: {', '.join(missing)}")
    return args


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    if hasattr(v, "item"):
        return _fmt(v.item())
    return str(v)


def _summary(command: str, items: dict) -> str:
    return " ".join(f"{k}={_fmt(v)}" for k, v in {"command": command, **items}.items())


def _config(cls, **kwargs):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _label(value):
    if value is None:
        return None
    return int(value) if str(value).lstrip("-").isdigit() else value


def cmd_visualize(args) -> dict:
    cfg = _config(VisualizeConfig, dims=args.dims, epochs=args.epochs, batch=args.batch, lr=args.lr, rho=args.rho, beta=args.beta, seed=args.seed)
    if args.data:
        data = load_csv(args.data, label_column=_label(args.label))
    elif args.synthetic:
        data = make_clusters(args.synthetic, 10, 3, Rng(args.seed, STREAM_DATA))
    else:
        raise UsageError("visualize needs --data or --synthetic")
    return run_visualization_pipeline(data, cfg, args.out).summary


def cmd_denoise(args) -> dict:
    cfg = _config(DenoiseConfig, sd=args.sd, epochs=args.epochs, batch=args.batch, lr=args.lr, holdout=args.holdout, seed=args.seed)
    if args.images:
        images = load_images(args.images).images
    else:
        images = make_shapes(args.synthetic, args.size, Rng(args.seed, STREAM_DATA)).features
    return run_denoising_pipeline(images, cfg, args.out).summary


def cmd_anomaly(args) -> dict:
    cfg = _config(
        AnomalyConfig,
        train_steps=args.train_steps,
        test_steps=args.test_steps,
        inject=None if args.no_inject else tuple(args.inject),
        window=args.window,
        epochs=args.epochs,
        batch=args.batch,
        sd=args.sd,
        lr=args.lr,
        seed=args.seed,
        series=args.series,
    )
    return run_anomaly_pipeline(cfg, args.out).summary


def cmd_hash(args) -> dict:
    cfg = _config(
        HashConfig,
        vocab=args.vocab,
        bits=args.bits,
        noise_sd=args.noise_sd,
        threshold=args.threshold,
        epochs=args.epochs,
        batch=args.batch,
        lr=args.lr,
        pair_cap=args.pair_cap,
        seed=args.seed,
    )
    if args.corpus:
        corpus = load_csv(args.corpus, label_column=_label(args.label))
    else:
        corpus = make_topics(args.synthetic, args.vocab, args.topics, Rng(args.seed, STREAM_DATA))
    return run_hashing_pipeline(corpus, cfg, args.out).summary


def cmd_lorenz(args) -> dict:
    series = lorenz_generate(args.steps, args.dt, tuple(args.init), discard=args.discard)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_points_csv(series.values.tolist(), ["x", "y", "z"], out / "series.csv")
    write_svg_lines(
        {name: series.values[:, k] for k, name in enumerate("xyz")},
        None,
        out / "series.svg",
        title="Lorenz system",
        xlabel="step",
        ylabel="state",
    )
    return {"steps": len(series), "dt": args.dt}


def cmd_train(args) -> dict:
    data = load_csv(args.data, label_column=_label(args.label))
    spec = ae.parse_spec(args.arch)
    if args.variant == "sparse":
        model = ae.autoencoder_sparse(spec, rho=args.rho, beta=args.beta, loss=args.loss, seed=args.seed)
    elif args.variant == "denoising":
        model = ae.autoencoder_denoising(spec, sd=args.sd, loss=args.loss, seed=args.seed)
    else:
        model = ae.autoencoder(spec, loss=args.loss, seed=args.seed)
    cfg = _config(ae.TrainConfig, epochs=args.epochs, batch_size=args.batch, optimizer=args.optimizer, lr=args.lr, seed=args.seed)
    history = ae.train(model, data, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ae.save_model(model, args.out)
    return {"instances": len(data), "code_width": model.code_width, "final_loss": history[-1] if history else float("nan")}


def cmd_encode(args) -> dict:
    model = ae.load_model(args.model)
    data = load_csv(args.data, label_column=_label(args.label))
    codes = ae.encode(model, data).reshape(len(data), -1)
    header = [f"c{j + 1}" for j in range(codes.shape[1])]
    rows = [list(map(float, row)) for row in codes]
    if data.labels is not None:
        header.append("label")
        rows = [r + [int(lab)] for r, lab in zip(rows, data.labels)]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_points_csv(rows, header, args.out)
    return {"instances": len(rows), "code_width": codes.shape[1]}


def cmd_gradcheck(args) -> dict:
    spec = ae.parse_spec(args.arch)
    net = ae.build_network(spec, args.seed)
    rng = Rng(args.seed, STREAM_DATA)
    x = rng.uniform((args.batch,) + net.input_shape)
    target = rng.uniform((args.batch,) + net.output_shape)
    if args.loss == "bce" and net.layers[-1].activation != "sigmoid":
        raise UsageError("bce gradient check needs a sigmoid output layer")
    err = grad_check(net, x, args.h, args.loss, target)
    return {"max_rel_error": err, "parameters": sum(p.size for p in net.parameters())}


COMMANDS = {
    "visualize": cmd_visualize,
    "denoise": cmd_denoise,
    "anomaly": cmd_anomaly,
    "hash": cmd_hash,
    "lorenz": cmd_lorenz,
    "train": cmd_train,
    "encode": cmd_encode,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        summary = COMMANDS[args.command](args)
    except (UsageError, ae.SpecError) as exc:
        print(f"autofeat {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"autofeat {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(_summary(args.command, summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
