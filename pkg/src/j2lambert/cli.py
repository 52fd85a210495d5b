"""Command-line front end: gen, stats, train, solve, bench.

Exit status is 0 on success, 1 when a solve does not converge and 2 for
usage or input errors. Any option can also come from ``--config FILE``, an
INI file whose section named after the subcommand holds ``option = value``
lines (dashes in option names become underscores).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .astro import DomainError, get_body
from .bench import (
    METHODS, BenchConfig, read_report, run_convergence_bench, run_stress_bench,
    run_total_cost_bench, write_cost_report, write_report,
)
from .features import form_screening_report, ranking_text, write_correlation_csv, write_stats_csv
from .mlp import ACTIVATIONS, MlpConfig, ModelFormatError, TrainConfig, load_model, save_model, train
from .pipeline import ModelLayoutError, PerturbedLambertQuery, solve_perturbed_lambert
from .propagator import PropagationError
from .samples import (
    ALL_FORMS, EXTENDED_RANGES, STREAM_BENCH, STREAM_TRAIN, TABLE1_RANGES, SampleForm,
    generate_dataset, project_form, read_dataset, symmetry_augmenter, write_dataset,
)
from .shooting import ShootingConfig, SingularJacobianError

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE = 0, 1, 2
RANGES = {"table1": TABLE1_RANGES, "extended": EXTENDED_RANGES}
STREAMS = {"train": STREAM_TRAIN, "bench": STREAM_BENCH}

log = logging.getLogger("j2lambert")


class UsageError(Exception):
    pass


def _vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a vector: {text!r}") from None
    if v.shape != (3,):
        raise argparse.ArgumentTypeError(f"expected 3 components, got {v.size}")
    return v


def _int_list(text: str) -> tuple[int, ...]:
    """'0-5' or '0,2,4' or a mix."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(out)


def _forms(text: str) -> tuple[SampleForm, ...]:
    if text == "all":
        return ALL_FORMS
    try:
        return tuple(SampleForm(t.strip()) for t in text.split(","))
    except ValueError:
        names = ", ".join(f.value for f in ALL_FORMS)
        raise argparse.ArgumentTypeError(f"forms must be 'all' or a list of: {names}") from None


def _methods(text: str) -> tuple[str, ...]:
    ms = tuple(m.strip().upper() for m in text.split(","))
    if not ms or any(m not in METHODS for m in ms):
        raise argparse.ArgumentTypeError(f"methods must be drawn from {', '.join(METHODS)}")
    return ms


def _body(args):
    try:
        return get_body(args.body, args.body_catalog)
    except (KeyError, OSError, ValueError) as exc:
        raise UsageError(f"cannot load body {args.body!r}: {exc}") from None


def _load_model(path):
    if path is None:
        return None
    try:
        return load_model(path)
    except (OSError, ModelFormatError) as exc:
        raise UsageError(f"cannot load model: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    body = _body(args)
    t = time.perf_counter()
    ds = generate_dataset(args.n, args.seed, RANGES[args.ranges], body, stream=STREAMS[args.stream])
    elapsed = time.perf_counter() - t
    write_dataset(ds, args.out)
    meta = {"n": args.n, "seed": args.seed, "ranges": args.ranges, "body": body.name,
            "stream": args.stream, "gen_time_s": elapsed}
    Path(args.out).with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(ds)} samples to {args.out} in {elapsed:.1f} s")
    return EXIT_OK


def cmd_stats(args) -> int:
    ds = read_dataset(args.input)
    report = form_screening_report(ds, args.forms, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_stats_csv(report, out / "stats.csv")
    write_correlation_csv(report, out / "correlations.csv")
    text = ranking_text(report)
    (out / "ranking.txt").write_text(text)
    if not args.no_plots:
        from .plotting import plot_correlations
        plot_correlations(report, out / "correlations.png")
    print(text, end="")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = read_dataset(args.input)
    form = args.form
    x, y = project_form(ds, form, args.length_unit)
    codec_in, codec_out = form.codecs() if not args.raw else ((), ())
    cfg = MlpConfig(form.input_dim, 3, args.layers, args.activation, args.output_activation,
                    init_seed=args.seed, input_codec=codec_in, output_codec=codec_out)
    tcfg = TrainConfig(learning_rate=args.lr, max_epochs=args.epochs, batch_size=args.batch,
                       shuffle_seed=args.seed, validation_fraction=args.validation,
                       final_learning_rate=args.final_lr)
    augment = symmetry_augmenter(form) if args.augment else None

    def progress(epoch, h):
        if epoch % max(1, args.epochs // 20) == 0:
            log.info("epoch %d train %.4g val %.4g", epoch, h.train_mse[-1], h.val_mse[-1])

    model, history = train(cfg, tcfg, x, y, progress=progress, augment=augment)
    model.meta.update({"form": form.value, "length_unit": f"{args.length_unit:g}",
                       "train_samples": str(len(ds)), "best_epoch": str(history.best_epoch),
                       "train_time_s": f"{history.wall_time_s:.3f}"})
    if args.augment:
        model.meta["augment"] = "symmetry"
    sidecar = Path(args.input).with_suffix(".json")
    if sidecar.exists():
        gen = json.loads(sidecar.read_text()).get("gen_time_s")
        if gen is not None:
            model.meta["gen_time_s"] = f"{float(gen):.3f}"
    save_model(model, args.model_out)
    hist_path = Path(args.model_out).with_suffix(".history.csv")
    history.write_csv(hist_path)
    if not args.no_plots:
        from .plotting import plot_histories
        plot_histories({form.value: history}, Path(args.model_out).with_suffix(".history.png"))
    print(f"best epoch {history.best_epoch} val MSE {history.val_mse[history.best_epoch - 1]:.4g} "
          f"final train MSE {history.final_train_mse:.4g} ({history.wall_time_s:.1f} s)")
    return EXIT_OK


def cmd_solve(args) -> int:
    body = _body(args)
    model = _load_model(args.model)
    if model is None and not args.cold_start:
        raise UsageError("solve needs --model or --cold-start")
    cfg = ShootingConfig(tol=args.tol, max_iter=args.max_iter)
    q = PerturbedLambertQuery(args.r0, args.rf, args.tof, args.revs, body, plane_hint=args.plane_hint)
    res = solve_perturbed_lambert(q, model, cfg, cold_start=args.cold_start)
    out = {
        "converged": res.converged,
        "v0_km_s": [float(c) for c in res.v0],
        "iterations": res.iterations,
        "terminal_error_km": res.terminal_error,
        "keplerian_velocity_km_s": [float(c) for c in res.v_d],
        "correction_km_s": [float(c) for c in res.dnn_correction],
        "keplerian_miss_km": res.keplerian_error,
        "branch": res.branch,
        "propagations": res.propagations,
        "time_s": res.total_time,
        "status": res.shooting.status,
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_bench(args) -> int:
    body = _body(args)
    model = _load_model(args.model)
    shoot = ShootingConfig(tol=args.tol, max_iter=args.max_iter)
    methods = args.methods
    if "DNN" in methods and model is None:
        raise UsageError("the DNN method needs --model")
    out = Path(args.out)
    if args.mode == "conv":
        cfg = BenchConfig(args.revs, args.n, methods, {m: shoot for m in methods}, args.seed,
                          RANGES[args.ranges], body)
        report = run_convergence_bench(cfg, model)
        write_report(report, out)
        read_report(out)
    elif args.mode == "stress":
        report = run_stress_bench(args.angle, args.revs, args.n, args.seed, model, methods, shoot,
                                  body, RANGES[args.ranges])
        write_report(report, out)
    else:
        if model is None:
            raise UsageError("total-cost mode needs --model")
        one_time = args.one_time
        if one_time is None:
            try:
                one_time = float(model.meta["train_time_s"]) + float(model.meta.get("gen_time_s", 0.0))
            except (KeyError, ValueError):
                raise UsageError("model records no training time; pass --one-time") from None
        cfg = BenchConfig(args.revs, args.n, ("SN", "DNN"), {m: shoot for m in METHODS}, args.seed,
                          RANGES[args.ranges], body)
        cost = run_total_cost_bench(args.batch_sizes, cfg, model, one_time)
        write_cost_report(cost, out)
        if not args.no_plots:
            from .plotting import plot_cost
            plot_cost(cost, out.with_suffix(".png"))
        print(f"one-time cost {one_time:.1f} s; per solve "
              + ", ".join(f"{m} {c * 1e3:.2f} ms" for m, c in cost.per_solve_s.items()))
        print(f"crossover batch size: {cost.crossover if cost.crossover is not None else 'none'}")
        return EXIT_OK
    if not args.no_plots:
        from .plotting import plot_bench
        plot_bench(report, out.with_suffix(".png"))
    print(f"{'method':<7}{'revs':>5}{'n':>6}{'ratio':>8}{'iters':>9}{'time_s':>11}")
    for r in report.rows:
        print(f"{r.method:<7}{r.revs:>5}{r.n:>6}{r.ratio:>8.3f}{r.mean_iters:>9.2f}{r.mean_time_s:>11.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="j2lambert", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI file with per-subcommand defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def body_opts(sp):
        sp.add_argument("--body", default="jupiter")
        sp.add_argument("--body-catalog", help="INI catalog replacing the bundled one")

    g = sub.add_parser("gen", help="generate a sample dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--ranges", choices=sorted(RANGES), default="table1")
    g.add_argument("--stream", choices=sorted(STREAMS), default="train")
    g.add_argument("--out", required=True)
    body_opts(g)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("stats", help="column statistics and form screening")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--forms", type=_forms, default=ALL_FORMS)
    s.add_argument("--threshold", type=float, default=0.01)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_stats)

    t = sub.add_parser("train", help="train a network on one sample form")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--form", type=SampleForm, default=SampleForm.DV2_SPH)
    t.add_argument("--layers", type=lambda s: tuple(int(v) for v in s.split(",")), default=(50, 50, 50, 50))
    t.add_argument("--activation", choices=ACTIVATIONS, default="tanh")
    t.add_argument("--output-activation", choices=ACTIVATIONS, default="identity")
    t.add_argument("--epochs", type=int, default=1000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--final-lr", type=float, help="decay the rate geometrically to this value")
    t.add_argument("--augment", action="store_true", help="random spin-axis rotations and equatorial flips")
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--validation", type=float, default=0.1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--length-unit", type=float, default=71492.0)
    t.add_argument("--raw", action="store_true", help="skip the log/angle column pretreatment")
    t.add_argument("--model-out", required=True)
    t.add_argument("--no-plots", action="store_true")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("solve", help="solve one perturbed Lambert problem")
    v.add_argument("--r0", type=_vector, required=True, help="km, 'x,y,z'")
    v.add_argument("--rf", type=_vector, required=True, help="km, 'x,y,z'")
    v.add_argument("--tof", type=float, required=True, help="seconds")
    v.add_argument("--revs", type=int, default=0)
    v.add_argument("--model")
    v.add_argument("--cold-start", action="store_true")
    v.add_argument("--plane-hint", type=_vector)
    v.add_argument("--tol", type=float, default=1e-3)
    v.add_argument("--max-iter", type=int, default=2000)
    body_opts(v)
    v.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="convergence, stress or total-cost benchmark")
    b.add_argument("--mode", choices=("conv", "stress", "total"), required=True)
    b.add_argument("--revs", type=_int_list, default=(0, 1, 2, 3, 4, 5))
    b.add_argument("--n", type=int, default=100, help="samples per revolution count")
    b.add_argument("--methods", type=_methods, default=METHODS)
    b.add_argument("--seed", type=int, default=2024)
    b.add_argument("--ranges", choices=sorted(RANGES), default="extended")
    b.add_argument("--model")
    b.add_argument("--angle", type=int, choices=(180, 360), default=180)
    b.add_argument("--batch-sizes", type=_int_list, default=(1, 10, 100, 1000, 10000, 100000))
    b.add_argument("--one-time", type=float, help="generation plus training seconds")
    b.add_argument("--tol", type=float, default=1e-3)
    b.add_argument("--max-iter", type=int, default=2000)
    b.add_argument("--out", required=True)
    b.add_argument("--no-plots", action="store_true")
    body_opts(b)
    b.set_defaults(func=cmd_bench)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        parser.error(f"cannot read config file {known.config}")
    command = next((a for a in rest if not a.startswith("-")), None)
    if command is None or not cp.has_section(command):
        return
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cp.items(command):
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            parser.error(f"config section [{command}] has unknown option {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = cp.getboolean(command, key)
            continue
        try:
            value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            parser.error(f"config option {key}: {exc}")
        if action.choices is not None and value not in action.choices:
            parser.error(f"config option {key}: {raw!r} not one of {list(action.choices)}")
        defaults[dest] = value
        action.required = False
    sub.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelLayoutError, DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularJacobianError, PropagationError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
