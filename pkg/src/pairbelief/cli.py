"""Command-line entry points.

Subcommands cover the full workflow: ``simulate`` writes a comparison CSV,
``fit`` trains the score and ratio models from one, ``field`` tabulates the
tempering field on a grid, ``sample`` draws belief samples, ``eval`` evaluates
model log-densities at given points, and ``serve`` starts the live
elicitation service.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .comparisons import UNIT_VARIANCE_S, RUMConfig, read_dataset, read_points, simulate_comparisons, write_dataset, write_points
from .density import DensityEvalConfig, model_log_density
from .sampling import ald_run, default_preset, fast_2d_preset, marginal_score_fn, scaled_ald_run
from .scoremodel import ScoreModelConfig, hidden_width_for_dim, iterations_for_dim, load_model, save_model, train
from .targets import get_target, target_names, uniform_box
from .tempering import build_field_estimate, load_ratio, save_ratio, train_ratio_net


def _add_rum_args(p):
    p.add_argument("--rum", default="bradley-terry", choices=["bradley-terry", "exponential"])
    p.add_argument("--s", type=float, default=UNIT_VARIANCE_S)


def _preset(name: str):
    return fast_2d_preset() if name == "fast-2d" else default_preset()


def _load_models(model_dir: Path):
    model = load_model(str(model_dir / "score.pbnet"))
    ratio, s = load_ratio(str(model_dir / "ratio.pbnet"))
    return model, ratio, s


def _field_for(model_dir: Path, model, ratio, s, preset: str, seed: int):
    cache = model_dir / "mwd.npz"
    d = model.config.d
    if cache.exists():
        with np.load(cache) as z:
            pts, log_pw = z["points"], z["log_pw"]
    else:
        pts = ald_run(marginal_score_fn(model), _preset(preset), 2000 * d, d,
                      seed=seed + 3, reflect_box=(0.0, 1.0))
        log_pw = model_log_density(model, pts, DensityEvalConfig(seed=seed + 4))
        np.savez(cache, points=pts, log_pw=log_pw)
    return build_field_estimate(ratio, pts, log_pw, s=s)


def cmd_simulate(args) -> int:
    target = get_target(args.target)
    ds = simulate_comparisons(target, uniform_box(target.domain),
                              RUMConfig(model=args.rum, s=args.s), args.n, seed=args.seed)
    write_dataset(args.out, ds)
    print(f"wrote {ds.n} comparisons to {args.out}")
    return 0


def cmd_fit(args) -> int:
    ds = read_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ScoreModelConfig(
        d=ds.d,
        hidden=args.hidden or hidden_width_for_dim(ds.d),
        iterations=args.iterations or iterations_for_dim(ds.d),
        mask_prob=args.mask_prob,
        seed=args.seed,
    )
    model, losses = train(ds, cfg)
    save_model(str(out / "score.pbnet"), model)
    ratio = train_ratio_net(ds, s=ds.rum.s, hidden=cfg.hidden, seed=args.seed)
    save_ratio(str(out / "ratio.pbnet"), ratio, ds.rum.s)
    print(f"fit complete: final score loss {losses[-1]:.4f}, models in {out}")
    return 0


def cmd_field(args) -> int:
    model, ratio, s = _load_models(Path(args.model))
    target = get_target(args.target)
    d = target.domain.d
    field = _field_for(Path(args.model), model, ratio, s, args.preset, args.seed)
    dist = uniform_box(target.domain)
    if d == 2:
        axes = [np.linspace(lo, hi, args.grid)
                for lo, hi in zip(target.domain.lower, target.domain.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
    else:
        rng = np.random.default_rng(args.seed)
        pts = dist.sample(args.grid * args.grid, rng)
    tau = field(dist.rosenblatt_forward(pts))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i + 1}" for i in range(d)] + ["tau"])
        for row, t in zip(pts, tau):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])
    print(f"wrote tempering field on {pts.shape[0]} points to {args.out}")
    return 0


def cmd_sample(args) -> int:
    model_dir = Path(args.model)
    model, ratio, s = _load_models(model_dir)
    target = get_target(args.target)
    cfg = _preset(args.preset)
    if args.constant_tau is not None:
        c = args.constant_tau
        tau_fn = lambda x: np.full(np.atleast_2d(x).shape[0], c)  # noqa: E731
        u = scaled_ald_run(model, tau_fn, cfg, args.n, seed=args.seed)
    elif args.no_field:
        u = ald_run(marginal_score_fn(model), cfg, args.n, model.config.d,
                    seed=args.seed, reflect_box=(0.0, 1.0))
    else:
        field = _field_for(model_dir, model, ratio, s, args.preset, args.seed)
        u = scaled_ald_run(model, field.interpolated(), cfg, args.n, seed=args.seed)
    write_points(args.out, uniform_box(target.domain).rosenblatt_inverse(u))
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model, _, _ = _load_models(Path(args.model))
    target = get_target(args.target)
    pts = read_points(args.points)
    dist = uniform_box(target.domain)
    log_u = model_log_density(model, dist.rosenblatt_forward(pts),
                              DensityEvalConfig(seed=args.seed))
    log_x = log_u - float(np.sum(np.log(target.domain.widths)))
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i + 1}" for i in range(pts.shape[1])] + ["log_density"])
        for row, v in zip(pts, log_x):
            w.writerow([repr(float(c)) for c in row] + [repr(float(v))])
    print(f"wrote log-densities for {pts.shape[0]} points to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairbelief",
                                description="Belief-density estimation from pairwise comparisons.")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="simulate expert comparisons to CSV")
    sp.add_argument("--target", required=True, choices=target_names())
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=0)
    _add_rum_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    fp = sub.add_parser("fit", help="train score and ratio models from a comparison CSV")
    fp.add_argument("--data", required=True)
    fp.add_argument("--out", required=True, help="output model directory")
    fp.add_argument("--iterations", type=int)
    fp.add_argument("--hidden", type=int)
    fp.add_argument("--mask-prob", type=float, default=0.5)
    fp.add_argument("--seed", type=int, default=0)
    fp.set_defaults(func=cmd_fit)

    gp = sub.add_parser("field", help="tabulate the tempering field on a grid")
    gp.add_argument("--model", required=True)
    gp.add_argument("--target", required=True, choices=target_names())
    gp.add_argument("--grid", type=int, default=64)
    gp.add_argument("--preset", default="default", choices=["default", "fast-2d"])
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--out", required=True)
    gp.set_defaults(func=cmd_field)

    mp = sub.add_parser("sample", help="draw belief samples from fitted models")
    mp.add_argument("--model", required=True)
    mp.add_argument("--target", required=True, choices=target_names())
    mp.add_argument("--n", type=int, default=2000)
    mp.add_argument("--preset", default="default", choices=["default", "fast-2d"])
    mp.add_argument("--seed", type=int, default=1)
    mp.add_argument("--no-field", action="store_true", help="plain ALD on the marginal score")
    mp.add_argument("--constant-tau", type=float, help="use a constant tempering factor")
    mp.add_argument("--out", required=True)
    mp.set_defaults(func=cmd_sample)

    ep = sub.add_parser("eval", help="evaluate model log-density at points from a CSV")
    ep.add_argument("--model", required=True)
    ep.add_argument("--target", required=True, choices=target_names())
    ep.add_argument("--points", required=True)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--out", required=True)
    ep.set_defaults(func=cmd_eval)

    vp = sub.add_parser("serve", help="run the live elicitation HTTP service")
    vp.add_argument("--host", default="127.0.0.1")
    vp.add_argument("--port", type=int, default=8321)
    vp.add_argument("--data-dir", default="elicit-data")
    vp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
