"""Command line interface: cost/prior/solve/track/bench/serve subcommands.

Every subcommand takes --out DIR, writes its artifacts there and echoes the
fully resolved configuration for provenance.  Exit codes: 0 success, 2 input
validation failure, 3 solver failure.
"""

from __future__ import annotations

import json
import pathlib
import sys

import click
import numpy as np

from .backtrack import BacktrackError
from .cost import CostError, cost_from_score, orientation_score_oof, read_image
from .grid import GridError, LiftedPoint, ScalarField, index_of, read_field, write_field, write_plane
from .pipeline import (TrackingConfig, ValidationError, build_fields, jaccard,
                       render_overlay, run_benchmark, summarize_benchmark,
                       synth_benchmark, track)
from .prior import PriorError, prior_from_segmentation
from .solver import SeedSet, SolverError, solve

EXIT_VALIDATION = 2
EXIT_SOLVER = 3

_VALIDATION_ERRORS = (ValidationError, GridError, CostError, PriorError, ValueError)
_SOLVER_ERRORS = (SolverError, BacktrackError)


def _run(fn):
    try:
        fn()
    except _SOLVER_ERRORS as e:
        click.echo(f"solver error: {e}", err=True)
        sys.exit(EXIT_SOLVER)
    except _VALIDATION_ERRORS as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


def _load_config(config_path, **overrides) -> TrackingConfig:
    if config_path:
        cfg = TrackingConfig.from_yaml(pathlib.Path(config_path).read_text())
    else:
        cfg = TrackingConfig()
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


def _outdir(out) -> pathlib.Path:
    p = pathlib.Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _echo_config(cfg: TrackingConfig, out: pathlib.Path):
    (out / "config.yaml").write_text(cfg.to_yaml())


@click.group()
def main():
    """Curvature-prior elastica geodesic tracking."""


@main.command()
@click.argument("image", type=click.Path(exists=True))
@click.option("--out", required=True, help="output directory")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--alpha", type=float)
@click.option("--n-theta", "n_theta", type=int)
def cost(image, out, config_path, alpha, n_theta):
    """Build the orientation-dependent cost field from IMAGE."""
    def go():
        cfg = _load_config(config_path, alpha=alpha, n_theta=n_theta)
        img = read_image(image)
        score = orientation_score_oof(img, scales=cfg.scales, n_theta=cfg.n_theta,
                                      h_x=cfg.h_x)
        psi = cost_from_score(score, cfg.alpha)
        o = _outdir(out)
        write_field(psi, o / "cost.cpgf")
        write_field(ScalarField(score.grid, score.values), o / "score.cpgf")
        _echo_config(cfg, o)
        click.echo(f"cost field written to {o/'cost.cpgf'}")
    _run(go)


@main.command()
@click.argument("segmentation", type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--u-max", "u_max", type=float)
def prior(segmentation, out, config_path, u_max):
    """Build the curvature prior from a binary SEGMENTATION image."""
    def go():
        cfg = _load_config(config_path, u_max=u_max)
        seg = read_image(segmentation) >= 0.5
        from .grid import make_grid
        grid = make_grid(seg.shape[0], seg.shape[1], cfg.n_theta, cfg.h_x)
        maps = prior_from_segmentation(seg, grid, min_len=cfg.min_len,
                                       window=cfg.window, u_max=cfg.u_max)
        o = _outdir(out)
        write_field(maps.omega, o / "omega.cpgf")
        write_plane(np.nan_to_num(maps.phi), cfg.h_x, o / "phi.cpg2")
        write_plane(np.nan_to_num(maps.vartheta), cfg.h_x, o / "vartheta.cpg2")
        write_plane(maps.region_label.astype(np.float64), cfg.h_x, o / "labels.cpg2")
        _echo_config(cfg, o)
        click.echo(f"prior written to {o/'omega.cpgf'} (width {maps.width:.2f}px"
                   f"{', degenerate' if maps.degenerate else ''})")
    _run(go)


@main.command(name="solve")
@click.argument("cost_field", type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--omega", "omega_path", type=click.Path(exists=True))
@click.option("--seed", nargs=3, type=float, required=True,
              help="seed as x y theta")
@click.option("--beta", type=float)
def solve_cmd(cost_field, out, config_path, omega_path, seed, beta):
    """Solve the distance map from a seed over a saved COST_FIELD."""
    def go():
        cfg = _load_config(config_path, beta=beta)
        psi = read_field(cost_field, allow_inf=False)
        om = read_field(omega_path, allow_inf=False) if omega_path else None
        grid = psi.grid
        idx = index_of(grid, LiftedPoint(*seed))
        dist, report = solve(grid, psi, om, cfg.beta, SeedSet.zeros([idx]),
                             L=cfg.L, eps=cfg.eps)
        o = _outdir(out)
        write_field(dist, o / "distance.cpgf")
        (o / "report.txt").write_text(report.to_text())
        _echo_config(cfg, o)
        click.echo(report.to_text().rstrip())
    _run(go)


@main.command(name="track")
@click.argument("image", type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--source", nargs=2, type=float, required=True)
@click.option("--target", nargs=2, type=float, required=True)
@click.option("--theta-source", type=float)
@click.option("--theta-target", type=float)
@click.option("--segmentation", type=click.Path(exists=True))
@click.option("--beta", type=float)
@click.option("--alpha", type=float)
@click.option("--no-prior", is_flag=True, default=False)
def track_cmd(image, out, config_path, source, target, theta_source,
              theta_target, segmentation, beta, alpha, no_prior):
    """Track a geodesic between two points on IMAGE."""
    def go():
        cfg = _load_config(config_path, beta=beta, alpha=alpha)
        if no_prior:
            cfg.prior_enabled = False
        img = read_image(image)
        seg = (read_image(segmentation) >= 0.5) if segmentation else None
        res = track(cfg, image=img, segmentation=seg, source=source,
                    target=target, theta_source=theta_source,
                    theta_target=theta_target)
        o = _outdir(out)
        (o / "path.json").write_text(res.path.to_json(indent=2))
        (o / "report.txt").write_text(res.report.to_text())
        im = render_overlay(img, [(res.path.physical, (255, 40, 40))],
                            endpoints=[(source[0], source[1], theta_source),
                                       (target[0], target[1], theta_target,
                                        (64, 64, 255))])
        im.save(o / "overlay.png")
        _echo_config(cfg, o)
        click.echo(f"path with {len(res.path)} samples, arrival value "
                   f"{res.path.distance:.3f}; artifacts in {o}")
    _run(go)


@main.command()
@click.option("--out", required=True)
@click.option("--seed", type=int, default=0)
@click.option("--families", default="u_turn,spiral,near_touch,crossing,wave")
@click.option("--noise-levels", "n_noise", type=int, default=8)
@click.option("--size", type=int, default=128)
@click.option("--alphas", default="3,4,5")
@click.option("--betas", default="4.5,6")
@click.option("--smoke", is_flag=True, default=False,
              help="single family, two noise levels")
def bench(out, seed, families, n_noise, size, alphas, betas, smoke):
    """Run the synthetic tracking benchmark and write scores."""
    def go():
        fams = tuple(families.split(","))
        levels = np.linspace(0.0, 0.15, n_noise)
        al = tuple(float(a) for a in alphas.split(","))
        be = tuple(float(b) for b in betas.split(","))
        if smoke:
            fams = fams[:1]
            levels = levels[:2]
            al, be = al[:1], be[:1]
        insts = synth_benchmark(seed, levels, size=size, families=fams)
        def progress(done, total, r):
            click.echo(f"[{done}/{total}] {r.family} noise={r.noise:.3f} "
                       f"{r.variant} a={r.alpha} b={r.beta}: J={r.jaccard:.3f}")
        results = run_benchmark(insts, alphas=al, betas=be, progress=progress)
        o = _outdir(out)
        rows = [vars(r) for r in results]
        (o / "results.json").write_text(json.dumps(rows, indent=1))
        summary = summarize_benchmark(results)
        (o / "summary.json").write_text(json.dumps(summary, indent=1))
        _echo_config(TrackingConfig(), o)
        click.echo(json.dumps(summary, indent=1))
    _run(go)


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
def serve(port, host):
    """Start the HTTP tracking service."""
    import uvicorn
    from .service import create_app
    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
