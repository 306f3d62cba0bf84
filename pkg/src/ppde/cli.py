"""Command line entry point ``ppde``."""

import json
import logging
import sys

import click

from . import coefficients as cf
from . import dataset as ds
from . import experiments as ex
from . import fem
from . import network as nn
from .training import evaluate, train


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log training progress.")
def main(verbose):
    """Neural surrogates for the parametric diffusion equation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")


@main.command()
@click.option("--family", "kind", type=click.Choice([v.value for v in cf.Variant]), required=True)
@click.option("--p", type=int)
@click.option("--s", type=int)
@click.option("--k", type=int)
@click.option("--sigma", type=float, default=0.0, show_default=True)
@click.option("--mu", type=float, default=1.0, show_default=True)
@click.option("--r", type=float, default=0.8, show_default=True)
@click.option("--mesh-n", type=int, default=33, show_default=True)
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen(kind, p, s, k, sigma, mu, r, mesh_n, count, seed, out):
    """Generate a dataset of (parameter, FE solution) records."""
    spec = {"type": kind, "sigma": sigma, "mu": mu, "r": r}
    spec.update({key: v for key, v in (("p", p), ("s", s), ("k", k)) if v is not None})
    family = ex.family_from_spec(spec)
    data = ds.generate(family, mesh_n, count, seed)
    ds.save(data, out)
    click.echo(f"wrote {count} records (p={family.p}, D={data.D}) to {out}")


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--test-data", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--checkpoint", type=click.Path(dir_okay=False), required=True)
@click.option("--history", type=click.File("w"), help="CSV file for per-epoch errors.")
def train_cmd(data_path, test_data, config_path, checkpoint, history):
    """Train a network on a dataset file and write a checkpoint."""
    data = ds.load(data_path)
    test = ds.load(test_data) if test_data else None
    raw = {}
    if config_path:
        with open(config_path) as fh:
            raw = json.load(fh)
        raw.pop("study", None)
    raw["family"] = ex.family_to_spec(data.family)
    raw.setdefault("mesh", {})["n"] = data.mesh_n
    config = ex.ExperimentConfig.from_dict(raw)
    gram = ex.gram_for(data.mesh_n)
    net = nn.init_network(config.architecture, config.train.init_std, config.net_seed,
                          config.alpha)
    net, hist = train(net, data, gram, config.train, test, history)
    nn.save_checkpoint(net, checkpoint)
    summary = ex.convergence_report(hist)
    click.echo(json.dumps(summary))


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
def eval_cmd(checkpoint, data_path):
    """Mean and max relative H1 error of a checkpoint on a dataset."""
    net = nn.load_checkpoint(checkpoint)
    data = ds.load(data_path)
    mean, worst = evaluate(net, data, ex.gram_for(data.mesh_n))
    click.echo(json.dumps({"mean_rel": mean, "max_rel": worst, "count": len(data)}))


@main.command()
@click.argument("kind", type=click.Choice(["scaling", "samples"]))
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.File("w"), default="-")
def study(kind, config_path, out):
    """Run a scaling (over p) or sample-size study; write results CSV."""
    config, spec = ex.load_config(config_path)
    seeds = spec.get("seeds", [0])
    cache = ex.DatasetCache()
    records, summaries = [], []
    for seed in seeds:
        run = config.with_seed(seed)
        if kind == "scaling":
            if "values" not in spec:
                raise click.UsageError("scaling study needs study.values")
            res = ex.scaling_study(run, spec["values"], cache, seed)
            summaries.append({"seed": seed, "scale": res.scale, "slope": res.slope})
        else:
            if "sizes" not in spec:
                raise click.UsageError("sample-size study needs study.sizes")
            res = ex.sample_size_study(run, spec["sizes"], cache, seed)
            summaries.append({"seed": seed, "slope": res.slope, "intercept": res.intercept,
                              "r2": res.r2})
        records.extend(res.records)
    ex.write_results(records, out)
    for s in summaries:
        click.echo(json.dumps(s), err=True)


@main.group("fem")
def fem_group():
    """Finite element checks."""


@fem_group.command()
@click.option("--mesh-n", type=int, multiple=True, default=(17, 33), show_default=True)
def verify(mesh_n):
    """Manufactured-solution convergence check."""
    rows = fem.verify(mesh_n)
    click.echo("n,h1_error,relative_residual")
    for n, err, res in rows:
        click.echo(f"{n},{err:.6e},{res:.3e}")
    for (_, e1, _), (_, e2, _) in zip(rows, rows[1:]):
        click.echo(f"# ratio {e1 / e2:.4f}")


@main.group("net")
def net_group():
    """Network utilities."""


@net_group.command()
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--direction", type=click.Choice(["to-relu", "to-lrelu"]), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def convert(in_path, alpha, direction, out):
    """Convert between ReLU and alpha-LReLU networks with equal realizations.

    to-relu reads the input as an alpha-LReLU network; to-lrelu reads it as
    a ReLU network and targets slope alpha.
    """
    net = nn.load_checkpoint(in_path)
    if direction == "to-relu":
        net.alpha = alpha
        converted = nn.lrelu_to_relu(net)
    else:
        converted = nn.relu_to_lrelu(net, alpha)
    nn.save_checkpoint(converted, out)
    before, after = nn.counts(net).weights, nn.counts(converted).weights
    click.echo(f"architecture {converted.architecture}, weights {before} -> {after}")


if __name__ == "__main__":
    sys.exit(main())
