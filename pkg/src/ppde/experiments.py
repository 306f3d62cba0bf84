"""Experiment configs, single runs, scaling / sample-size studies and reports."""

import copy
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import coefficients as cf
from . import dataset as ds
from . import fem
from .network import init_network
from .training import TrainConfig, evaluate, train

RESULT_COLUMNS = [
    "testcase", "p", "sigma", "mu", "r", "s", "k", "n_train", "seed",
    "mean_rel_train", "mean_rel_test", "max_rel_test", "epochs", "wall_time_s",
]

_SECTIONS = {
    "family": {"type", "p", "s", "k", "sigma", "mu", "r"},
    "mesh": {"n"},
    "network": {"widths", "alpha", "init_std", "seed"},
    "train": {"batch", "lr", "beta1", "beta2", "eps", "epochs", "seed", "eval_every"},
    "data": {"n_train", "n_test", "seed"},
    "study": {"values", "sizes", "seeds"},
}

DESK_PROFILE = {
    "mesh": {"n": 33},
    "network": {"widths": [100] * 5, "alpha": 0.2, "init_std": 0.1, "seed": 0},
    "train": {"batch": 256, "lr": 2e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
              "epochs": 2000, "seed": 0, "eval_every": 50},
    "data": {"n_train": 2000, "n_test": 500, "seed": 0},
}

FULL_PROFILE = {
    "mesh": {"n": 101},
    "network": {"widths": [300] * 10, "alpha": 0.2, "init_std": 0.1, "seed": 0},
    "train": {"batch": 256, "lr": 2e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
              "epochs": 40_000, "seed": 0, "eval_every": 500},
    "data": {"n_train": 20_000, "n_test": 5_000, "seed": 0},
}


class ConfigError(ValueError):
    pass


def family_from_spec(spec: dict) -> cf.ParametricFamily:
    """Build a family from a config ``family`` section.

    Grid families accept ``s`` or a matching ``p``; clipped polynomials
    accept ``k`` or a matching ``p``.
    """
    kind = cf.Variant(spec["type"])
    mu = float(spec.get("mu", 1.0))
    if kind == cf.Variant.TRIG_POLY:
        return cf.trig_poly(int(spec["p"]), float(spec.get("sigma", 0.0)), mu)
    if kind == cf.Variant.CLIPPED_POLY:
        k = spec.get("k")
        if k is None:
            p = int(spec["p"])
            k = next((k for k in range(p) if math.comb(k + 2, 2) == p), None)
            if k is None:
                raise ConfigError(f"p={p} is not (k+2)(k+1)/2 for any degree k")
        return cf.clipped_poly(int(k), mu)
    s = spec.get("s")
    if s is None:
        p = int(spec["p"])
        per_cell = 2 if kind == cf.Variant.COOKIES_VARIABLE else 1
        s = math.isqrt(p // per_cell)
        if per_cell * s * s != p:
            raise ConfigError(f"p={p} does not match an s x s grid for {kind.value}")
    if kind == cf.Variant.CHESSBOARD:
        return cf.chessboard(int(s), mu)
    if kind == cf.Variant.COOKIES_FIXED:
        return cf.cookies_fixed(int(s), mu, float(spec.get("r", 0.8)))
    return cf.cookies_variable(int(s), mu)


def family_to_spec(family: cf.ParametricFamily) -> dict:
    spec = {"type": family.variant.value, "p": family.p, "mu": family.mu}
    if family.variant == cf.Variant.TRIG_POLY:
        spec["sigma"] = family.sigma
    elif family.variant == cf.Variant.CLIPPED_POLY:
        spec["k"] = family.k
    else:
        spec["s"] = family.s
        if family.variant == cf.Variant.COOKIES_FIXED:
            spec["r"] = family.r
    return spec


@dataclass
class ExperimentConfig:
    family: cf.ParametricFamily
    mesh_n: int
    hidden_widths: tuple
    alpha: float
    net_seed: int
    train: TrainConfig
    n_train: int
    n_test: int
    data_seed: int

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be >= 1")
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)

    @property
    def architecture(self) -> tuple:
        return (self.family.p,) + self.hidden_widths + (self.mesh_n**2,)

    @classmethod
    def from_dict(cls, raw: dict, base: dict = None) -> "ExperimentConfig":
        """Parse a config mapping, filling missing sections from ``base``.

        Unknown sections and keys raise :class:`ConfigError`.
        """
        for section, body in raw.items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section {section!r}")
            unknown = set(body) - _SECTIONS[section]
            if unknown:
                raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
        merged = copy.deepcopy(DESK_PROFILE if base is None else base)
        for section, body in raw.items():
            merged.setdefault(section, {}).update(body)
        if "family" not in merged:
            raise ConfigError("config needs a 'family' section")
        net, tr, data = merged["network"], merged["train"], merged["data"]
        train_cfg = TrainConfig(
            batch_size=int(tr["batch"]), lr=float(tr["lr"]), beta1=float(tr["beta1"]),
            beta2=float(tr["beta2"]), eps=float(tr["eps"]), epochs=int(tr["epochs"]),
            seed=int(tr["seed"]), init_std=float(net["init_std"]),
            eval_every=int(tr.get("eval_every", 50)),
        )
        return cls(
            family=family_from_spec(merged["family"]), mesh_n=int(merged["mesh"]["n"]),
            hidden_widths=tuple(net["widths"]), alpha=float(net["alpha"]),
            net_seed=int(net["seed"]), train=train_cfg, n_train=int(data["n_train"]),
            n_test=int(data["n_test"]), data_seed=int(data["seed"]),
        )

    def to_dict(self) -> dict:
        t = self.train
        return {
            "family": family_to_spec(self.family),
            "mesh": {"n": self.mesh_n},
            "network": {"widths": list(self.hidden_widths), "alpha": self.alpha,
                        "init_std": t.init_std, "seed": self.net_seed},
            "train": {"batch": t.batch_size, "lr": t.lr, "beta1": t.beta1, "beta2": t.beta2,
                      "eps": t.eps, "epochs": t.epochs, "seed": t.seed,
                      "eval_every": t.eval_every},
            "data": {"n_train": self.n_train, "n_test": self.n_test, "seed": self.data_seed},
        }

    def with_family(self, family: cf.ParametricFamily) -> "ExperimentConfig":
        return replace(self, family=family)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Shift every seed by ``seed``; data seeds move in steps of 2 so that
        the train/test pairs of different runs never overlap."""
        return replace(
            self,
            net_seed=self.net_seed + seed,
            data_seed=self.data_seed + 2 * seed,
            train=replace(self.train, seed=self.train.seed + seed),
        )


def load_config(path) -> tuple:
    """Read a JSON config file; returns (ExperimentConfig, study section)."""
    with open(path) as fh:
        raw = json.load(fh)
    study = raw.pop("study", {})
    unknown = set(study) - _SECTIONS["study"]
    if unknown:
        raise ConfigError(f"unknown keys in 'study': {sorted(unknown)}")
    return ExperimentConfig.from_dict(raw), study


@dataclass
class ResultRecord:
    testcase: str
    p: int
    sigma: float
    mu: float
    r: float
    s: int
    k: int
    n_train: int
    seed: int
    mean_rel_train: float
    mean_rel_test: float
    max_rel_test: float
    epochs: int
    wall_time_s: float

    def __post_init__(self):
        if min(self.mean_rel_train, self.mean_rel_test, self.max_rel_test) < 0:
            raise ValueError("relative errors cannot be negative")


def write_results(records, stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=RESULT_COLUMNS)
    writer.writeheader()
    for rec in records:
        writer.writerow(asdict(rec))


def read_results(stream) -> list:
    out = []
    types = {f.name: f.type for f in fields(ResultRecord)}
    for row in csv.DictReader(stream):
        out.append(ResultRecord(**{k: types[k](v) for k, v in row.items()}))
    return out


class DatasetCache:
    """Memoizes generated datasets by (family, mesh, count, seed).

    A longer cached draw serves shorter requests through its prefix.
    """

    def __init__(self):
        self._store = {}

    def get(self, family, mesh_n, count, seed) -> ds.Dataset:
        key = (family, mesh_n, seed)
        cached = self._store.get(key)
        if cached is None or len(cached) < count:
            cached = ds.generate(family, mesh_n, count, seed)
            self._store[key] = cached
        return cached if len(cached) == count else cached.head(count)


_GRAMS = {}


def gram_for(mesh_n: int):
    if mesh_n not in _GRAMS:
        _GRAMS[mesh_n] = fem.gram_matrix(fem.build_mesh(mesh_n))
    return _GRAMS[mesh_n]


@dataclass
class RunOutput:
    record: ResultRecord
    history: object
    network: object


def run_testcase(config: ExperimentConfig, cache: DatasetCache = None, seed_tag: int = None,
                 history_stream=None) -> RunOutput:
    """Generate (or reuse) data, train one network and evaluate it."""
    cache = DatasetCache() if cache is None else cache
    fam = config.family
    start = time.perf_counter()
    train_data = cache.get(fam, config.mesh_n, config.n_train, config.data_seed)
    test_data = cache.get(fam, config.mesh_n, config.n_test, config.data_seed + 1)
    gram = gram_for(config.mesh_n)
    net = init_network(config.architecture, config.train.init_std, config.net_seed, config.alpha)
    net, history = train(net, train_data, gram, config.train, test_data, history_stream)
    train_mean, _ = evaluate(net, train_data, gram)
    test_mean, test_max = evaluate(net, test_data, gram)
    record = ResultRecord(
        testcase=fam.variant.value, p=fam.p, sigma=fam.sigma, mu=fam.mu, r=fam.r, s=fam.s,
        k=fam.k, n_train=config.n_train,
        seed=config.data_seed if seed_tag is None else seed_tag,
        mean_rel_train=train_mean, mean_rel_test=test_mean, max_rel_test=test_max,
        epochs=config.train.epochs, wall_time_s=time.perf_counter() - start,
    )
    return RunOutput(record, history, net)


def dimension_variants(template: cf.ParametricFamily, values) -> list:
    """Copies of ``template`` with its size knob (p, s or k) set to each value."""
    spec = family_to_spec(template)
    knob = {cf.Variant.TRIG_POLY: "p", cf.Variant.CLIPPED_POLY: "k"}.get(template.variant, "s")
    out = []
    for v in values:
        s = {key: val for key, val in spec.items() if key not in ("p", "s", "k")}
        s[knob] = int(v)
        out.append(family_from_spec(s))
    return out


def architecture_diff(configs) -> list:
    """Fields other than the input width that differ across configs."""
    def signature(c):
        return {"hidden": c.hidden_widths, "output": c.mesh_n**2, "alpha": c.alpha,
                "init_std": c.train.init_std, "train": replace(c.train),
                "net_seed": c.net_seed, "data_seed": c.data_seed, "n_train": c.n_train,
                "n_test": c.n_test}

    ref = signature(configs[0])
    return sorted({k for c in configs[1:] for k, v in signature(c).items() if v != ref[k]})


@dataclass
class ScalingResult:
    records: list
    slope: float
    scale: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_results(self.records, buf)
        return buf.getvalue()


def scaling_exponent(ps, errors, scale: str = "loglog") -> float:
    """Least-squares slope of log(error) against log(p) (or error against log p)."""
    x = np.log(np.asarray(ps, dtype=float))
    y = np.asarray(errors, dtype=float)
    if scale == "loglog":
        y = np.log(y)
    return linear_regression_r2(x, y)[0]


def scaling_study(config: ExperimentConfig, values, cache=None, seed_tag=None) -> ScalingResult:
    """One run per parameter dimension; everything but the input width is shared."""
    if len(values) < 2:
        raise ValueError("a scaling study needs at least two dimensions")
    cache = DatasetCache() if cache is None else cache
    configs = [config.with_family(f) for f in dimension_variants(config.family, values)]
    diff = architecture_diff(configs)
    if diff:
        raise ValueError(f"fixed-architecture protocol violated by {diff}")
    records = [run_testcase(c, cache, seed_tag).record for c in configs]
    scale = "semilog" if config.family.variant == cf.Variant.CLIPPED_POLY else "loglog"
    slope = scaling_exponent([r.p for r in records], [r.mean_rel_test for r in records], scale)
    return ScalingResult(records, slope, scale)


def linear_regression_r2(xs, ys) -> tuple:
    """Ordinary least squares; returns (slope, intercept, R^2).

    Constant ``ys`` give slope 0 and R^2 = 0.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need at least two (x, y) pairs")
    if np.all(x == x[0]):
        raise ValueError("xs are all equal; slope undefined")
    xc, yc = x - x.mean(), y - y.mean()
    slope = float(xc @ yc / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(yc @ yc)
    if ss_tot == 0.0:
        return slope, intercept, 0.0
    resid = y - (slope * x + intercept)
    return slope, intercept, 1.0 - float(resid @ resid) / ss_tot


@dataclass
class SampleSizeResult:
    records: list
    slope: float
    intercept: float
    r2: float


def sample_size_study(config: ExperimentConfig, sizes, cache=None, seed_tag=None):
    """Train on nested prefixes of one training draw, then regress error on size."""
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    cache = DatasetCache() if cache is None else cache
    # Draw the largest set first so that every size is served as a prefix.
    cache.get(config.family, config.mesh_n, max(sizes), config.data_seed)
    records = [
        run_testcase(replace(config, n_train=n), cache, seed_tag).record for n in sizes
    ]
    slope, intercept, r2 = linear_regression_r2(sizes, [r.mean_rel_test for r in records])
    return SampleSizeResult(records, slope, intercept, r2)


def convergence_report(history, stream=None, tolerance: float = 0.1) -> dict:
    """Summarize a training history and optionally write its curves as CSV.

    The run is flagged as overfitting when the final test error exceeds the
    best test error by more than ``tolerance`` times the best.
    """
    if not history.train_error:
        raise ValueError("empty training history")
    if stream is not None:
        history.write_csv(stream)
    summary = {
        "epochs": len(history.train_error),
        "final_train": history.train_error[-1],
        "min_train": min(history.train_error),
    }
    if history.test_error:
        best = min(history.test_error)
        final = history.test_error[-1]
        summary.update(
            final_test=final, min_test=best,
            best_epoch=history.test_epochs[int(np.argmin(history.test_error))],
            overfit=bool(final - best > tolerance * best),
        )
    else:
        summary["overfit"] = False
    return summary
