"""End-to-end experiment driver: data, training, curvature, searches, reports.

Configuration is a flat ``key = value`` text file with dotted section keys,
for example::

    dataset.kind = two_moons
    model.layer_sizes = 2, 32, 32, 2
    search.budget = 50

See ``DEFAULT_CONFIG_TEXT`` for every key and its default.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bo as bo_mod
from .bo import EvaluationRecord, SearchConfig, best_so_far, read_trace
from .curvature import (
    DiagonalCurvature,
    diagonal_fisher,
    groups_from_log10,
    layer_layout,
)
from .data import gen_dataset, load_idx_dataset, read_csv, split, write_csv
from .gp import KernelConfig
from .laplace import LaplacePosterior, laplace_posterior, predict_mc
from .metrics import ScoreReport, reliability, score
from .nn import (
    ArchSpec,
    Dataset,
    Network,
    forward_batch,
    init_network,
    read_params,
    train_sgd,
    write_params,
)

log = logging.getLogger(__name__)

class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


# -- configuration -----------------------------------------------------------


def _floats(s) -> tuple[float, ...]:
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _ints(s) -> tuple[int, ...]:
    return tuple(int(v) for v in str(s).split(",") if v.strip())


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "two_moons"  # two_moons | gaussian_blobs | csv | idx
    n_train: int = 2000
    n_val: int = 1000
    n_test: int = 0
    noise: float = 0.1
    seed: int = 0
    n_classes: int = 2
    separation: float = 4.0
    train_path: str = ""  # csv / idx images
    val_path: str = ""
    test_path: str = ""
    train_labels: str = ""  # idx only
    val_labels: str = ""


@dataclass(frozen=True)
class ModelConfig:
    layer_sizes: tuple[int, ...] = (2, 32, 32, 2)
    activation: str = "tanh"
    init_seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.1
    batch_size: int = 32
    seed: int = 0


@dataclass(frozen=True)
class LaplaceConfig:
    t: int = 30
    groups: str = "single"  # single | per-layer | hidden-vs-final


@dataclass(frozen=True)
class MetricsConfig:
    m_bins: int = 15


@dataclass(frozen=True)
class SearchSection:
    budget: int = 50
    n_init: int = 5
    candidate_count: int = 2048
    beta: float = 0.9
    kappa: float = 2.0
    xi: float = 0.01
    log10_n_bounds: tuple[float, ...] = (0.0, 8.0)
    log10_tau_bounds: tuple[float, ...] = (-4.0, 4.0)
    seed: int = 0


@dataclass(frozen=True)
class GPSection:
    lengthscales: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    noise_var: float = 0.01
    cost_warp: str = "none"  # none | log


@dataclass(frozen=True)
class RunSection:
    repetitions: int = 20
    seed: int = 0
    seeds: tuple[int, ...] = ()  # explicit per-repetition seeds; default seed + r
    out: str = "runs/default"


_SECTIONS = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "laplace": LaplaceConfig,
    "metrics": MetricsConfig,
    "search": SearchSection,
    "gp": GPSection,
    "experiment": RunSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    laplace: LaplaceConfig = field(default_factory=LaplaceConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    search: SearchSection = field(default_factory=SearchSection)
    gp: GPSection = field(default_factory=GPSection)
    experiment: RunSection = field(default_factory=RunSection)

    @property
    def arch(self) -> ArchSpec:
        return ArchSpec(self.model.layer_sizes, self.model.activation)

    @property
    def layout(self) -> list[frozenset]:
        return layer_layout(self.laplace.groups, self.arch.n_layers)

    @property
    def repetition_seeds(self) -> tuple[int, ...]:
        if self.experiment.seeds:
            return self.experiment.seeds[: self.experiment.repetitions]
        return tuple(self.experiment.seed + r for r in range(self.experiment.repetitions))

    def search_config(self, seed: int | None = None) -> SearchConfig:
        s = self.search
        n_groups = len(self.layout)
        bounds = (tuple(s.log10_n_bounds), tuple(s.log10_tau_bounds)) * n_groups
        seed = s.seed if seed is None else seed
        return SearchConfig(
            bounds=bounds, budget=s.budget, n_init=s.n_init, candidate_count=s.candidate_count,
            beta=s.beta, kappa=s.kappa, xi=s.xi, seed=seed, eval_seed=seed,
            kernel=KernelConfig(lengthscales=self.gp.lengthscales, noise_var=self.gp.noise_var),
            cost_warp=self.gp.cost_warp,
        )

    def with_overrides(self, **dotted) -> "ExperimentConfig":
        return parse_config_text("\n".join(f"{k} = {v}" for k, v in dotted.items()), base=self)

    def to_text(self) -> str:
        lines = []
        for name in _SECTIONS:
            sec = getattr(self, name)
            for f in fields(sec):
                v = getattr(sec, f.name)
                if isinstance(v, tuple):
                    v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
                lines.append(f"{name}.{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(template, raw: str):
    if isinstance(template, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        if template and isinstance(template[0], float):
            return _floats(raw)
        if template and isinstance(template[0], int):
            return _ints(raw)
        return _ints(raw) if raw.strip() else ()
    return raw.strip()


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    updates: dict[str, dict] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in _SECTIONS or name not in {f.name for f in fields(_SECTIONS[section])}:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        current = getattr(cfg, section)
        try:
            updates.setdefault(section, {})[name] = _coerce(getattr(current, name), raw)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
    for section, kv in updates.items():
        cfg = replace(cfg, **{section: replace(getattr(cfg, section), **kv)})
    cfg.arch  # validates layer sizes / activation
    cfg.layout
    if cfg.dataset.kind in ("two_moons", "gaussian_blobs") and cfg.dataset.n_val < 1:
        raise ValueError("dataset.n_val must be >= 1")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


DEFAULT_CONFIG_TEXT = ExperimentConfig().to_text()


# -- stages ------------------------------------------------------------------


@dataclass(frozen=True)
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset | None = None


def make_splits(cfg: ExperimentConfig) -> Splits:
    d = cfg.dataset
    if d.kind in ("two_moons", "gaussian_blobs"):
        kw = {"n_classes": d.n_classes, "separation": d.separation} if d.kind == "gaussian_blobs" else {}
        total = d.n_train + d.n_val + d.n_test
        data = gen_dataset(d.kind, total, d.noise, d.seed, **kw)
        sizes = [d.n_train, d.n_val] + ([d.n_test] if d.n_test else [])
        parts = split(data, sizes)
        return Splits(parts[0], parts[1], parts[2] if d.n_test else None)
    if d.kind == "csv":
        return Splits(read_csv(d.train_path), read_csv(d.val_path),
                      read_csv(d.test_path) if d.test_path else None)
    if d.kind == "idx":
        return Splits(load_idx_dataset(d.train_path, d.train_labels, d.n_train or None),
                      load_idx_dataset(d.val_path, d.val_labels, d.n_val or None))
    raise ValueError(f"unknown dataset kind {d.kind!r}")


def _fingerprint(*parts) -> str:
    blob = json.dumps([asdict(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def network_fingerprint(cfg: ExperimentConfig) -> str:
    """Identifies the data/model/training settings a cached network came from."""
    return _fingerprint(cfg.dataset, cfg.model, cfg.train)


def save_cached(path, kind: str, arch, params, cfg: ExperimentConfig) -> None:
    write_params(path, arch, params, kind, {"fingerprint": network_fingerprint(cfg)})


def train_network(cfg: ExperimentConfig, train: Dataset) -> Network:
    net = init_network(cfg.arch, cfg.model.init_seed)
    t = cfg.train
    return train_sgd(net, train, t.epochs, t.lr, t.batch_size, t.seed)


def _cached(path: Path, kind: str, fingerprint: str):
    if not path.exists():
        return None
    try:
        arch, params, header = read_params(path, kind)
    except (ValueError, OSError):
        return None
    if header.get("fingerprint") != fingerprint:
        return None
    return arch, params


def load_or_train(cfg: ExperimentConfig, splits: Splits, out: Path) -> tuple[Network, DiagonalCurvature]:
    """Train the network and compute its curvature, reusing files under ``out``
    when they were produced from the same data/model/training settings."""
    fp = network_fingerprint(cfg)
    net_path, curv_path = out / "network.bin", out / "curvature.bin"
    hit = _cached(net_path, "network", fp)
    if hit is not None:
        net = Network(*hit)
    else:
        try:
            net = train_network(cfg, splits.train)
        except Exception as exc:
            raise StageError("train", exc) from exc
        save_cached(net_path, "network", net.arch, net.params, cfg)
    hit = _cached(curv_path, "curvature", fp)
    if hit is not None and hit[0] == net.arch:
        curv = DiagonalCurvature(*hit)
    else:
        try:
            curv = diagonal_fisher(net, splits.train)
        except Exception as exc:
            raise StageError("curvature", exc) from exc
        save_cached(curv_path, "curvature", curv.arch, curv.diag, cfg)
    return net, curv


@dataclass(frozen=True)
class EvalContext:
    """Everything needed to score one hyperparameter point; callable as a
    search objective ``ctx(point, eval_seed) -> ScoreReport``."""

    net: Network
    curvature: DiagonalCurvature
    data: Dataset
    t: int = 30
    layout: tuple[frozenset, ...] = ()
    m_bins: int = 15

    def __post_init__(self):
        if self.curvature.arch != self.net.arch:
            raise ValueError("curvature cache does not match the network architecture")
        layout = tuple(self.layout) or tuple(layer_layout("single", self.net.arch.n_layers))
        object.__setattr__(self, "layout", layout)

    def posterior(self, point) -> LaplacePosterior:
        return laplace_posterior(self.net, self.curvature, groups_from_log10(point, self.layout))

    def predict(self, point, eval_seed: int) -> np.ndarray:
        return predict_mc(self.posterior(point), self.data.inputs, self.t, eval_seed).probs

    def __call__(self, point, eval_seed: int) -> ScoreReport:
        return score(self.predict(point, eval_seed), self.data.labels, self.m_bins)

    def baseline(self) -> ScoreReport:
        return score(forward_batch(self.net, self.data.inputs), self.data.labels, self.m_bins)


def evaluate_point(point, ctx: EvalContext, eval_seed: int, iteration: int = 0,
                   acquisition: str = "INIT") -> EvaluationRecord:
    s = ctx(np.asarray(point, dtype=np.float64), eval_seed)
    return EvaluationRecord(iteration, tuple(float(v) for v in point), acquisition,
                            s.accuracy_pct, s.ece_pct, s.cost, int(eval_seed))


def make_context(cfg: ExperimentConfig, net: Network, curv: DiagonalCurvature, data: Dataset) -> EvalContext:
    return EvalContext(net, curv, data, cfg.laplace.t, tuple(cfg.layout), cfg.metrics.m_bins)


def search_meta(cfg: ExperimentConfig, baseline: ScoreReport, repetition: int | None = None) -> dict:
    meta = {
        "baseline": asdict(baseline),
        "groups": cfg.laplace.groups,
        "t": cfg.laplace.t,
        "m_bins": cfg.metrics.m_bins,
    }
    if repetition is not None:
        meta["repetition"] = repetition
    return meta


def run_search(method: str, ctx: EvalContext, scfg: SearchConfig, trace_path=None, meta=None):
    if method == "bo":
        return bo_mod.bo_search(ctx, scfg, trace_path, meta)
    if method == "random":
        return bo_mod.random_search(ctx, scfg, trace_path, meta)
    raise ValueError(f"unknown search method {method!r}; use 'bo' or 'random'")


@dataclass(frozen=True)
class RunArtifact:
    out_dir: Path
    network: Path
    curvature: Path
    traces: dict  # method -> list of trace paths, in repetition order
    summary: dict  # name -> csv path


def run_experiment(config, out: str | Path | None = None) -> RunArtifact:
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = Path(out or cfg.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())

    try:
        splits = make_splits(cfg)
        write_csv(splits.train, out / "data" / "train.csv")
        write_csv(splits.val, out / "data" / "val.csv")
        if splits.test is not None:
            write_csv(splits.test, out / "data" / "test.csv")
    except Exception as exc:
        raise StageError("data", exc) from exc

    net, curv = load_or_train(cfg, splits, out)
    ctx = make_context(cfg, net, curv, splits.val)
    baseline = ctx.baseline()
    (out / "baseline.json").write_text(json.dumps(asdict(baseline), sort_keys=True) + "\n")
    log.info("baseline accuracy %.2f%% ece %.3f%% cost %.3f", baseline.accuracy_pct,
             baseline.ece_pct, baseline.cost)

    traces: dict[str, list[Path]] = {"bo": [], "random": []}
    try:
        for r, seed in enumerate(cfg.repetition_seeds):
            scfg = cfg.search_config(seed)
            meta = search_meta(cfg, baseline, r)
            for method in ("bo", "random"):
                path = out / "traces" / f"{method}_rep{r:03d}.jsonl"
                run_search(method, ctx, scfg, path, meta)
                traces[method].append(path)
            log.info("repetition %d (seed %d) done", r, seed)
    except Exception as exc:
        raise StageError("search", exc) from exc

    try:
        summary = report(traces["bo"] + traces["random"], out / "summary")
        summary.update(reliability_reports(ctx, traces, out / "summary"))
        if splits.test is not None:
            summary["test"] = test_report(cfg, net, curv, splits.test, traces, out / "summary")
    except Exception as exc:
        raise StageError("report", exc) from exc
    return RunArtifact(out, out / "network.bin", out / "curvature.bin", traces, summary)


# -- reporting ---------------------------------------------------------------


def iterations_to_beat(costs: Sequence[float], target: float) -> int | None:
    """1-based number of evaluations after which the best cost is below ``target``."""
    for i, c in enumerate(best_so_far_from(costs)):
        if c < target:
            return i + 1
    return None


def best_so_far_from(costs) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(costs, dtype=np.float64))


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])


def _best_record(records: Sequence[EvaluationRecord]) -> EvaluationRecord:
    return min(records, key=lambda r: r.cost)


def load_traces(paths) -> list[tuple[Path, dict, list[EvaluationRecord]]]:
    out = []
    for p in paths:
        try:
            header, records = read_trace(p)
            header["method"], header["config"]["bounds"]  # schema check
        except (ValueError, KeyError, TypeError, OSError) as exc:
            log.warning("skipping %s: %s", p, exc)
            continue
        out.append((Path(p), header, records))
    return out


def report(trace_paths, out_dir) -> dict:
    """Summarise search traces into plot-ready CSVs; returns name -> path.

    Everything is derived from the traces: the deterministic baseline is read
    from each header's ``meta.baseline``.
    """
    out_dir = Path(out_dir)
    loaded = load_traces(trace_paths)
    by_method: dict[str, list] = {}
    for path, header, records in loaded:
        by_method.setdefault(header["method"], []).append((path, header, records))

    written = {}
    runs_rows, curve_rows, sample_rows, conv_rows = [], [], [], []
    table_rows = []
    baseline = None
    for method in sorted(by_method):
        runs = by_method[method]
        curves = []
        bests = []
        for k, (path, header, records) in enumerate(runs):
            rep = header.get("meta", {}).get("repetition", k)
            costs = [r.cost for r in records]
            curve = best_so_far(records)
            curves.append(curve)
            for i, (c, b) in enumerate(zip(costs, curve)):
                runs_rows.append([method, rep, i + 1, c, float(b)])
            for r in records:
                sample_rows.append([method, rep, r.iteration + 1, r.chosen_acquisition,
                                    ";".join(repr(v) for v in r.point), r.cost,
                                    r.accuracy_pct, r.ece_pct, r.status])
            base = header.get("meta", {}).get("baseline")
            if base is not None:
                baseline = base
                conv_rows.append([method, rep, iterations_to_beat(costs, base["cost"])])
            bests.append(_best_record(records))
        length = min(len(c) for c in curves)
        stacked = np.vstack([c[:length] for c in curves])
        for i in range(length):
            col = stacked[:, i]
            curve_rows.append([method, i + 1, float(col.mean()), float(col.std()),
                               float(np.median(col)), float(col.min()), float(col.max()), len(col)])
        accs = np.array([b.accuracy_pct for b in bests])
        eces = np.array([b.ece_pct for b in bests])
        costs = np.array([b.cost for b in bests])
        label = {"bo": "LA+BO", "random": "LA+RS"}.get(method, method)
        table_rows.append([label, float(accs.mean()), float(accs.std()), float(eces.mean()),
                           float(eces.std()), float(costs.mean()), float(costs.std()), len(bests)])
    if baseline is not None:
        table_rows.insert(0, ["baseline", baseline["accuracy_pct"], 0.0, baseline["ece_pct"], 0.0,
                              baseline["cost"], 0.0, 1])

    written["best_so_far"] = out_dir / "best_so_far.csv"
    _write_csv(written["best_so_far"],
               ["method", "iteration", "mean", "std", "median", "min", "max", "n_runs"], curve_rows)
    written["best_so_far_runs"] = out_dir / "best_so_far_runs.csv"
    _write_csv(written["best_so_far_runs"],
               ["method", "repetition", "iteration", "cost", "best_so_far"], runs_rows)
    written["samples"] = out_dir / "samples.csv"
    _write_csv(written["samples"],
               ["method", "repetition", "iteration", "acquisition", "point", "cost",
                "accuracy_pct", "ece_pct", "status"], sample_rows)
    written["table"] = out_dir / "table.csv"
    _write_csv(written["table"],
               ["setting", "accuracy_pct", "accuracy_std", "ece_pct", "ece_std", "cost",
                "cost_std", "n_runs"], table_rows)
    written["convergence"] = out_dir / "convergence.csv"
    _write_csv(written["convergence"], ["method", "repetition", "evaluations_to_beat_baseline"],
               conv_rows)
    return written


def reliability_reports(ctx: EvalContext, traces: dict, out_dir) -> dict:
    """Reliability bins for the deterministic net and for the best point each method found."""
    out_dir = Path(out_dir)
    written = {}
    base = reliability(forward_batch(ctx.net, ctx.data.inputs), ctx.data.labels, ctx.m_bins)
    written["reliability_baseline"] = out_dir / "reliability_baseline.csv"
    base.to_csv(written["reliability_baseline"])
    for method, paths in traces.items():
        loaded = load_traces(paths)
        if not loaded:
            continue
        best = _best_record([r for _, _, recs in loaded for r in recs if r.status == "ok"])
        probs = ctx.predict(best.point, best.eval_seed)
        name = f"reliability_{method}"
        written[name] = out_dir / f"{name}.csv"
        reliability(probs, ctx.data.labels, ctx.m_bins).to_csv(written[name])
    return written


def test_report(cfg, net, curv, test: Dataset, traces: dict, out_dir) -> Path:
    """Scores on the held-out test split for the baseline and each method's best point.

    The search never sees this split.
    """
    ctx = make_context(cfg, net, curv, test)
    rows = []
    b = ctx.baseline()
    rows.append(["baseline", b.accuracy_pct, b.ece_pct, b.cost])
    for method, paths in traces.items():
        loaded = load_traces(paths)
        if not loaded:
            continue
        best = _best_record([r for _, _, recs in loaded for r in recs if r.status == "ok"])
        s = ctx(best.point, best.eval_seed)
        rows.append([{"bo": "LA+BO", "random": "LA+RS"}.get(method, method),
                     s.accuracy_pct, s.ece_pct, s.cost])
    path = Path(out_dir) / "test_split.csv"
    _write_csv(path, ["setting", "accuracy_pct", "ece_pct", "cost"], rows)
    return path
