"""Experiment orchestration: configs, runs, sweeps, rate fits, trace files and plots."""

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import BadParams, BadTrace, ConfigError, InsufficientPoints
from .generators import generate_instance, instance_from_dict, instance_to_dict, load_instance, shipped_instance
from .play import Schedule, compute_ne, run, run_fixed_point_baseline

TRACE_HEADER = ("t", "sigma_mu", "sigma_pi", "dist_D", "dist_W", "J", "avg_sigma_mu", "avg_dist_D")
SWEEP_AXES = ("T", "epsilon", "lambda", "coupling")


@dataclass
class RunConfig:
    instance: object = None  # path, generator spec {"kind", "params", "seed"} or None (shipped)
    lam: float = 0.5
    T: int = 1000
    c_alpha: Optional[float] = None
    c_beta: Optional[float] = None
    c_eta: Optional[float] = None
    mode: str = "D"
    evaluator: dict = field(default_factory=lambda: {"kind": "exact"})
    diagnostics: str = "endpoint"
    seed: int = 0
    out: Optional[str] = None
    method: str = "single"
    inner_tol: float = 1e-10
    ne_tol: float = 1e-10
    name: str = "run"

    _KEYS = {"instance", "lambda", "lam", "T", "c_alpha", "c_beta", "c_eta", "mode", "evaluator",
             "diagnostics", "seed", "out", "method", "inner_tol", "ne_tol", "name"}

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = set(d) - cls._KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kw = dict(d)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        inst = kw.get("instance")
        if isinstance(inst, str) and base_dir is not None and not os.path.isabs(inst):
            kw["instance"] = str(Path(base_dir) / inst)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.mode not in ("D", "W"):
            raise ConfigError(f"mode must be 'D' or 'W', got {self.mode!r}")
        if self.diagnostics not in ("full", "endpoint"):
            raise ConfigError("diagnostics must be 'full' or 'endpoint'")
        if self.method not in ("single", "baseline"):
            raise ConfigError("method must be 'single' or 'baseline'")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T!r}")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.out is not None:
            out = Path(self.out)
            probe = out if out.exists() else out.parent
            while not probe.exists():
                probe = probe.parent
            if not probe.is_dir():
                raise ConfigError(f"output path {self.out} lies under a non-directory {probe}")
            if not os.access(probe, os.W_OK):
                raise ConfigError(f"output directory {self.out} is not writable")
        self.schedule()

    def schedule(self) -> Schedule:
        return Schedule.default(self.lam, self.T, self.mode, self.c_alpha, self.c_beta, self.c_eta)

    def evaluator_spec(self) -> dict:
        spec = dict(self.evaluator or {"kind": "exact"})
        if spec.get("kind", "exact") != "exact":
            spec.setdefault("seed", self.seed)
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(d, base_dir=path.parent)


def resolve_instance(spec):
    if spec is None:
        return shipped_instance()
    if isinstance(spec, (str, Path)):
        return load_instance(spec)
    if isinstance(spec, dict):
        if "states" in spec:
            return instance_from_dict(spec)
        return generate_instance(spec.get("kind", "crowding"), spec.get("params", {}), spec.get("seed", 0))
    return spec


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return "nan" if x != x else repr(float(x))


def write_trace_csv(trace, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in trace.rows():
            w.writerow([row[0]] + [_fmt(x) for x in row[1:]])
    return path


def read_trace_csv(path) -> dict:
    """Columns of a trace CSV as float arrays keyed by header name."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise BadTrace(f"cannot read trace {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise BadTrace(f"{path}: missing or unexpected header")
    if len(rows) < 2:
        raise BadTrace(f"{path}: trace has no rows")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise BadTrace(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(TRACE_HEADER):
        raise BadTrace(f"{path}: ragged rows")
    return {name: data[:, i] for i, name in enumerate(TRACE_HEADER)}


# ---------------------------------------------------------------------------
# single experiments
# ---------------------------------------------------------------------------

def run_experiment(config: RunConfig, write: bool = True, ne=None) -> dict:
    """Solve the equilibrium, run the configured method and write trace + summary."""
    start = time.perf_counter()
    model = resolve_instance(config.instance)
    G = model.gram()
    if ne is None:
        ne = compute_ne(model, G, config.lam, config.ne_tol)
    if config.method == "baseline":
        trace = run_fixed_point_baseline(model, G, config.lam, config.T, config.inner_tol, ne=ne)
        schedule = None
    else:
        schedule = config.schedule()
        trace = run(model, G, schedule, config.evaluator_spec(), ne=ne,
                    diagnostics=config.diagnostics)
    runtime = time.perf_counter() - start
    summary = trace.summary()
    summary.update({
        "runtime_s": runtime,
        "ne": {"lambda_residual": ne.lambda_residual, "agent_gap": ne.agent_gap,
               "iterations": ne.iterations, "contraction": ne.contraction},
        "schedule": schedule.to_dict() if schedule else None,
        "config": config.to_dict(),
        "final_L_distance_to_ne": float(G.distance(trace.Ls[-1], ne.L)),
    })
    if write and config.out is not None:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        summary["trace_csv"] = str(write_trace_csv(trace, out / f"{config.name}_trace.csv"))
        (out / f"{config.name}_summary.json").write_text(json.dumps(_jsonable(summary), indent=2))
    summary["_trace"] = trace
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


# ---------------------------------------------------------------------------
# sweeps and rate fits
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    metric: str
    axis: str = "T"
    n_points: int = 0

    def to_dict(self):
        return asdict(self)


def fit_rate(x, y, metric: str = "metric", axis: str = "T") -> RateFit:
    """Least-squares line through ``(log x, log y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(np.unique(x)) < 3:
        raise InsufficientPoints(f"rate fit needs at least 3 distinct points, got {len(np.unique(x))}")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, metric, axis, int(len(x)))


@dataclass
class SweepSpec:
    base: RunConfig
    axis: str
    values: list
    replications: int = 1
    metric: Optional[str] = None

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep axis needs at least one value")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")

    @property
    def fit_metric(self) -> str:
        if self.metric:
            return self.metric
        if self.axis == "epsilon":
            return "final_dist_D" if self.base.mode == "D" else "final_dist_W"
        return "avg_error" if self.base.mode == "D" else "avg_error_W"

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "SweepSpec":
        try:
            base = RunConfig.from_dict(d.get("base", {}), base_dir)
            return cls(base, d["axis"], list(d["values"]), int(d.get("replications", 1)), d.get("metric"))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad sweep spec: {exc}") from exc


def load_sweep(path) -> SweepSpec:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep spec {path}: {exc}") from exc
    return SweepSpec.from_dict(d, base_dir=path.parent)


def _point_config(spec: SweepSpec, value, rep: int, idx: int) -> RunConfig:
    base = spec.base
    cfg = RunConfig(**{k: getattr(base, k) for k in RunConfig.__dataclass_fields__})
    cfg.seed = base.seed + rep
    cfg.name = f"p{idx:03d}_r{rep}"
    if spec.axis == "T":
        cfg.T = int(value)
    elif spec.axis == "lambda":
        cfg.lam = float(value)
    elif spec.axis == "epsilon":
        cfg.evaluator = {"kind": "noisy", "epsilon": float(value), "seed": cfg.seed}
    elif spec.axis == "coupling":
        inst = instance_to_dict(resolve_instance(base.instance))
        inst["generator"]["params"]["c"] = float(value)
        cfg.instance = inst
    cfg.validate()
    return cfg


def sweep_threads() -> int:
    env = os.environ.get("MFG_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"MFG_THREADS must be an integer, got {env!r}") from exc
        return max(1, n)
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, out=None, threads: Optional[int] = None) -> dict:
    """Run every (value, replication) point, aggregate, and fit a log-log slope."""
    jobs = []
    for i, v in enumerate(spec.values):
        for r in range(spec.replications):
            cfg = _point_config(spec, v, r, i)
            cfg.out = None if out is None else str(Path(out) / f"point_{i:03d}")
            jobs.append((i, v, r, cfg))
    workers = min(threads or sweep_threads(), len(jobs))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda job: run_experiment(job[3]), jobs))

    metric = spec.fit_metric
    points = []
    for (i, v, r, cfg), res in zip(jobs, results):
        points.append({"index": i, "value": v, "replication": r, **_jsonable(res)})
    agg = []
    for i, v in enumerate(spec.values):
        vals = [p[metric] for p in points if p["index"] == i and p.get(metric) is not None]
        agg.append({"value": v, metric: float(np.mean(vals)) if vals else None,
                    "std": float(np.std(vals)) if vals else None, "n": len(vals)})
    report = {"axis": spec.axis, "metric": metric, "points": points, "aggregate": agg}
    try:
        xs = [a["value"] for a in agg if a[metric] is not None]
        ys = [a[metric] for a in agg if a[metric] is not None]
        report["fit"] = fit_rate(xs, ys, metric, spec.axis).to_dict()
    except InsufficientPoints as exc:
        report["fit"] = None
        report["fit_error"] = str(exc)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "sweep_summary.json").write_text(json.dumps(_jsonable(report), indent=2))
    return report


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

PLOT_METRICS = ("sigma_mu", "sigma_pi", "dist_D")
_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_polyline(xs, ys, colour, label):
    pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" '
            f'data-metric="{label}" points="{pts}"/>')


def render_svg(series: dict, width=640, height=400, title="") -> str:
    """Log-log line chart; ``series`` maps label -> (t, values)."""
    pad = 50
    clean = {}
    for label, (t, y) in series.items():
        t, y = np.asarray(t, float), np.asarray(y, float)
        ok = (t > 0) & (y > 0) & np.isfinite(y)
        if ok.any():
            clean[label] = (np.log10(t[ok]), np.log10(y[ok]))
    if not clean:
        raise BadTrace("nothing to plot: no positive finite values")
    xmin = min(v[0].min() for v in clean.values())
    xmax = max(v[0].max() for v in clean.values())
    ymin = min(v[1].min() for v in clean.values())
    ymax = max(v[1].max() for v in clean.values())
    xspan = (xmax - xmin) or 1.0
    yspan = (ymax - ymin) or 1.0

    def sx(x):
        return pad + (x - xmin) / xspan * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - ymin) / yspan * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">log10 t</text>',
           f'<text x="12" y="{pad - 10}" font-size="12">log10 value [{ymin:.2f}, {ymax:.2f}]</text>']
    if title:
        out.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>')
    for k, (label, (x, y)) in enumerate(clean.items()):
        colour = _COLOURS[k % len(_COLOURS)]
        out.append(_svg_polyline(sx(x), sy(y), colour, label))
        out.append(f'<text x="{width - pad + 4}" y="{pad + 14 * k}" font-size="11" '
                   f'fill="{colour}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(trace_paths, out_path, metrics=PLOT_METRICS) -> Path:
    if isinstance(trace_paths, (str, Path)):
        trace_paths = [trace_paths]
    series = {}
    for path in trace_paths:
        cols = read_trace_csv(path)
        tag = Path(path).stem if len(trace_paths) > 1 else ""
        for name in metrics:
            label = f"{tag}:{name}" if tag else name
            series[label] = (cols["t"], cols[name])
    svg = render_svg(series, title=" ".join(Path(p).name for p in trace_paths))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(svg)
    return out_path
