"""Batch experiment runner.

Each subcommand materializes one experiment kind from a YAML config file
(flags override config), runs it, and writes CSV artifacts plus a JSON run
manifest (spec hash, seed, wall time, artifact list, error record). Runs are
reproducible: identical spec + seed produce byte-identical CSVs regardless of
--jobs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import converter as conv
from . import mnist, nn
from .analytic import WeightVector, vac_equilibrium
from .perceptron import (PerceptronConfig, dynamic_duty_trace, perceptron_eval,
                         response_curve)
from .signals import ConstantSupply, PwmSignal, SinusoidSupply
from .transient import (VacConfig, VacStimulus, simulate_vac, sweep,
                        trace_metrics)

__all__ = ["ExperimentSpec", "ConfigError", "MissingDatasetError", "run", "main"]

MANIFEST_NAME = "run_manifest.json"

# The six stimulus rows of the weighted-adder reference table.
VAC_TABLE_ROWS = [
    {"duties": [0.70, 0.80, 0.90], "weights": [7, 7, 7]},
    {"duties": [0.50, 0.50, 0.50], "weights": [1, 2, 4]},
    {"duties": [0.20, 0.60, 0.80], "weights": [5, 6, 7]},
    {"duties": [0.95, 0.90, 0.80], "weights": [7, 6, 6]},
    {"duties": [0.30, 0.40, 0.50], "weights": [1, 4, 2]},
    {"duties": [0.80, 0.20, 0.50], "weights": [7, 3, 4]},
]


class ConfigError(ValueError):
    pass


class MissingDatasetError(FileNotFoundError):
    pass


@dataclass
class ExperimentSpec:
    kind: str
    parameters: dict
    output_dir: Path
    seed: int
    jobs: int = 1
    data_dir: str | None = None

    def spec_hash(self) -> str:
        canon = json.dumps(
            {"kind": self.kind, "seed": self.seed, "parameters": self.parameters},
            sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _as_float(value, key: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be a number, got {value!r}")


def _as_int(value, key: str) -> int:
    f = _as_float(value, key)
    if f != int(f):
        raise ConfigError(f"parameter {key!r} must be an integer, got {value!r}")
    return int(f)


def _validate_keys(params: dict, kind: str, required: set[str], optional: set[str]) -> None:
    unknown = set(params) - required - optional
    if unknown:
        raise ConfigError(f"{kind}: unknown parameter key(s): {sorted(unknown)}")
    missing = required - set(params)
    if missing:
        raise ConfigError(f"{kind}: missing required parameter key(s): {sorted(missing)}")


def _preset_config(params: dict, default_threshold: float = 0.0) -> VacConfig:
    name = params.get("preset", "small")
    n = _as_int(params.get("n", 3), "n")
    k = _as_int(params.get("k", 3), "k")
    thr = _as_float(params.get("compensation_threshold", default_threshold),
                    "compensation_threshold")
    if name == "small":
        return VacConfig.small(n=n, k=k, compensation_threshold=thr)
    if name == "large":
        return VacConfig.large(n=n, k=k, compensation_threshold=thr)
    if name == "custom":
        return VacConfig(n=n, k=k,
                         r_unit=_as_float(params["r_unit"], "r_unit"),
                         c_out=_as_float(params["c_out"], "c_out"),
                         compensation_threshold=thr)
    raise ConfigError(f"unknown preset {name!r}")


def _weight_vector(weights, k: int) -> WeightVector:
    return WeightVector(tuple(int(w) for w in weights), k)


def _converter_from(params: dict) -> conv.ConverterModel:
    mode = params.get("converter", "compensated")
    if mode == "compensated":
        return conv.ConverterModel.compensated()
    if mode == "raw":
        return conv.ConverterModel.raw()
    if mode == "identity":
        return conv.ConverterModel.identity()
    raise ConfigError(f"unknown converter {mode!r}")


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

def _run_vac_table(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "vac-table",
                   required=set(),
                   optional={"vdd", "frequency", "horizon", "rows", "preset",
                             "n", "k", "compensation_threshold", "r_unit", "c_out"})
    vdd = _as_float(p.get("vdd", 2.5), "vdd")
    freq = _as_float(p.get("frequency", 100e6), "frequency")
    cfg = _preset_config(p)
    horizon = _as_float(p.get("horizon", 20e-6), "horizon")
    rows_in = p.get("rows", VAC_TABLE_ROWS)
    supply = ConstantSupply(vdd)

    out_rows = []
    for row in rows_in:
        duties = [float(d) for d in row["duties"]]
        w = _weight_vector(row["weights"], cfg.k)
        v_theory = vac_equilibrium(duties, w, vdd)
        sigs = [PwmSignal(freq, d) for d in duties]
        trace = simulate_vac(cfg, sigs, w, supply, horizon, v0=0.0)
        metrics = trace_metrics(trace, cfg, supply, cycle_period=1.0 / freq)
        rel = abs(metrics.average_v - v_theory) / v_theory * 100.0 if v_theory else 0.0
        flat = []
        for d, wi in zip(duties, w.weights):
            flat.extend([d, wi])
        out_rows.append(flat + [v_theory, metrics.average_v, rel])

    n = cfg.n
    header = []
    for i in range(1, n + 1):
        header.extend([f"duty{i}", f"weight{i}"])
    header += ["v_theory_V", "v_sim_V", "rel_diff_pct"]
    _write_csv(spec.output_dir / "vac_table.csv", header, out_rows)
    return ["vac_table.csv"]


def _run_sweep(spec: ExperimentSpec, axis: str) -> list[str]:
    p = spec.parameters
    kind = f"sweep-{'vdd' if axis == 'vdd' else 'freq'}"
    _validate_keys(p, kind,
                   required={"grid"},
                   optional={"preset", "n", "k", "compensation_threshold",
                             "r_unit", "c_out", "duties", "weights",
                             "frequency", "vdd", "v0"})
    cfg = _preset_config(p)
    duties = tuple(float(d) for d in p.get("duties", [0.5] * cfg.n))
    weights = _weight_vector(p.get("weights", [2 ** cfg.k - 1] * cfg.n), cfg.k)
    stim = VacStimulus(
        duties=duties,
        frequency=_as_float(p.get("frequency", 100e6), "frequency"),
        w=weights,
        vdd=_as_float(p.get("vdd", 2.5), "vdd"),
        v0=_as_float(p.get("v0", 0.0), "v0"),
    )
    grid = [_as_float(v, "grid") for v in p["grid"]]
    points = sweep(cfg, stim, axis, grid, jobs=spec.jobs)
    rows = []
    for pt in points:
        if pt.metrics is None:
            rows.append([pt.axis_value, "", "", "", "", "", pt.error])
        else:
            m = pt.metrics
            rows.append([pt.axis_value, m.average_v, pt.ratio, m.swing,
                         m.charge_time, m.avg_power, ""])
    name = "sweep_vdd.csv" if axis == "vdd" else "sweep_freq.csv"
    _write_csv(spec.output_dir / name,
               [axis, "average_v_V", "ratio_v_over_vdd", "swing_V",
                "charge_time_s", "avg_power_W", "error"],
               rows)
    return [name]


def _run_dynamic_vdd(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "dynamic-vdd",
                   required=set(),
                   optional={"preset", "n", "k", "compensation_threshold",
                             "r_unit", "c_out", "duties", "weights_a",
                             "weights_b", "frequency", "horizon",
                             "supply_mean", "supply_amplitude", "supply_period",
                             "converter"})
    if "preset" not in p and "r_unit" not in p:
        # reference dynamic run: small-VAC resistors with the large capacitor
        p = dict(p)
        p.update({"preset": "custom", "r_unit": 100e3, "c_out": 100e-12})
    cfg = _preset_config(p)
    duties = [float(d) for d in p.get("duties", [0.5] * cfg.n)]
    top = 2 ** cfg.k - 1
    w_a = _weight_vector(p.get("weights_a", [top] * cfg.n), cfg.k)
    w_b = _weight_vector(p.get("weights_b", [2] * cfg.n), cfg.k)
    freq = _as_float(p.get("frequency", 100e6), "frequency")
    supply = SinusoidSupply(
        mean=_as_float(p.get("supply_mean", 2.5), "supply_mean"),
        amplitude=_as_float(p.get("supply_amplitude", 0.7), "supply_amplitude"),
        period=_as_float(p.get("supply_period", 10e-6), "supply_period"),
    )
    horizon = _as_float(p.get("horizon", 4 * supply.period), "horizon")
    pcfg = PerceptronConfig(vac=cfg, converter=_converter_from(p) if "converter" in p
                            else conv.ConverterModel.raw(), frequency=freq)

    artifacts = []
    for tag, w in (("region_a", w_a), ("region_b", w_b)):
        sigs = [PwmSignal(freq, d) for d in duties]
        trace = simulate_vac(cfg, sigs, w, supply, horizon, v0=0.0)
        name = f"dynamic_trace_{tag}.csv"
        trace.write_csv(spec.output_dir / name)
        artifacts.append(name)
        ts, out = dynamic_duty_trace(pcfg, duties, w, supply, horizon)
        ratio = [trace.value_at(float(t)) / supply.value_at(float(t)) for t in ts]
        name = f"dynamic_duty_{tag}.csv"
        _write_csv(spec.output_dir / name,
                   ["time_s", "duty_out", "v_over_vdd"],
                   [[t, ("" if np.isnan(d) else d), r]
                    for t, d, r in zip(ts, out, ratio)])
        artifacts.append(name)
    return artifacts


def _run_response_curve(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "response-curve",
                   required=set(),
                   optional={"depths", "grid_points", "converter", "vdd",
                             "n", "k", "path"})
    depths = [int(d) for d in p.get("depths", [1, 2, 3])]
    n_points = _as_int(p.get("grid_points", 21), "grid_points")
    vdd = _as_float(p.get("vdd", 2.5), "vdd")
    cfg = PerceptronConfig.behavioral(n=_as_int(p.get("n", 3), "n"),
                                      k=_as_int(p.get("k", 3), "k"),
                                      converter=_converter_from(p))
    grid = np.linspace(0.0, 1.0, n_points)
    rows = []
    dev_rows = []
    for depth in depths:
        curve = response_curve(cfg, [float(x) for x in grid], depth, vdd=vdd)
        for x, y in curve.rows():
            rows.append([x, ("no-oscillation" if conv.is_no_oscillation(y) else y),
                         depth])
        dev_rows.append([depth, curve.deviation])
    _write_csv(spec.output_dir / "response_curve.csv",
               ["dc_in", "dc_out", "depth"], rows)
    _write_csv(spec.output_dir / "response_deviation.csv",
               ["depth", "deviation_sum_abs"], dev_rows)
    return ["response_curve.csv", "response_deviation.csv"]


def _run_fit(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "fit",
                   required=set(),
                   optional={"source", "points", "grid_hi", "vdd", "frequency"})
    source = p.get("source", "behavioral")
    n_points = _as_int(p.get("points", 20), "points")
    grid_hi = _as_float(p.get("grid_hi", 0.9), "grid_hi")
    vdd = _as_float(p.get("vdd", 2.5), "vdd")
    xs = np.linspace(0.0, grid_hi, n_points)
    model = conv.ConverterModel.compensated()
    if source == "exact":
        ys = model.cubic_percent(xs) / 100.0
    elif source in ("behavioral", "transient"):
        pcfg = PerceptronConfig.behavioral()
        if source == "transient":
            pcfg = PerceptronConfig(vac=pcfg.vac, converter=pcfg.converter,
                                    path="transient",
                                    frequency=_as_float(p.get("frequency", 100e6),
                                                        "frequency"))
        w = pcfg.max_weights()
        ys = np.array([
            float(perceptron_eval(pcfg, [float(x)] * pcfg.vac.n, w, vdd))
            for x in xs])
    else:
        raise ConfigError(f"unknown fit source {source!r}")
    result = conv.fit_cubic(xs, ys)
    _write_csv(spec.output_dir / "fit_data.csv", ["x", "y"],
               [[float(x), float(y)] for x, y in zip(xs, ys)])
    c3, c2, c1, c0 = result.coefficients
    _write_csv(spec.output_dir / "fit.csv", ["c3", "c2", "c1", "c0", "r2"],
               [[c3, c2, c1, c0, result.r_squared]])
    return ["fit_data.csv", "fit.csv"]


def _run_fixed_points(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "fixed-points", required=set(), optional={"converter"})
    model = _converter_from(p)
    scan = conv.find_fixed_points(model)
    rows = [[pt.x, pt.stability] for pt in scan.points]
    if scan.degenerate:
        rows = [[scan.degenerate_interval[0], "degenerate-interval-start"],
                [scan.degenerate_interval[1], "degenerate-interval-end"]]
    _write_csv(spec.output_dir / "fixed_points.csv", ["x", "stability"], rows)
    return ["fixed_points.csv"]


TRAIN_KEYS_REQUIRED = {"topology", "activation"}
TRAIN_KEYS_OPTIONAL = {"learning_rate", "epochs", "batch", "mode", "max_weight",
                       "initial_weight", "subsample", "seed"}


def _train_config(p: dict, seed: int) -> nn.NetworkConfig:
    topo = p["topology"]
    if isinstance(topo, str):
        sizes = tuple(int(s) for s in topo.split("/"))
    else:
        sizes = tuple(int(s) for s in topo)
    act = nn.ActivationKind(p["activation"])
    return nn.NetworkConfig(
        layer_sizes=sizes,
        activation=act,
        learning_rate=_as_float(p.get("learning_rate", 0.01), "learning_rate"),
        epochs=_as_int(p.get("epochs", 30), "epochs"),
        batch=_as_int(p.get("batch", 32), "batch"),
        seed=_as_int(p.get("seed", seed), "seed"),
        mode=p.get("mode", "fp"),
        max_weight=(_as_int(p["max_weight"], "max_weight")
                    if p.get("max_weight") is not None else None),
        initial_weight=(_as_float(p["initial_weight"], "initial_weight")
                        if p.get("initial_weight") is not None else None),
    )


def _load_splits(spec: ExperimentSpec, subsample_n, subsample_seed: int):
    data_dir = mnist.find_data_dir(spec.data_dir)
    if data_dir is None:
        raise MissingDatasetError(
            "MNIST IDX files not found; pass --data-dir or set "
            f"${mnist.DATA_DIR_ENV}")
    train_ds = mnist.load_mnist(data_dir, "train")
    test_ds = mnist.load_mnist(data_dir, "test")
    if subsample_n:
        train_ds = mnist.subsample(train_ds, int(subsample_n), subsample_seed)
    return train_ds, test_ds


def _train_one(args):
    cfg_params, seed, data_dir, subsample_n = args
    spec_like = ExperimentSpec(kind="train", parameters={}, output_dir=Path("."),
                               seed=seed, data_dir=data_dir)
    train_ds, test_ds = _load_splits(spec_like, subsample_n, seed)
    cfg = _train_config(cfg_params, seed)
    net = nn.Network.from_config(cfg)
    report = nn.train(net, train_ds, test_ds, cfg)
    row = report.csv_row()
    row["label_counts"] = [int(n) for n in train_ds.label_counts()]
    return row


TRAIN_HEADER = ["topology", "activation", "mode", "learning_rate",
                "initial_weight", "max_weight", "epochs", "batch", "seed",
                "train_error", "test_error"]


def _run_train(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "train", required=TRAIN_KEYS_REQUIRED,
                   optional=TRAIN_KEYS_OPTIONAL)
    row = _train_one((p, spec.seed, spec.data_dir, p.get("subsample")))
    _write_csv(spec.output_dir / "train.csv", TRAIN_HEADER,
               [[row[k] for k in TRAIN_HEADER]])
    _write_csv(spec.output_dir / "train_label_counts.csv", ["class", "count"],
               [[c, n] for c, n in enumerate(row["label_counts"])])
    return ["train.csv", "train_label_counts.csv"]


def _run_train_sweep(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "train-sweep", required={"configs"}, optional={"subsample"})
    tasks = []
    for i, cfg_params in enumerate(p["configs"]):
        _validate_keys(cfg_params, f"train-sweep.configs[{i}]",
                       required=TRAIN_KEYS_REQUIRED, optional=TRAIN_KEYS_OPTIONAL)
        sub = cfg_params.get("subsample", p.get("subsample"))
        tasks.append((cfg_params, spec.seed + i, spec.data_dir, sub))
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(_train_one, tasks))
    else:
        rows = [_train_one(t) for t in tasks]
    _write_csv(spec.output_dir / "train_sweep.csv", TRAIN_HEADER,
               [[r[k] for k in TRAIN_HEADER] for r in rows])
    return ["train_sweep.csv"]


def _run_report(spec: ExperimentSpec) -> list[str]:
    p = spec.parameters
    _validate_keys(p, "report", required=set(), optional={"search_dir"})
    base = Path(p.get("search_dir", spec.output_dir.parent))
    rows = []
    for manifest_path in sorted(base.glob(f"**/{MANIFEST_NAME}")):
        try:
            data = json.loads(manifest_path.read_text())
        except json.JSONDecodeError:
            continue
        rows.append([
            str(manifest_path.parent),
            data.get("kind", ""),
            data.get("status", ""),
            data.get("seed", ""),
            data.get("spec_hash", ""),
            ";".join(data.get("artifacts", [])),
            (data.get("error") or {}).get("class", ""),
        ])
    _write_csv(spec.output_dir / "report.csv",
               ["run_dir", "kind", "status", "seed", "spec_hash", "artifacts",
                "error_class"],
               rows)
    return ["report.csv"]


RUNNERS = {
    "vac-table": _run_vac_table,
    "sweep-vdd": lambda s: _run_sweep(s, "vdd"),
    "sweep-freq": lambda s: _run_sweep(s, "frequency"),
    "dynamic-vdd": _run_dynamic_vdd,
    "response-curve": _run_response_curve,
    "fit": _run_fit,
    "fixed-points": _run_fixed_points,
    "train": _run_train,
    "train-sweep": _run_train_sweep,
    "report": _run_report,
}


def run(spec: ExperimentSpec) -> dict:
    """Execute one experiment; always writes a manifest, raises nothing.

    Returns the manifest dict; status is "ok" or "error" with a distinct
    error class name.
    """
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    manifest = {
        "kind": spec.kind,
        "seed": spec.seed,
        "spec_hash": spec.spec_hash(),
        "parameters": spec.parameters,
        "artifacts": [],
        "status": "ok",
        "error": None,
        "wall_time_s": None,
    }
    try:
        runner = RUNNERS.get(spec.kind)
        if runner is None:
            raise ConfigError(f"unknown experiment kind {spec.kind!r}")
        manifest["artifacts"] = runner(spec)
    except Exception as exc:
        manifest["status"] = "error"
        manifest["error"] = {"class": type(exc).__name__, "message": str(exc)}
    manifest["wall_time_s"] = time.time() - started
    (spec.output_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwmperc",
        description="PWM perceptron experiment runner (CSV artifacts + manifest)")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in RUNNERS:
        k = sub.add_parser(kind, help=f"run the {kind} experiment")
        k.add_argument("--config", type=Path, default=None,
                       help="YAML parameter file")
        k.add_argument("--seed", type=int, default=0)
        k.add_argument("--out", type=Path, default=None,
                       help="output directory (default runs/<kind>)")
        k.add_argument("--data-dir", type=str, default=None,
                       help=f"MNIST directory (default ${mnist.DATA_DIR_ENV})")
        k.add_argument("--jobs", type=int, default=1)
        if kind in ("train", "train-sweep"):
            k.add_argument("--subsample", type=int, default=None,
                           help="train on a seeded subsample of this size")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    params = {}
    if args.config is not None:
        try:
            loaded = yaml.safe_load(Path(args.config).read_text())
        except FileNotFoundError:
            print(f"error: config file not found: {args.config}", file=sys.stderr)
            return 2
        except yaml.YAMLError as exc:
            print(f"error: cannot parse config: {exc}", file=sys.stderr)
            return 2
        if loaded is not None:
            if not isinstance(loaded, dict):
                print("error: config must be a mapping", file=sys.stderr)
                return 2
            params = loaded
    if getattr(args, "subsample", None) is not None:
        params["subsample"] = args.subsample

    spec = ExperimentSpec(
        kind=args.kind,
        parameters=params,
        output_dir=args.out if args.out is not None else Path("runs") / args.kind,
        seed=args.seed,
        jobs=args.jobs,
        data_dir=args.data_dir,
    )
    manifest = run(spec)
    if manifest["status"] == "ok":
        print(f"{args.kind}: ok ({', '.join(manifest['artifacts'])}) "
              f"-> {spec.output_dir}")
        return 0
    err = manifest["error"]
    print(f"{args.kind}: {err['class']}: {err['message']}", file=sys.stderr)
    return 2 if err["class"] == "ConfigError" else 1


if __name__ == "__main__":
    sys.exit(main())
