"""Command-line front end: eval, discretize, homogenize, sweep, roundtrip, selftest.

Configs are strict JSON objects (unknown keys are rejected). Defaults are
filled in before anything runs and the resolved config is echoed into every
file artifact. Floats are written with 17 significant digits.

Exit codes: 0 ok, 1 selftest failure, 2 config error, 3 numerical
divergence, 4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Any

import numpy as np

from .continuum_nets import (
    DEFAULT_BUDGET,
    ContinuumNetParams,
    DipanetParams,
    OdeNetParams,
    Solver,
    eval_continuum,
    eval_dipanet,
    eval_neuralode,
    eval_pointwise_cnn,
)
from .errors import DipanetError, DivergenceError, InconsistentFamilyError, PreconditionError, ResourceError, StructuralError
from .finite_nets import FiniteNetParams, eval_finite
from .funcrep import Activation, MatrixFamily, function_from_json
from .harness import DivergenceAt, SweepReport, default_inputs, random_params, sweep_depth, sweep_width, two_route_check
from .selftest import run_selftest
from .transforms import (
    discretize_depth,
    discretize_dipanet_depth,
    discretize_dipanet_width,
    discretize_width,
    homogenize_depth,
    homogenize_rescnn_depth,
    homogenize_width,
    provenance,
)

__all__ = ["main", "dumps", "format_float", "CSV_HEADER"]

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_RESOURCE = 0, 1, 2, 3, 4
CSV_HEADER = "resolution,error,runtime_s,reference_tag"

FINITE = ("deepnet", "deepresnet")
CONTINUUM = ("deepcnn", "deeprescnn")
ODE = ("neuralode", "neuralresode")
DIPANET = ("dipanet", "diparesnet")
ARCHS = FINITE + CONTINUUM + ODE + DIPANET + ("pointwise_cnn",)


class ConfigError(Exception):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = "%.17g" % x
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int | None = None, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    nl = "" if indent is None else "\n" + " " * (indent * (_level + 1))
    end = "" if indent is None else "\n" + " " * (indent * _level)
    sep = "," if indent is None else ","
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" if indent is not None
                 else f"{json.dumps(str(k))}:{dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{" + nl + (sep + nl).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # numeric rows stay on one line
        if indent is not None and all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[" + nl + (sep + nl).join(dumps(v, indent, _level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_text(report: SweepReport) -> str:
    lines = [CSV_HEADER]
    for res, err, rt, tag in report.to_rows():
        lines.append(f"{res},{format_float(err)},{format_float(rt)},{tag}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _line_of(text: str, key: str | None) -> int:
    if key:
        needle = json.dumps(key)
        for i, line in enumerate(text.splitlines(), 1):
            if needle in line:
                return i
    return 1


def _check_keys(cfg: dict, allowed: set, required: set = frozenset()):
    for k in cfg:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r}", k)
    for k in required:
        if k not in cfg:
            raise ConfigError(f"missing required key {k!r}")


def _one_of(cfg: dict, keys: tuple, what: str):
    present = [k for k in keys if k in cfg]
    if len(present) != 1:
        raise ConfigError(f"give exactly one of {list(keys)} for {what}", present[1] if len(present) > 1 else None)
    return present[0]


def _int(cfg: dict, key: str, minimum: int = 1) -> int:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key!r} must be an integer >= {minimum}", key)
    return v


def _float(cfg: dict, key: str, positive: bool = True) -> float:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (positive and not v > 0):
        raise ConfigError(f"{key!r} must be a {'positive ' if positive else ''}number", key)
    return float(v)


def _solver(cfg: dict, key: str) -> Solver:
    try:
        return Solver.from_json(cfg[key])
    except (DipanetError, ValueError, TypeError) as exc:
        raise ConfigError(f"{key!r}: {exc}", key) from exc


def _load_params(cfg: dict, arch: str, base_dir: str, seed: int):
    src = _one_of(cfg, ("params", "params_file", "random"), "the parameters")
    try:
        if src == "random":
            spec = dict(cfg["random"])
            spec.setdefault("architecture", arch)
            if spec["architecture"] != arch:
                raise ConfigError("random.architecture disagrees with architecture", "random")
            return random_params(seed, spec)
        if src == "params_file":
            with open(os.path.join(base_dir, cfg["params_file"])) as fh:
                data = json.load(fh)
        else:
            data = cfg["params"]
        if not isinstance(data, dict):
            raise ConfigError("parameters must be a JSON object", src)
        return _params_from_json(arch, data)
    except ConfigError:
        raise
    except OSError as exc:
        raise ConfigError(f"cannot read parameters: {exc}", src) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parameter file is not valid JSON (line {exc.lineno}): {exc.msg}", src) from exc
    except (DipanetError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"invalid {arch} parameters: {exc}", src) from exc


def _params_from_json(arch: str, data: dict):
    if arch in FINITE:
        if "residual" not in data:
            data = {**data, "residual": "none" if arch == "deepnet" else "plain"}
        p = FiniteNetParams.from_json(data)
        if (p.residual == "none") != (arch == "deepnet"):
            raise ConfigError(f"residual {p.residual!r} does not match architecture {arch!r}", "residual")
        return p
    if arch in CONTINUUM:
        data = {**data, "residual": arch == "deeprescnn"} if "residual" not in data else data
        p = ContinuumNetParams.from_json(data)
    elif arch in ODE:
        data = {**data, "residual": arch == "neuralresode"} if "residual" not in data else data
        p = OdeNetParams.from_json(data)
    elif arch in DIPANET:
        data = {**data, "residual": arch == "diparesnet"} if "residual" not in data else data
        p = DipanetParams.from_json(data)
    else:
        unknown = set(data) - {"L", "activation", "P"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", sorted(unknown)[0])
        return {"L": function_from_json(data["L"]), "activation": Activation.from_json(data["activation"]),
                "P": function_from_json(data["P"])}
    if p.residual != (arch in ("deeprescnn", "neuralresode", "diparesnet")):
        raise ConfigError(f"residual flag does not match architecture {arch!r}", "residual")
    return p


def _input_dim(arch: str, params) -> int:
    if arch == "pointwise_cnn":
        return params["L"].shape[0]
    if arch in FINITE or arch in ODE:
        return params.L.shape[1]
    return params.L.shape[0]


def _inputs(cfg: dict, p: int, seed: int, base_dir: str) -> np.ndarray:
    key = _one_of(cfg, ("X", "inputs", "inputs_file"), "the inputs")
    try:
        if key == "X":
            X = np.asarray(cfg["X"], dtype=np.float64)
        elif key == "inputs_file":
            X = np.loadtxt(os.path.join(base_dir, cfg["inputs_file"]), delimiter=None, ndmin=2)
        else:
            spec = cfg["inputs"]
            _check_keys(spec, {"count", "r"})
            X = default_inputs(p, float(spec.get("r", 1.0)), seed, int(spec.get("count", 20)))
    except (OSError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot read inputs: {exc}", key) from exc
    if X.shape[-1] != p:
        raise ConfigError(f"inputs have dimension {X.shape[-1]}, expected {p}", key)
    return X


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_COMMON = {"seed", "threads"}
_SOURCE = {"architecture", "params", "params_file", "random"}


def _evaluate(arch: str, params, X: np.ndarray, cfg: dict, trace: bool = False):
    budget = cfg.get("budget", DEFAULT_BUDGET)
    if arch in FINITE:
        if trace:
            return eval_finite(params, X, trace=True)
        return eval_finite(params, X)
    if arch in CONTINUUM:
        return eval_continuum(params, X, cfg["m"])
    if arch == "pointwise_cnn":
        return eval_pointwise_cnn(params["L"], params["activation"], params["P"], X, cfg["m"])
    solver = Solver.from_json(cfg["solver"])
    if arch in ODE:
        if trace:
            Y, traj = eval_neuralode(params, X, solver, trajectory=True)
            return Y, list(traj.states)
        return eval_neuralode(params, X, solver)
    return eval_dipanet(params, X, cfg["m"], solver, budget)


def cmd_eval(cfg: dict, base_dir: str) -> dict:
    _check_keys(cfg, _COMMON | _SOURCE | {"X", "inputs", "inputs_file", "m", "solver", "trace", "budget"},
                {"architecture"})
    arch = cfg["architecture"]
    if arch not in ARCHS:
        raise ConfigError(f"unknown architecture {arch!r}; expected one of {list(ARCHS)}", "architecture")
    cfg.setdefault("m", 256)
    cfg.setdefault("solver", {"euler": 256})
    cfg.setdefault("trace", False)
    cfg.setdefault("budget", DEFAULT_BUDGET)
    _int(cfg, "m")
    _solver(cfg, "solver")
    params = _load_params(cfg, arch, base_dir, cfg["seed"])
    X = _inputs(cfg, _input_dim(arch, params), cfg["seed"], base_dir)
    trace = bool(cfg["trace"])
    if trace and (X.ndim != 1 or not (arch in FINITE or arch in ODE)):
        raise ConfigError("trace needs a single input and a finite or NeuralODE architecture", "trace")
    if X.ndim == 1:
        out = _evaluate(arch, params, X, cfg, trace)
        if trace:
            return {"Y": out[0], "trace": [np.asarray(z) for z in out[1]]}
        return {"Y": out}
    return {"Y": np.stack([_evaluate(arch, params, x, cfg) for x in X])}


def _gap_rows(gaps, tag) -> SweepReport:
    from .harness import ConvergenceRecord

    return SweepReport(tuple(ConvergenceRecord(int(k), float(g), tag) for k, g in gaps), None)


def cmd_discretize(cfg: dict, base_dir: str):
    _check_keys(cfg, _COMMON | _SOURCE | {"axis", "resolution", "inputs", "X", "reference_m", "reference", "budget"},
                {"architecture", "axis", "resolution"})
    arch, axis = cfg["architecture"], cfg["axis"]
    table = {("deepcnn", "width"): "deepnet", ("deeprescnn", "width"): "deepresnet",
             ("neuralode", "depth"): "deepresnet", ("neuralresode", "depth"): "deepresnet",
             ("dipanet", "width"): "neuralode", ("diparesnet", "width"): "neuralresode",
             ("dipanet", "depth"): "deeprescnn", ("diparesnet", "depth"): "deeprescnn"}
    if (arch, axis) not in table:
        raise ConfigError(f"cannot discretize {arch!r} along {axis!r}", "axis")
    k = _int(cfg, "resolution")
    if "X" not in cfg and "inputs_file" not in cfg:
        cfg.setdefault("inputs", {"count": 20, "r": 1.0})
    cfg.setdefault("reference_m", 4 * k if axis == "width" else 256)
    cfg.setdefault("reference", {"rk4": 16 * k if axis == "depth" else 256})
    cfg.setdefault("budget", DEFAULT_BUDGET)
    params = _load_params(cfg, arch, base_dir, cfg["seed"])
    X = _inputs(cfg, _input_dim(arch, params), cfg["seed"], base_dir)
    ref = _solver(cfg, "reference")
    m_ref = _int(cfg, "reference_m")
    if arch in CONTINUUM:
        out = discretize_width(params, k)
        Y_src, Y_out = eval_continuum(params, X, m_ref), np.stack([eval_finite(out, x) for x in X])
        tag = f"quad_left(m={m_ref})"
    elif arch in ODE:
        out = discretize_depth(params, k)
        Y_src, Y_out = eval_neuralode(params, X, ref), np.stack([eval_finite(out, x) for x in X])
        tag = f"{ref.kind}({ref.steps})"
    elif axis == "width":
        out = discretize_dipanet_width(params, k)
        Y_src = eval_dipanet(params, X, m_ref, ref, cfg["budget"])
        Y_out = eval_neuralode(out, X, ref)
        tag = f"dipanet(m={m_ref},{ref.kind}({ref.steps}))"
    else:
        out = discretize_dipanet_depth(params, k)
        Y_src = eval_dipanet(params, X, m_ref, ref, cfg["budget"])
        Y_out = eval_continuum(out, X, m_ref)
        tag = f"dipanet(m={m_ref},{ref.kind}({ref.steps}))"
    gap = float(max(np.linalg.norm(a - b) for a, b in zip(np.atleast_2d(Y_out), np.atleast_2d(Y_src))))
    report = _gap_rows([(k, gap)], tag)
    extra = {"result": {**out.to_json(), "provenance": provenance(arch, f"discretize_{axis}", k)},
             "result_architecture": table[(arch, axis)]}
    return report, extra


def cmd_homogenize(cfg: dict, base_dir: str):
    _check_keys(cfg, _COMMON | {"kind", "family", "eps", "n_max", "r", "m_eval", "nets", "from_ode", "T",
                                "reference_steps", "m"}, {"kind"})
    kind = cfg["kind"]
    cfg.setdefault("r", 1.0)
    try:
        if kind == "width":
            _check_keys(cfg, _COMMON | {"kind", "family", "eps", "n_max", "r", "m_eval"}, {"family", "eps"})
            fam_cfg = cfg["family"]
            _check_keys(fam_cfg, {"L", "W", "P", "activations", "gains"}, {"L", "W", "P", "activations"})
            L = np.asarray(fam_cfg["L"], float)
            cfg.setdefault("n_max", int(L.shape[0]))
            cfg.setdefault("m_eval", 2048)
            family = MatrixFamily.from_arrays(L, fam_cfg["W"], fam_cfg["P"], fam_cfg["activations"],
                                              fam_cfg.get("gains"))
            res = homogenize_width(family, _float(cfg, "eps"), _int(cfg, "n_max", 3), r=_float(cfg, "r", False),
                                   seed=cfg["seed"], m_eval=_int(cfg, "m_eval"))
            report = _gap_rows(res.gaps, f"deepcnn(m={cfg['m_eval']})")
            extra = {"result": {**res.params.to_json(), "provenance": provenance("deepnet_family", "homogenize_width",
                                                                                   cfg["n_max"])},
                     "result_architecture": "deepcnn", "n_bar": res.n_bar, "deltas": res.deltas}
            return report, extra
        if kind == "depth":
            _check_keys(cfg, _COMMON | {"kind", "nets", "from_ode", "T", "r", "reference_steps"})
            src = _one_of(cfg, ("nets", "from_ode"), "the nets")
            if src == "nets":
                nets = [FiniteNetParams.from_json(d) for d in cfg["nets"]]
                cfg.setdefault("T", 1.0)
            else:
                spec = cfg["from_ode"]
                _check_keys(spec, {"params", "depths"}, {"params", "depths"})
                ode = OdeNetParams.from_json(spec["params"])
                nets = [discretize_depth(ode, int(d)) for d in spec["depths"]]
                cfg.setdefault("T", ode.T)
            cfg.setdefault("reference_steps", 16 * max(n.depth for n in nets))
            res = homogenize_depth(nets, _float(cfg, "T"), r=_float(cfg, "r", False), seed=cfg["seed"],
                                   reference_steps=_int(cfg, "reference_steps"))
            report = _gap_rows(res.gaps, f"rk4({cfg['reference_steps']})")
            arch = "neuralresode" if res.params.residual else "neuralode"
            extra = {"result": {**res.params.to_json(), "provenance": provenance("deepresnet", "homogenize_depth",
                                                                                   max(n.depth for n in nets))},
                     "result_architecture": arch}
            return report, extra
        if kind == "rescnn_depth":
            _check_keys(cfg, _COMMON | {"kind", "nets", "T", "r", "m", "reference_steps"}, {"nets"})
            nets = [ContinuumNetParams.from_json({**d, "residual": True}) for d in cfg["nets"]]
            cfg.setdefault("T", 1.0)
            cfg.setdefault("m", 64)
            cfg.setdefault("reference_steps", 16 * max(len(n.W) for n in nets))
            res = homogenize_rescnn_depth(nets, _float(cfg, "T"), r=_float(cfg, "r", False), seed=cfg["seed"],
                                          m=_int(cfg, "m"), reference_steps=_int(cfg, "reference_steps"))
            report = _gap_rows(res.gaps, f"dipanet(m={cfg['m']},rk4({cfg['reference_steps']}))")
            extra = {"result": {**res.params.to_json(), "provenance": provenance("deeprescnn", "homogenize_rescnn_depth",
                                                                                   max(len(n.W) for n in nets))},
                     "result_architecture": "diparesnet"}
            return report, extra
    except (PreconditionError, StructuralError, KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"invalid homogenize config: {exc}") from exc
    raise ConfigError(f"unknown homogenize kind {kind!r}", "kind")


def cmd_sweep(cfg: dict, base_dir: str):
    _check_keys(cfg, _COMMON | _SOURCE | {"kind", "resolutions", "inputs", "X", "reference", "reference_m",
                                          "record_runtime"}, {"kind", "resolutions"})
    kind = cfg["kind"]
    if kind not in ("depth", "width"):
        raise ConfigError(f"unknown sweep kind {kind!r}", "kind")
    cfg.setdefault("architecture", "neuralode" if kind == "depth" else "deepcnn")
    arch = cfg["architecture"]
    allowed = ODE if kind == "depth" else CONTINUUM
    if arch not in allowed:
        raise ConfigError(f"{kind} sweeps need one of {list(allowed)}", "architecture")
    res = cfg["resolutions"]
    if not isinstance(res, list) or not all(isinstance(v, int) and v >= 1 for v in res):
        raise ConfigError("resolutions must be a list of positive integers", "resolutions")
    if "X" not in cfg and "inputs_file" not in cfg:
        cfg.setdefault("inputs", {"count": 20, "r": 1.0})
    cfg.setdefault("record_runtime", False)
    params = _load_params(cfg, arch, base_dir, cfg["seed"])
    X = _inputs(cfg, _input_dim(arch, params), cfg["seed"], base_dir)
    try:
        if kind == "depth":
            cfg.setdefault("reference", {"rk4": 16 * max(res)})
            report = sweep_depth(params, res, X, _solver(cfg, "reference"), cfg["threads"], bool(cfg["record_runtime"]))
        else:
            cfg.setdefault("reference_m", 4 * max(res))
            report = sweep_width(params, res, X, _int(cfg, "reference_m"), cfg["threads"], bool(cfg["record_runtime"]))
    except (PreconditionError, StructuralError) as exc:
        raise ConfigError(str(exc)) from exc
    return report, {}


def cmd_roundtrip(cfg: dict, base_dir: str):
    _check_keys(cfg, _COMMON | _SOURCE | {"sizes", "inputs", "X", "reference_m", "reference", "budget",
                                          "record_runtime"}, {"sizes"})
    cfg.setdefault("architecture", "dipanet")
    arch = cfg["architecture"]
    if arch not in DIPANET:
        raise ConfigError("roundtrip needs a dipanet or diparesnet", "architecture")
    sizes = cfg["sizes"]
    if not isinstance(sizes, list) or not sizes or not all(
            isinstance(s, list) and len(s) == 2 and all(isinstance(v, int) and v >= 1 for v in s) for s in sizes):
        raise ConfigError("sizes must be a nonempty list of [n, l] integer pairs", "sizes")
    if "X" not in cfg and "inputs_file" not in cfg:
        cfg.setdefault("inputs", {"count": 20, "r": 1.0})
    cfg.setdefault("reference_m", 1024)
    cfg.setdefault("reference", {"rk4": 64})
    cfg.setdefault("budget", DEFAULT_BUDGET)
    cfg.setdefault("record_runtime", False)
    params = _load_params(cfg, arch, base_dir, cfg["seed"])
    X = _inputs(cfg, _input_dim(arch, params), cfg["seed"], base_dir)
    ref = _solver(cfg, "reference")
    m_ref = _int(cfg, "reference_m")
    if m_ref * ref.steps > cfg["budget"]:
        raise ResourceError(f"reference m * steps = {m_ref * ref.steps} exceeds the budget {cfg['budget']}")
    try:
        report = two_route_check(params, sizes, X, m_ref, ref, cfg["threads"], bool(cfg["record_runtime"]))
    except (PreconditionError, StructuralError) as exc:
        raise ConfigError(str(exc)) from exc
    return report, {}


COMMANDS = {"discretize": cmd_discretize, "homogenize": cmd_homogenize, "sweep": cmd_sweep,
            "roundtrip": cmd_roundtrip}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dipanet", description="Evaluate, discretize and homogenize "
                                 "finite, continuum and distributed-parameter networks.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in [("eval", "evaluate one architecture on inputs"),
                            ("discretize", "emit a finite-resolution architecture"),
                            ("homogenize", "build continuum parameters from finite nets"),
                            ("sweep", "convergence sweep in width or depth"),
                            ("roundtrip", "compare the two width/depth discretization routes")]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="seed for inputs and random parameters")
        sp.add_argument("--out", default=None, help="output path (CSV; a .json sidecar is written next to it)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for sweep entries")
    sub.add_parser("selftest", help="run the invariant suite at small sizes")
    return ap


def _artifact_paths(out: str) -> tuple[str, str]:
    root, ext = os.path.splitext(out)
    if ext.lower() == ".json":
        return root + ".csv", out
    return (out if ext else out + ".csv"), root + ".json"


def main(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = _parser().parse_args(argv)
    if args.command == "selftest":
        return EXIT_OK if run_selftest(stdout) else EXIT_SELFTEST

    path = args.config
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"{path}: cannot read config: {exc.strerror}", file=stderr)
        return EXIT_CONFIG
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}", file=stderr)
        return EXIT_CONFIG
    if not isinstance(cfg, dict):
        print(f"{path}:1: config must be a JSON object", file=stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", 1)
    base_dir = os.path.dirname(os.path.abspath(path))

    try:
        if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
            raise ConfigError("'seed' must be a nonnegative integer", "seed")
        _int(cfg, "threads")
        if args.command == "eval":
            record = cmd_eval(cfg, base_dir)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(dumps({**record, "config": {k: v for k, v in cfg.items() if k != "threads"}}, indent=1) + "\n")
            else:
                print(dumps(record), file=stdout)
            return EXIT_OK
        report, extra = COMMANDS[args.command](cfg, base_dir)
    except ConfigError as exc:
        print(f"{path}:{_line_of(text, exc.key)}: {exc}", file=stderr)
        return EXIT_CONFIG
    except InconsistentFamilyError as exc:
        print(f"{path}:{_line_of(text, 'family')}: {exc}", file=stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource budget exceeded: {exc}", file=stderr)
        return EXIT_RESOURCE
    except (DivergenceError, DivergenceAt) as exc:
        print(f"numerical divergence: {exc}", file=stderr)
        return EXIT_DIVERGENCE
    except DipanetError as exc:
        print(f"{path}:1: {exc}", file=stderr)
        return EXIT_CONFIG

    csv = csv_text(report)
    # the thread count changes scheduling only, so artifacts do not record it
    echoed = {k: v for k, v in cfg.items() if k != "threads"}
    sidecar = {"command": args.command, "config": echoed, "report": report.to_json(), **extra}
    if args.out:
        csv_path, json_path = _artifact_paths(args.out)
        with open(csv_path, "w", newline="") as fh:
            fh.write(csv)
        with open(json_path, "w") as fh:
            fh.write(dumps(sidecar, indent=1) + "\n")
    else:
        stdout.write(csv)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
