"""Command-line driver: config ingestion, experiment runs and file output.

Usage::

    consensus-pd solve|certify|validate|compare --config cfg.yaml
                 [--gamma V|auto] [--seed N] [--out DIR] [--batch a.yaml,b.yaml]

Exit codes: 0 success or convergence, 1 configuration or assumption error,
2 iteration budget exhausted, 3 numeric failure, 4 a validation check
failed.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import copy
import csv
from dataclasses import dataclass, field
import io
import json
import logging
import math
import os
from pathlib import Path
import sys
import tempfile

import numpy as np
import yaml

from . import checks
from .algorithm import (
    CSV_COLUMNS,
    AlgorithmState,
    compute_optimal_equilibrium,
    distance_to_optimal_set,
    run,
    step_centralized,
    step_distributed,
)
from .analysis import Certificate, InitBox, assemble_ledger, rate_certificate
from .exceptions import (
    AssumptionViolation,
    CertificateRefused,
    ConsistencyError,
    LedgerError,
    NumericOverflowError,
    ShapeError,
    StabilityError,
)
from .network import Network
from .problem import ConstrainedProblem, QuadraticAgentProblem, solve_kkt_oracle

log = logging.getLogger("consensus_pd")

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_MAX_ITER, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


# configuration --------------------------------------------------------------

def _float(value, key):
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if math.isnan(out):
        raise ConfigError(f"{key}: NaN is not allowed")
    return out


def _float_list(value, key, length=None):
    if not isinstance(value, (list, tuple)):
        value = [value]
    out = [_float(v, f"{key}[{i}]") for i, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise ConfigError(f"{key}: expected {length} entries, got {len(out)}")
    return out


def _int(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    try:
        out = int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if float(value) != out:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if minimum is not None and out < minimum:
        raise ConfigError(f"{key}: must be at least {minimum}, got {out}")
    return out


@dataclass
class ExperimentConfig:
    """Parsed experiment description.

    ``agents`` entries are dicts with ``a, b, c, p, q`` (quadratic cost and
    affine constraints); ``network`` holds either ``preset`` and ``weight``
    or ``edges``; ``box`` bounds the initial states as ``[lo, hi]`` pairs
    (scalars broadcast) for ``x``, ``z`` and ``lam``.
    """

    agents: list
    network: dict
    gamma: object = "auto"
    x0: list = None
    z0: list = None
    lam0: list = None
    box: dict = None
    max_iter: int = 100000
    stop_tol: float = 1e-8
    seed: int = 0
    out: str = "."
    certify_gammas: list = None
    validate: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.agents)

    @property
    def m(self):
        return sum(len(a["p"]) for a in self.agents)

    def to_dict(self):
        d = {"problem": {"family": "quadratic_affine", "agents": copy.deepcopy(self.agents)},
             "network": copy.deepcopy(self.network), "gamma": self.gamma,
             "max_iter": self.max_iter, "stop_tol": self.stop_tol, "seed": self.seed, "out": self.out}
        init = {k: v for k, v in (("x0", self.x0), ("z0", self.z0), ("lam0", self.lam0)) if v is not None}
        if init:
            d["init"] = init
        if self.box is not None:
            d["box"] = copy.deepcopy(self.box)
        if self.certify_gammas is not None:
            d["certify_gammas"] = list(self.certify_gammas)
        if self.validate:
            d["validate"] = dict(self.validate)
        return d

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("top level: expected a mapping")
        known = {"problem", "network", "gamma", "init", "box", "max_iter", "stop_tol", "seed", "out",
                 "certify_gammas", "validate"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"top level: unknown keys {sorted(unknown)}")

        prob = raw.get("problem")
        if not isinstance(prob, dict) or "agents" not in prob:
            raise ConfigError("problem.agents: required")
        family = prob.get("family", "quadratic_affine")
        if family != "quadratic_affine":
            raise ConfigError(f"problem.family: only 'quadratic_affine' is supported, got {family!r}")
        if not isinstance(prob["agents"], list) or not prob["agents"]:
            raise ConfigError("problem.agents: expected a nonempty list")
        agents = [_parse_agent(a, f"problem.agents[{i}]") for i, a in enumerate(prob["agents"])]
        n = len(agents)
        m = sum(len(a["p"]) for a in agents)

        network = _parse_network(raw.get("network"), n)

        gamma = raw.get("gamma", "auto")
        if gamma != "auto":
            gamma = _float(gamma, "gamma")
            if not gamma > 0:
                raise ConfigError(f"gamma: must be positive or 'auto', got {gamma}")

        init = raw.get("init") or {}
        if not isinstance(init, dict):
            raise ConfigError("init: expected a mapping")
        x0 = _float_list(init["x0"], "init.x0", n) if "x0" in init else None
        z0 = _float_list(init["z0"], "init.z0", n) if "z0" in init else None
        lam0 = _float_list(init["lam0"], "init.lam0", m) if "lam0" in init else None
        if lam0 is not None and min(lam0, default=0.0) < 0:
            raise ConfigError("init.lam0: initial multipliers must lie in the nonnegative orthant")

        box = raw.get("box")
        if box is not None:
            box = _parse_box(box, n, m)

        validate = raw.get("validate") or {}
        if not isinstance(validate, dict):
            raise ConfigError("validate: expected a mapping")
        validate = {k: _int(v, f"validate.{k}", 1) for k, v in validate.items()}

        cg = raw.get("certify_gammas")
        if cg is not None:
            cg = [g if g == "auto" else _float(g, f"certify_gammas[{i}]") for i, g in enumerate(cg)]
        return cls(agents=agents, network=network, gamma=gamma, x0=x0, z0=z0, lam0=lam0, box=box,
                   max_iter=_int(raw.get("max_iter", 100000), "max_iter", 0),
                   stop_tol=_float(raw.get("stop_tol", 1e-8), "stop_tol"),
                   seed=_int(raw.get("seed", 0), "seed", 0),
                   out=str(raw.get("out", ".")), certify_gammas=cg, validate=validate)

    @classmethod
    def loads(cls, text, source="<config>"):
        try:
            raw = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
            raise ConfigError(f"{source}: YAML syntax error at {where}: {exc.problem}") from None
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        return cls.loads(text, str(path))


def _parse_agent(a, key):
    if not isinstance(a, dict):
        raise ConfigError(f"{key}: expected a mapping")
    unknown = set(a) - {"a", "b", "c", "p", "q", "center"}
    if unknown:
        raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
    p = _float_list(a.get("p", []), f"{key}.p")
    q = _float_list(a.get("q", []), f"{key}.q")
    if len(p) != len(q):
        raise ConfigError(f"{key}: p and q must have the same length")
    if "center" in a:
        if {"a", "b", "c"} & set(a):
            raise ConfigError(f"{key}: give either 'center' or 'a', 'b', 'c'")
        ctr = _float(a["center"], f"{key}.center")
        return {"a": 2.0, "b": -2.0 * ctr, "c": ctr * ctr, "p": p, "q": q}
    if "a" not in a or "b" not in a:
        raise ConfigError(f"{key}: 'a' and 'b' are required")
    out = {"a": _float(a["a"], f"{key}.a"), "b": _float(a["b"], f"{key}.b"),
           "c": _float(a.get("c", 0.0), f"{key}.c"), "p": p, "q": q}
    if out["a"] < 0:
        raise ConfigError(f"{key}.a: must be nonnegative")
    return out


def _parse_network(net, n):
    if not isinstance(net, dict):
        raise ConfigError("network: required mapping with 'preset' or 'edges'")
    unknown = set(net) - {"preset", "weight", "edges", "normalize"}
    if unknown:
        raise ConfigError(f"network: unknown keys {sorted(unknown)}")
    normalize = net.get("normalize", False)
    if not isinstance(normalize, bool):
        raise ConfigError("network.normalize: expected true or false")
    if ("preset" in net) == ("edges" in net):
        raise ConfigError("network: give exactly one of 'preset' or 'edges'")
    if "preset" in net:
        if net["preset"] not in ("path", "cycle", "complete"):
            raise ConfigError(f"network.preset: unknown preset {net['preset']!r}")
        return {"preset": net["preset"], "weight": _float(net.get("weight", 0.2), "network.weight"),
                "normalize": normalize}
    edges = []
    for i, e in enumerate(net["edges"] or []):
        if not isinstance(e, (list, tuple)) or len(e) != 3:
            raise ConfigError(f"network.edges[{i}]: expected [i, j, weight]")
        a, b = _int(e[0], f"network.edges[{i}][0]", 0), _int(e[1], f"network.edges[{i}][1]", 0)
        if a >= n or b >= n:
            raise ConfigError(f"network.edges[{i}]: endpoint out of range for {n} agents")
        edges.append([a, b, _float(e[2], f"network.edges[{i}][2]")])
    return {"edges": edges, "normalize": normalize}


def _parse_box(box, n, m):
    if not isinstance(box, dict):
        raise ConfigError("box: expected a mapping with x, z, lam")
    out = {}
    for name, size, default in (("x", n, [-1.0, 1.0]), ("z", n, [0.0, 0.0]), ("lam", m, [0.0, 1.0])):
        val = box.get(name, default)
        key = f"box.{name}"
        if not isinstance(val, (list, tuple)) or len(val) != 2:
            raise ConfigError(f"{key}: expected [lo, hi]")
        lo = _float_list(val[0], f"{key}[0]")
        hi = _float_list(val[1], f"{key}[1]")
        lo = lo * size if len(lo) == 1 else lo
        hi = hi * size if len(hi) == 1 else hi
        if len(lo) != size or len(hi) != size:
            raise ConfigError(f"{key}: bounds must be scalars or have length {size}")
        if any(l > h for l, h in zip(lo, hi)):
            raise ConfigError(f"{key}: lower bound exceeds upper bound")
        if name == "lam" and min(lo, default=0.0) < 0:
            raise ConfigError("box.lam: multiplier faces must be nonnegative")
        out[name] = [lo, hi]
    return out


# experiment objects ---------------------------------------------------------

class Experiment:
    """Problem, network, oracle and (lazily) the ledger for one config."""

    def __init__(self, config):
        self.config = config
        self.problem = ConstrainedProblem(
            [QuadraticAgentProblem(a["a"], a["b"], a["p"], a["q"], a["c"]) for a in config.agents])
        net = config.network
        if "preset" in net:
            self.network = Network.preset(net["preset"], config.n, net["weight"], net["normalize"])
        else:
            self.network = Network.from_edges(config.n, net["edges"], net["normalize"])
        self.kkt = solve_kkt_oracle(self.problem)
        self.rng = np.random.default_rng(config.seed)
        if config.box is not None:
            b = config.box
            self.box = InitBox(b["x"][0], b["x"][1], b["z"][0], b["z"][1], b["lam"][0], b["lam"][1])
        else:
            self.box = None
        self._ledger = None

    def initial_state(self):
        cfg = self.config
        if cfg.x0 is not None:
            x0 = np.array(cfg.x0)
        elif self.box is not None:
            x0 = self.box.x_lo + (self.box.x_hi - self.box.x_lo) * self.rng.random(cfg.n)
        else:
            x0 = np.zeros(cfg.n)
        z0 = np.zeros(cfg.n) if cfg.z0 is None else np.array(cfg.z0)
        lam0 = np.zeros(cfg.m) if cfg.lam0 is None else np.array(cfg.lam0)
        return AlgorithmState(x0, z0, lam0, 0)

    def init_box(self):
        if self.box is not None:
            return self.box
        s = self.initial_state()
        return InitBox.point(s.x, s.z, s.lam)

    @property
    def ledger(self):
        if self._ledger is None:
            eq = compute_optimal_equilibrium(self.problem, self.network, self.kkt, 1.0)
            self._ledger = assemble_ledger(self.problem, self.network, self.kkt, eq, self.init_box(),
                                           seed=self.config.seed)
        return self._ledger

    def resolve_gamma(self, gamma):
        if gamma == "auto":
            return self.ledger.values["gammabar0"] / 2, "auto"
        return float(gamma), "given"

    def equilibrium(self, gamma):
        return compute_optimal_equilibrium(self.problem, self.network, self.kkt, gamma)

    def certificate(self, gamma, eq):
        """Certificate for ``gamma`` or ``None`` when it is outside the certified range."""
        try:
            return Certificate(self.problem, self.network, self.ledger, eq, gamma)
        except (CertificateRefused, LedgerError) as exc:
            log.info("no certificate attached: %s", exc)
            return None


# output ---------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


# commands -------------------------------------------------------------------

def _state_dict(state):
    return {"x": state.x, "z": state.z, "lam": state.lam, "t": state.t}


def cmd_solve(exp, out, gamma_arg):
    gamma, source = exp.resolve_gamma(gamma_arg)
    eq = exp.equilibrium(gamma)
    cert = exp.certificate(gamma, eq)
    init = exp.initial_state()
    summary = {"schema": SCHEMA, "command": "solve", "gamma": gamma, "gamma_source": source,
               "seed": exp.config.seed, "theta_star": exp.kkt.theta_star, "lambda_star": exp.kkt.lambda_star}
    try:
        rec = run(exp.problem, exp.network, gamma, init, exp.config.max_iter, exp.config.stop_tol,
                  eq=eq, certificate=cert)
    except NumericOverflowError as exc:
        summary.update(stop_reason="numeric_failure", iteration=exc.iteration, error=str(exc))
        write_json(out / "summary.json", summary)
        log.error("%s", exc)
        return EXIT_NUMERIC
    atomic_write(out / "trajectory.csv", rows_to_csv(CSV_COLUMNS, rec.rows))
    summary.update(rec.summary)
    summary["final_state"] = _state_dict(rec.final_state)
    summary["certificate"] = None if cert is None else {
        "gammabar0": exp.ledger.values["gammabar0"], **cert.rate.as_dict()}
    write_json(out / "summary.json", summary)
    return EXIT_OK if rec.summary["stop_reason"] == "converged" else EXIT_MAX_ITER


def cmd_certify(exp, out, gamma_arg):
    L = exp.ledger
    if gamma_arg is not None:
        requested = [gamma_arg]
    elif exp.config.certify_gammas is not None:
        requested = exp.config.certify_gammas
    else:
        g0 = L.values["gammabar0"]
        requested = [g0 / 2, g0 / 10, g0 / 100]
    rates = []
    for g in requested:
        g = L.values["gammabar0"] / 2 if g == "auto" else float(g)
        try:
            rates.append(rate_certificate(L, g).as_dict())
        except CertificateRefused as exc:
            rates.append({"gamma": g, "refused": str(exc)})
    doc = {"schema": SCHEMA, "command": "certify", "seed": exp.config.seed,
           "ledger": L.as_dict(), "rates": rates,
           "omitted": ["alpha5", "alpha6"],
           "theta_star": exp.kkt.theta_star, "lambda_star": exp.kkt.lambda_star}
    write_json(out / "certificate.json", doc)
    return EXIT_OK


def cmd_validate(exp, out, gamma_arg, corrupt_z=False):
    cfg, p, net = exp.config, exp.problem, exp.network
    opts = {"conservation_steps": 100000, "random_states": 1000, "sandwich_samples": 10000,
            "monitor_steps": 10000, "distance_states": 100, "reduction_steps": 1000}
    opts.update(cfg.validate)
    rng = exp.rng
    gamma, _ = exp.resolve_gamma(gamma_arg)
    eq = exp.equilibrium(gamma)
    step = _corrupted_step if corrupt_z else None

    results = [
        checks.check_conservation(p, net, gamma, opts["conservation_steps"], rng, step=step),
        checks.check_fixed_point(p, net, eq, gamma),
        checks.check_commutation(p, net, gamma, rng, opts["random_states"]),
        checks.check_reconstruction(p, net, eq, gamma, rng, opts["random_states"]),
        checks.check_lyapunov(net),
        checks.check_P_sandwich(net, rng, opts["sandwich_samples"]),
        checks.check_distance_formula(p, net, eq, rng, opts["distance_states"]),
        checks.check_centralized_reduction(p, net, gamma, exp.initial_state().x, opts["reduction_steps"]),
    ]
    L = exp.ledger
    g_cert = L.values["gammabar0"] / 2
    eq_cert = exp.equilibrium(g_cert)
    cert = Certificate(p, net, L, eq_cert, g_cert)
    results.append(checks.check_Vopt_sandwich(p, L, g_cert, eq_cert, rng, opts["sandwich_samples"]))
    results.extend(checks.check_descent_and_envelope(p, net, cert, exp.initial_state().x, opts["monitor_steps"]))

    failed = [r.name for r in results if not r.passed]
    for r in results:
        log.info("%-22s %s value=%.3e tol=%.1e %s", r.name, "PASS" if r.passed else "FAIL",
                 r.value, r.tolerance, r.detail)
    write_json(out / "validation.json", {"schema": SCHEMA, "command": "validate", "gamma": gamma,
                                         "corrupt_z_update": corrupt_z, "seed": cfg.seed,
                                         "checks": [r.as_dict() for r in results], "failed": failed})
    for name in failed:
        print(f"FAILED invariant: {name}", file=sys.stderr)
    return EXIT_VALIDATION if failed else EXIT_OK


def _corrupted_step(problem, network, state, gamma):
    """Fault injection: the sign of the whole ``z`` update is flipped."""
    nxt = step_distributed(problem, network, state, gamma)
    return AlgorithmState(nxt.x, -nxt.z, nxt.lam, nxt.t)


def cmd_compare(exp, out, gamma_arg):
    gamma, source = exp.resolve_gamma(gamma_arg)
    eq = exp.equilibrium(gamma)
    p, net = exp.problem, exp.network
    state = exp.initial_state()
    theta, lam_c = float(np.mean(state.x)), state.lam.copy()
    lam_star = exp.kkt.lambda_star

    def central_dist(theta, lam):
        return math.sqrt(p.n * (theta - eq.theta_star) ** 2 + float(np.sum((lam - lam_star) ** 2)))

    rows = [(0, distance_to_optimal_set(state, eq, net), central_dist(theta, lam_c),
             float(np.mean(state.x)), theta)]
    tol = exp.config.stop_tol
    stop = "max_iter"
    try:
        for t in range(1, exp.config.max_iter + 1):
            state = step_distributed(p, net, state, gamma)
            theta, lam_c = step_centralized(p, theta, lam_c, gamma)
            row = (t, distance_to_optimal_set(state, eq, net), central_dist(theta, lam_c),
                   float(np.mean(state.x)), theta)
            rows.append(row)
            if row[1] <= tol and row[2] <= tol:
                stop = "converged"
                break
    except NumericOverflowError as exc:
        write_json(out / "compare_summary.json", {"schema": SCHEMA, "command": "compare",
                                                  "stop_reason": "numeric_failure", "error": str(exc)})
        return EXIT_NUMERIC
    header = ("t", "dist_distributed", "dist_centralized", "x_m", "theta")
    atomic_write(out / "compare.csv", rows_to_csv(header, rows))
    write_json(out / "compare_summary.json", {
        "schema": SCHEMA, "command": "compare", "gamma": gamma, "gamma_source": source,
        "iterations": rows[-1][0], "stop_reason": stop,
        "final_dist_distributed": rows[-1][1], "final_dist_centralized": rows[-1][2]})
    return EXIT_OK if stop == "converged" else EXIT_MAX_ITER


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "validate": cmd_validate, "compare": cmd_compare}


def run_command(command, config_path, gamma=None, seed=None, out=None, corrupt_z=False):
    """Run one command on one config file and return its exit code."""
    try:
        cfg = ExperimentConfig.load(config_path)
        if seed is not None:
            cfg.seed = seed
        out_dir = Path(out if out is not None else cfg.out)
        gamma_arg = gamma if gamma is not None else (cfg.gamma if command != "certify" else None)
        exp = Experiment(cfg)
        if command == "validate":
            return cmd_validate(exp, out_dir, gamma_arg, corrupt_z)
        return COMMANDS[command](exp, out_dir, gamma_arg)
    except (ConfigError, AssumptionViolation, LedgerError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericOverflowError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StabilityError, ConsistencyError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _parse_gamma(text):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid stepsize {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("stepsize must be positive")
    return v


def _parse_seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="consensus-pd",
                                     description="Distributed primal-dual consensus optimization experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML experiment config")
    parser.add_argument("--gamma", type=_parse_gamma, help="stepsize or 'auto' (half the certified bound)")
    parser.add_argument("--seed", type=_parse_seed)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--batch", help="comma-separated config paths run in parallel threads")
    parser.add_argument("--corrupt-z-update", action="store_true",
                        help="validate only: flip the sign of the z update to show the checks bite")
    return parser


def configure_logging():
    """Verbosity from ``CONSENSUS_PD_LOG`` (level name or number, default WARNING)."""
    name = os.environ.get("CONSENSUS_PD_LOG", "WARNING").strip().upper()
    level = int(name) if name.isdigit() else logging.getLevelName(name)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    configure_logging()
    args = build_parser().parse_args(argv)
    if args.batch:
        paths = [p for p in args.batch.split(",") if p]
        base = Path(args.out or ".")

        def one(path):
            return run_command(args.command, path, args.gamma, args.seed, base / Path(path).stem,
                               args.corrupt_z_update)

        with ThreadPoolExecutor() as pool:
            codes = list(pool.map(one, paths))
        for path, code in zip(paths, codes):
            print(f"{path}: exit {code}")
        return max(codes, default=EXIT_OK)
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    return run_command(args.command, args.config, args.gamma, args.seed, args.out, args.corrupt_z_update)


if __name__ == "__main__":
    sys.exit(main())
