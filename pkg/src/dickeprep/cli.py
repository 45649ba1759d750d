"""Command-line interface: plan, run, tradeoff, heatmap, direct-map, oracle-check."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import __version__, cvstate, oracle, protocol, synth
from .exceptions import DickePrepError, SynthesisError
from .schedule import Schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_ORACLE = 4

SUMMARY_PROBABILITIES = (0.1, 0.25, 0.5)
FLOAT_FMT = "%.16e"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    target: list = field(default_factory=lambda: [[1 / math.sqrt(2), 0.0], [1 / math.sqrt(2), 0.0]])
    kappa: float = 0.5
    r: float = 1.0
    phi: Optional[list] = None
    epsilon: Optional[float] = None
    presqueezed: bool = False
    complex: bool = False
    strategy: str = "all"
    feedback: bool = False
    rescale: bool = True
    sweep: Optional[list] = None
    grid_l: Optional[float] = None
    grid_h: Optional[float] = None
    outcomes: Optional[list] = None
    oracle_dim: int = oracle.DEFAULT_DIM
    light_dim: Optional[int] = None
    seed: int = 0
    out: Optional[str] = None
    summary: Optional[str] = None
    workers: int = 1

    def amplitudes(self) -> np.ndarray:
        return parse_complex_list(self.target, "target")

    def validate(self) -> "RunConfig":
        if not self.target:
            raise ConfigError("target must be non-empty")
        amps = self.amplitudes()
        if not np.any(amps != 0):
            raise ConfigError("target must have a non-zero amplitude")
        if not self.kappa >= 0:
            raise ConfigError("kappa must be non-negative")
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.strategy not in ("basic", "advanced", "all"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.grid_h is not None and not self.grid_h > 0:
            raise ConfigError("grid-h must be positive")
        if self.grid_l is not None and self.grid_l < 0:
            raise ConfigError("grid-l must be non-negative")
        if self.oracle_dim < 2:
            raise ConfigError("oracle dimension must be at least 2")
        return self

    def digest(self) -> str:
        """Hash of everything that affects computed numbers (paths excluded)."""
        data = {k: v for k, v in asdict(self).items() if k not in ("out", "summary", "workers")}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_complex_list(values, name: str) -> np.ndarray:
    """``[[re, im], ...]`` or plain reals into a complex array."""
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ConfigError(f"{name}: complex entries are [re, im] pairs, got {v!r}")
            out.append(complex(float(v[0]), float(v[1])))
        elif isinstance(v, (int, float)):
            out.append(complex(float(v), 0.0))
        else:
            raise ConfigError(f"{name}: cannot parse {v!r}")
    return np.array(out, dtype=complex)


def _json_value(text: str, name: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid value {text!r} ({exc.msg})") from None


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; values are JSON, ``#`` starts a comment."""
    names = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--target", help='JSON list of amplitudes, e.g. "[[0,0],[0,0],[1,0]]"')
    common.add_argument("--kappa", type=float)
    common.add_argument("--r", type=float, help="light squeezing parameter")
    common.add_argument("--phi", help="JSON list of coupling angles, one per step")
    common.add_argument("--epsilon", type=float, help="override kappa^2 exp(-2r)")
    common.add_argument("--presqueezed", action="store_true", default=None)
    common.add_argument("--complex", action="store_true", default=None,
                        help="use the rotated-coupling solver for complex |0>,|1>,|2> targets")
    common.add_argument("--strategy", choices=("basic", "advanced", "all"))
    common.add_argument("--feedback", action="store_true", default=None)
    common.add_argument("--no-rescale", dest="rescale", action="store_false", default=None)
    common.add_argument("--sweep", help="JSON list of window sizes or fidelity thresholds")
    common.add_argument("--grid-l", type=float)
    common.add_argument("--grid-h", type=float)
    common.add_argument("--outcomes", help="JSON list of homodyne outcomes for `run`")
    common.add_argument("--oracle-dim", type=int)
    common.add_argument("--light-dim", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--summary", help="JSON summary path for `tradeoff`")
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="dickeprep", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("plan", "print the displacement schedule"),
        ("run", "execute the schedule for given outcomes"),
        ("tradeoff", "fidelity versus success probability curves (CSV)"),
        ("heatmap", "joint density and fidelity over a 2-outcome grid (CSV)"),
        ("direct-map", "single-step light state for the target, executed at p = 0"),
        ("oracle-check", "compare closed forms with the truncated-Fock simulation"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


JSON_FLAGS = ("target", "phi", "sweep", "outcomes")


def config_from_args(args: argparse.Namespace) -> tuple:
    """Merge defaults, config file and flags. Returns (config, explicitly set keys)."""
    values = read_config_file(args.config) if args.config else {}
    explicit = set(values)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        if f.name in JSON_FLAGS:
            v = _json_value(v, f.name)
        values[f.name] = v
        explicit.add(f.name)
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    for name in ("kappa", "r"):
        setattr(cfg, name, float(getattr(cfg, name)))
    return cfg.validate(), explicit


# -- planning ----------------------------------------------------------------------


def _with_phis(schedule: Schedule, phis) -> Schedule:
    if len(phis) != schedule.n_steps:
        raise ConfigError(f"phi needs {schedule.n_steps} entries, got {len(phis)}")
    steps = tuple(
        replace(s, theta=replace(s.theta, phi=float(p))) for s, p in zip(schedule.steps, phis)
    )
    return replace(schedule, steps=steps)


def plan(cfg: RunConfig) -> tuple:
    """Schedule for the configured target; also returns the complex solutions if any."""
    if not cfg.kappa > 0:
        raise ConfigError("planning needs kappa > 0")
    amps = cfg.amplitudes()
    target = synth.TargetSpec.from_amplitudes(amps)
    if cfg.complex:
        if target.degree != 2:
            raise SynthesisError(
                f"rotated-coupling solver handles degree-2 targets, this one has degree {target.degree}"
            )
        c = target.coeffs.amps / target.coeffs.amps[2]
        solutions = synth.solve_complex_n2(c[0], c[1])
        return solutions[0].to_schedule(cfg.kappa, cfg.r), solutions
    if not target.real_roots:
        raise synth.ComplexRootsError(
            f"target polynomial has complex roots {[complex(x) for x in target.roots]}; "
            "real-root planning cannot reach it (rerun with --complex for |0>,|1>,|2> targets)"
        )
    schedule = synth.schedule_real(
        target, cfg.epsilon, cfg.presqueezed, kappa=cfg.kappa, r=cfg.r
    )
    if cfg.phi is not None:
        schedule = _with_phis(schedule, cfg.phi)
    return schedule, None


def design_point(schedule: Schedule, target, rescale: bool = True) -> dict:
    state, density = protocol.execute(schedule, np.zeros(schedule.n_steps))
    if rescale and schedule.rescale_factor != 1.0:
        state = cvstate.rescale_quadrature(state, schedule.rescale_factor)
    return {"density": float(density), "fidelity": float(cvstate.fidelity_pure(state, target))}


def _pair(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


# -- output ------------------------------------------------------------------------


def header_lines(cfg: RunConfig, command: str, **extra) -> list:
    lines = [
        f"# tool: dickeprep {__version__}",
        f"# command: {command}",
        f"# config_hash: {cfg.digest()}",
        f"# rescale: {str(cfg.rescale).lower()}",
        f"# feedback: {str(cfg.feedback).lower()}",
    ]
    lines += [f"# {k}: {v}" for k, v in extra.items()]
    return lines


def write_csv(path: Optional[str], header: list, columns: list, rows) -> None:
    buf = io.StringIO(newline="")
    for line in header:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else FLOAT_FMT % v for v in row])
    _emit(path, buf.getvalue())


def _emit(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _grid(cfg: RunConfig, schedule: Schedule) -> protocol.OutcomeGrid:
    default = protocol.OutcomeGrid.default(schedule)
    return protocol.OutcomeGrid(
        cfg.grid_l if cfg.grid_l is not None else default.L,
        cfg.grid_h if cfg.grid_h is not None else default.h,
        default.dims,
    )


# -- subcommands --------------------------------------------------------------------


def cmd_plan(cfg: RunConfig) -> int:
    schedule, solutions = plan(cfg)
    target = cfg.amplitudes()
    report = {
        "config_hash": cfg.digest(),
        "schedule": schedule.describe(),
        "design_point": design_point(schedule, target, cfg.rescale),
    }
    report["schedule"]["alphas"] = report["schedule"].pop("displacements")
    if solutions is not None:
        report["complex_solutions"] = [
            {"phi1": s.phi1, "phi2": s.phi2, "y": s.y, "fidelity": s.fidelity,
             "alphas": [_pair(s.alpha1), _pair(s.alpha2), _pair(s.alpha3)]}
            for s in solutions
        ]
    _emit(cfg.out, _dump(report))
    return EXIT_OK


def cmd_run(cfg: RunConfig) -> int:
    schedule, _ = plan(cfg)
    target = cfg.amplitudes()
    outcomes = np.zeros(schedule.n_steps) if cfg.outcomes is None else np.asarray(cfg.outcomes, float)
    if outcomes.shape != (schedule.n_steps,):
        raise ConfigError(f"outcomes needs {schedule.n_steps} values")
    state, density = protocol.execute(schedule, outcomes)
    if cfg.rescale and schedule.rescale_factor != 1.0:
        state = cvstate.rescale_quadrature(state, schedule.rescale_factor)
    report = {
        "config_hash": cfg.digest(),
        "outcomes": outcomes.tolist(),
        "density": float(density),
        "fidelity": float(cvstate.fidelity_pure(state, target)),
    }
    if cfg.feedback:
        delta, fid = protocol.feedback_displacement(state, target)
        report["feedback"] = {"delta": _pair(delta.alpha), "fidelity": fid}
    amps = cvstate.to_fock(state, max(target.size - 1, 6)).amps / math.sqrt(density)
    report["fock_amplitudes"] = [_pair(a) for a in amps]
    _emit(cfg.out, _dump(report))
    return EXIT_OK


def _strategies(cfg: RunConfig) -> list:
    if cfg.strategy == "all":
        return list(protocol.STANDARD_STRATEGIES)
    return [protocol.AcceptanceStrategy(cfg.strategy, cfg.feedback)]


def _curves(cfg: RunConfig, schedule: Schedule, target) -> dict:
    grid = _grid(cfg, schedule)
    evals = {}
    curves = {}
    for strat in _strategies(cfg):
        if strat.feedback not in evals:
            evals[strat.feedback] = protocol.evaluate_grid(
                schedule, target, grid, feedback=strat.feedback, rescale=cfg.rescale,
                workers=cfg.workers,
            )
        curves[strat.label] = protocol.tradeoff_from_evaluation(
            evals[strat.feedback], strat, cfg.sweep
        )
    return curves


def _emit_curves(cfg: RunConfig, command: str, curves: dict, extra: dict) -> None:
    rows = []
    for label, curve in curves.items():
        rows += [(label, par, p, f) for p, f, par in curve.points]
    header = header_lines(cfg, command, strategies=",".join(curves), **extra)
    write_csv(cfg.out, header, ["strategy", "parameter", "success_probability", "average_fidelity"], rows)
    summary = {
        "config_hash": cfg.digest(),
        "command": command,
        "fidelity_at_probability": {
            label: {
                str(p): (None if np.isnan(v) else float(v))
                for p, v in zip(SUMMARY_PROBABILITIES, curve.fidelity_at(SUMMARY_PROBABILITIES))
            }
            for label, curve in curves.items()
        },
        "skipped_sweep_values": {label: curve.skipped for label, curve in curves.items()},
        **extra,
    }
    path = cfg.summary
    if path is None and cfg.out not in (None, "-"):
        path = cfg.out + ".summary.json"
    if path is None:
        sys.stderr.write(_dump(summary))
    else:
        _emit(path, _dump(summary))


def cmd_tradeoff(cfg: RunConfig) -> int:
    schedule, _ = plan(cfg)
    curves = _curves(cfg, schedule, cfg.amplitudes())
    _emit_curves(cfg, "tradeoff", curves, {"rescale_factor": schedule.rescale_factor})
    return EXIT_OK


def cmd_heatmap(cfg: RunConfig) -> int:
    schedule, _ = plan(cfg)
    fmap = protocol.fidelity_map(
        schedule, cfg.amplitudes(), _grid(cfg, schedule), feedback=cfg.feedback,
        rescale=cfg.rescale, workers=cfg.workers,
    )
    header = header_lines(cfg, "heatmap", mass=FLOAT_FMT % fmap.mass)
    write_csv(cfg.out, header, ["p1", "p2", "density", "fidelity"], fmap.rows())
    return EXIT_OK


def cmd_direct_map(cfg: RunConfig) -> int:
    if not cfg.kappa > 0:
        raise ConfigError("direct mapping needs kappa > 0")
    target = cfg.amplitudes()
    light = synth.direct_mapping_light(target, cfg.kappa)
    schedule = synth.direct_mapping_schedule(target, cfg.kappa)
    report = {
        "config_hash": cfg.digest(),
        "light_amplitudes": [_pair(u) for u in light.amps],
        "rescale_factor": schedule.rescale_factor,
        "design_point": design_point(schedule, target, cfg.rescale),
    }
    if cfg.out is not None:
        curves = _curves(cfg, schedule, target)
        _emit_curves(cfg, "direct-map", curves, {"rescale_factor": schedule.rescale_factor})
        sys.stderr.write(_dump(report))
    else:
        _emit(None, _dump(report))
    return EXIT_OK


def cmd_oracle_check(cfg: RunConfig, explicit: set) -> int:
    kw = {}
    if "kappa" in explicit:
        kw["kappas"] = (cfg.kappa,)
    if "r" in explicit:
        kw["rs"] = (cfg.r,)
    if cfg.outcomes is not None:
        kw["outcomes"] = tuple(float(p) for p in cfg.outcomes)
    light_dim = cfg.light_dim
    if light_dim is None:
        light_dim = max(cfg.oracle_dim, oracle.DEFAULT_LIGHT_DIM)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = oracle.single_step_agreement(dim=cfg.oracle_dim, light_dim=light_dim, **kw)
    # unitarity spot check on a seeded random joint state
    rng = np.random.default_rng(cfg.seed)
    amps = rng.normal(size=(cfg.oracle_dim, 2 * 8)) + 1j * rng.normal(size=(cfg.oracle_dim, 2 * 8))
    amps /= np.linalg.norm(amps)
    kappa = max(kw.get("kappas", (0.5,)))
    drift = abs(oracle.qnd_evolve(oracle.JointState(amps), kappa).norm - 1.0)
    lines = [rep.summary(), f"unitarity drift: {drift:.3e}"]
    if not rep.passed:
        worst = rep.worst("density_rel_error")
        worst_f = rep.worst("fidelity_deficit")
        lines.append(
            "worst density: kappa={kappa} r={r} p_L={p_L} rel error={density_rel_error:.3e}".format(**worst)
        )
        lines.append(
            "worst fidelity: kappa={kappa} r={r} p_L={p_L} deficit={fidelity_deficit:.3e}".format(**worst_f)
        )
        lines.append("truncation too small for these parameters; raise --oracle-dim/--light-dim")
    _emit(cfg.out, "\n".join(lines) + "\n")
    return EXIT_OK if rep.passed and drift < 1e-10 else EXIT_ORACLE


COMMANDS = {
    "plan": cmd_plan,
    "run": cmd_run,
    "tradeoff": cmd_tradeoff,
    "heatmap": cmd_heatmap,
    "direct-map": cmd_direct_map,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, explicit = config_from_args(args)
        if args.command == "oracle-check":
            return cmd_oracle_check(cfg, explicit)
        return COMMANDS[args.command](cfg)
    except SynthesisError as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except (ConfigError, DickePrepError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
