from __future__ import annotations
from typing import Callable, Dict, List, Optional, Sequence
import argparse
import json
import logging
import os
import sys
import numpy as np
from pathlib import Path
from scipy import fft as sfft

from .common import ConfigError, TFWError, generate_filepath, output_root
from .experiments import (
    ExperimentReport,
    apply_perturbation,
    locality_experiment,
    neutrality_experiment,
    screening_experiment,
    tdl_experiment,
)
from .fieldio import RunWriter, read_json
from .grid import Grid, make_grid
from .groundstate import SolverOptions, bounds_diagnostic, solve_ground_state
from .nuclei import (
    NuclearConfig,
    NucleusShape,
    admissibility,
    assemble_density,
    config_from_dict,
    density_derivative,
    perturb,
    simple_cubic,
)
from .response import (
    LinearisedSolver,
    fd_consistency,
    operator_form,
    screening_constants,
)
from .siteenergy import (
    build_partition,
    energy_density,
    invariance_suite,
    site_energies,
    site_forces,
    total_force,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = [
    "solve",
    "locality",
    "screening",
    "tdl",
    "neutrality",
    "site-energies",
    "forces",
    "invariance",
    "linearise",
    "validate-config",
]

TOP_KEYS = {
    "grid": "dict",
    "nuclei": "dict",
    "solver": "dict",
    "experiment": "dict",
    "output": "string",
    "seed": "non-negative-int",
    "threads": "positive-int",
}
GRID_KEYS = {"n": "even-int", "L": "positive"}
NUCLEI_KEYS = {
    "positions": "points",
    "lattice": "dict",
    "file": "string",
    "R0": "positive",
    "background": "non-negative",
    "charges": "list",
}
LATTICE_KEYS = {"per_axis": "positive-int", "jitter": "non-negative"}
SOLVER_KEYS = {
    "tol": "positive",
    "max_iter": "positive-int",
    "init": ["uniform", "random"],
    "step_size": "positive",
    "max_step": "positive",
    "min_step": "positive",
    "precond_shift": "positive",
    "log_steps": "positive-int",
}
PERTURBATION_KEYS = {
    "displace": {"kind": "string", "index": "non-negative-int", "displacement": "point"},
    "impurity": {"kind": "string", "position": "point", "charge": "non-negative"},
}
_WINDOW = {"r_min": "positive", "r_max": "positive", "processes": "positive-int"}
EXPERIMENT_KEYS = {
    "solve": {},
    "locality": {"perturbation": "dict", **_WINDOW},
    "screening": {"m0": "positive", "Z": "non-negative", "tolerance": "positive", **_WINDOW},
    "tdl": {
        "radii": "list",
        "R_obs": "positive",
        "centre": "point",
        "fill": ["jellium", "vacuum"],
        "processes": "positive-int",
    },
    "neutrality": {"perturbation": "dict", "radii": "list", "centre": "point", **_WINDOW},
    "site-energies": {"gamma_tilde": "positive", "flavor": ["E1", "E2", "both"]},
    "forces": {
        "gamma_tilde": "positive",
        "flavor": ["E1", "E2"],
        "k": "non-negative-int",
        "V": "point",
        "method": ["linearised", "central-difference", "both"],
        "fd_step": "positive",
    },
    "invariance": {"gamma_tilde": "positive", "flavor": ["E1", "E2"]},
    "linearise": {
        "k": "non-negative-int",
        "V": "point",
        "h_list": "list",
        "C_W": "positive",
        "lin_tol": "positive",
    },
}

SCHEMA_HELP = """Run configuration (JSON):
  {
    "grid":   {"n": 64, "L": 12.8},
    "nuclei": {"positions": [[x, y, z], ...] | "lattice": {"per_axis": 3, "jitter": 0.0}
               | "file": "nuclei.json", "R0": 1.0, "background": 0.0, "charges": [...]},
    "solver": {"tol": 1e-9, "max_iter": 50000, "init": "uniform" | "random",
               "step_size": 1.0, "max_step": 2.0, "min_step": 1e-10, "precond_shift": 1.0},
    "experiment": {"name": "<subcommand>", ...parameters...},
    "output": "path/to/out", "seed": 0, "threads": 4
  }
A flat nuclei file {"L", "n", "nuclei", "R0", "background"} is accepted as a whole config.
Unknown keys are rejected."""


def _is_number(x: object) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _is_int(x: object) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _check_kind(value: object, kind: object, name: str, where: str) -> None:
    if isinstance(kind, list):
        if value not in kind:
            raise ConfigError(
                f"Parameter '{name}' in {where} must be one of these values: {str(kind)[1:-1]}."
            )
        return

    ok = {
        "positive": lambda x: _is_number(x) and x > 0,
        "non-negative": lambda x: _is_number(x) and x >= 0,
        "positive-int": lambda x: _is_int(x) and x > 0,
        "non-negative-int": lambda x: _is_int(x) and x >= 0,
        "even-int": lambda x: _is_int(x) and x >= 4 and x % 2 == 0,
        "string": lambda x: isinstance(x, str),
        "dict": lambda x: isinstance(x, dict),
        "list": lambda x: isinstance(x, list) and all(_is_number(y) for y in x),
        "point": lambda x: isinstance(x, list) and len(x) == 3 and all(_is_number(y) for y in x),
        "points": lambda x: isinstance(x, list)
        and all(isinstance(p, list) and len(p) == 3 and all(_is_number(y) for y in p) for p in x),
    }[kind]
    if not ok(value):
        raise ConfigError(f"Parameter '{name}' in {where} must be {kind.replace('-', ' ')}.")


def check_params(container: Dict, needed: List[str], valid: Dict, where: str = "config") -> None:
    """Checks container for the necessary items and rejects unknown or invalid ones.

    Args:
        container (Dict): contains the submitted parameters.
        needed (List[str]): contains the needed parameters.
        valid (Dict): every allowed parameter mapped to its kind, a list of
            choices or one of "positive", "non-negative", "positive-int", ...
        where (str): name of the block, for messages.

    """
    for need in needed:
        if need not in container:
            raise ConfigError(f"Parameter '{need}' is required in {where}.")

    for key, value in container.items():
        if key not in valid:
            raise ConfigError(f"Unknown key '{key}' in {where}.")
        _check_kind(value, valid[key], key, where)


def _from_flat(data: Dict) -> Dict:
    """Turns the flat nuclei file format into a run configuration."""
    if "grid" in data or "L" not in data:
        return data

    flat = dict(data)
    grid = {"L": flat.pop("L")}
    if "n" in flat:
        grid["n"] = flat.pop("n")

    nuclei = {}
    for src, dst in (("nuclei", "positions"), ("R0", "R0"), ("background", "background"), ("charges", "charges")):
        if src in flat:
            nuclei[dst] = flat.pop(src)

    return {"grid": grid, "nuclei": nuclei, **flat}


class RunConfig:
    """Validated run configuration.

    Attributes:
        data (Dict): the configuration, in block form.
        base_dir (Path): directory relative file references resolve against.
        command (str): subcommand the configuration was validated for.

    """

    __slots__ = ["data", "base_dir", "command"]

    def __init__(self, data: Dict, command: Optional[str] = None, base_dir: Path = Path(".")) -> None:
        if not isinstance(data, dict):
            raise ConfigError("Configuration must be a JSON object.")

        self.data, self.base_dir, self.command = _from_flat(data), Path(base_dir), command
        self._validate()

    @classmethod
    def from_file(cls, path: str, command: Optional[str] = None) -> RunConfig:
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"'{path}' is not valid JSON: {e}") from e

        return cls(data, command, Path(path).parent)

    def _validate(self) -> None:
        data = self.data
        check_params(data, ["grid", "nuclei"], TOP_KEYS)
        check_params(data["grid"], ["n", "L"], GRID_KEYS, "grid")

        nuclei = data["nuclei"]
        check_params(nuclei, [], NUCLEI_KEYS, "nuclei")
        sources = [key for key in ("positions", "lattice", "file") if key in nuclei]
        if len(sources) > 1:
            raise ConfigError(f"Block nuclei takes only one of {', '.join(sources)}.")
        if "lattice" in nuclei:
            check_params(nuclei["lattice"], ["per_axis"], LATTICE_KEYS, "nuclei.lattice")

        check_params(data.get("solver", {}), [], SOLVER_KEYS, "solver")
        self._validate_experiment(data.get("experiment", {}))

        # Builds everything once so model-level errors surface before any solve.
        try:
            self.nuclei().shape.check_fits(self.grid())
            self.solver_options()
        except (ValueError, OSError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e

    def _validate_experiment(self, exp: Dict) -> None:
        name = exp.get("name")
        if name is not None and name not in EXPERIMENT_KEYS:
            raise ConfigError(f"Unknown experiment '{name}'.")

        command = self.command if self.command in EXPERIMENT_KEYS else None
        if command is not None and name is not None and name != command:
            raise ConfigError(f"Experiment '{name}' does not match subcommand '{command}'.")

        target = command or name
        if target is None:
            valid = {k: v for keys in EXPERIMENT_KEYS.values() for k, v in keys.items()}
        else:
            valid = dict(EXPERIMENT_KEYS[target])
        valid["name"] = "string"
        check_params(exp, [], valid, "experiment")

        if "perturbation" in exp:
            pert = exp["perturbation"]
            kind = pert.get("kind", "displace")
            if kind not in PERTURBATION_KEYS:
                raise ConfigError("Perturbation kind must be one of these values: 'displace', 'impurity'.")
            needed = ["position"] if kind == "impurity" else []
            check_params(pert, needed, PERTURBATION_KEYS[kind], "experiment.perturbation")

    @property
    def output(self) -> Optional[str]:
        return self.data.get("output")

    @property
    def seed(self) -> int:
        return self.data.get("seed", 0)

    @property
    def threads(self) -> Optional[int]:
        return self.data.get("threads")

    def grid(self) -> Grid:
        return make_grid(self.data["grid"]["n"], self.data["grid"]["L"])

    def nuclei(self) -> NuclearConfig:
        block, L = self.data["nuclei"], self.data["grid"]["L"]

        if "file" in block:
            flat = read_json(self.base_dir / block["file"])
            config = config_from_dict({"L": L, **flat})
            if config.L != L:
                raise ConfigError(f"Nuclei file has L = {config.L}, grid has L = {L}.")
            return config

        shape = NucleusShape(block.get("R0", 1.0))
        background = block.get("background", 0.0)
        if "lattice" in block:
            lattice = block["lattice"]
            return simple_cubic(
                L, lattice["per_axis"], lattice.get("jitter", 0.0), self.seed, shape, background
            )

        return NuclearConfig(block.get("positions", []), L, shape, background, block.get("charges"))

    def solver_options(self, log_steps: Optional[int] = None) -> SolverOptions:
        params = dict(self.data.get("solver", {}))
        if log_steps is not None:
            params["log_steps"] = log_steps
        return SolverOptions(seed=self.seed, **params)

    def experiment(self) -> Dict:
        exp = dict(self.data.get("experiment", {}))
        exp.pop("name", None)
        return exp


Command = Callable[[RunConfig, SolverOptions, RunWriter], Dict]


def _experiment_summary(report: ExperimentReport, writer: RunWriter) -> Dict:
    for name, (header, rows) in report.curves.items():
        writer.csv(f"curves/{name}.csv", header, rows)
    for name, field in report.fields.items():
        writer.field(f"fields/{name}.tfwf", field)
    return report.as_dict()


def run_solve(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    grid, config = cfg.grid(), cfg.nuclei()
    state = solve_ground_state(assemble_density(config, grid), opts)

    writer.field("u.tfwf", state.u)
    writer.field("phi.tfwf", state.phi)
    writer.json(
        "state.json",
        {
            **state.as_dict(),
            "bounds": bounds_diagnostic(state).as_dict(),
            "admissibility": admissibility(config, grid, seed=cfg.seed).as_dict(),
        },
    )
    writer.csv(
        "curves/energy_trace.csv",
        ["iteration", "energy"],
        [[i, e] for i, e in enumerate(state.energy_trace)],
    )
    return {"checks": {"converged": state.residual_u <= opts.tol}, "theta": state.theta}


def run_locality(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp = cfg.experiment()
    report = locality_experiment(
        cfg.nuclei(),
        exp.get("perturbation", {"kind": "displace", "index": 0, "displacement": [0.3, 0.0, 0.0]}),
        cfg.grid(),
        opts,
        exp.get("r_min"),
        exp.get("r_max"),
        exp.get("processes", 1),
    )
    return _experiment_summary(report, writer)


def run_screening(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp, config = cfg.experiment(), cfg.nuclei()
    report = screening_experiment(
        exp.get("m0", config.background or 1.0),
        exp.get("Z", 0.1),
        cfg.grid(),
        config.shape,
        opts,
        exp.get("r_min"),
        exp.get("r_max"),
        exp.get("processes", 1),
        exp.get("tolerance", 0.15),
    )
    return _experiment_summary(report, writer)


def run_tdl(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp, grid = cfg.experiment(), cfg.grid()
    report = tdl_experiment(
        cfg.nuclei(),
        grid,
        exp.get("radii"),
        exp.get("R_obs", 0.1 * grid.L),
        exp.get("centre"),
        exp.get("fill", "jellium"),
        opts,
        exp.get("processes", 1),
    )
    return _experiment_summary(report, writer)


def run_neutrality(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp, config = cfg.experiment(), cfg.nuclei()
    changed, centre = apply_perturbation(
        config, exp.get("perturbation", {"kind": "displace", "index": 0, "displacement": [0.3, 0.0, 0.0]})
    )
    report = neutrality_experiment(
        config,
        changed,
        cfg.grid(),
        exp.get("radii"),
        exp.get("centre", centre),
        opts,
        exp.get("r_min"),
        exp.get("r_max"),
        exp.get("processes", 1),
    )
    return _experiment_summary(report, writer)


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def run_site_energies(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp, grid, config = cfg.experiment(), cfg.grid(), cfg.nuclei()
    m = assemble_density(config, grid)
    state = solve_ground_state(m, opts)
    partition = build_partition(config, grid, exp.get("gamma_tilde", 0.5))

    flavor = exp.get("flavor", "both")
    flavors = ["E1", "E2"] if flavor == "both" else [flavor]

    summary: Dict = {"checks": {}, "site_energies": {}}
    partition_gap = float(np.max(np.abs(np.sum(partition.weights, axis=0) - 1)))
    summary["partition_sum_error"] = partition_gap
    summary["checks"]["partition_sum"] = partition_gap <= 1e-12

    for fl in flavors:
        report = site_energies(state, m, config, partition, fl)
        writer.csv(f"curves/site_energies_{fl}.csv", ["j", "x", "y", "z", "E"], report.rows())
        summary["site_energies"][fl] = report.as_dict()
        summary["checks"][f"sum_{fl}"] = _relative(report.total, report.reference) <= 1e-9

    e1, e2 = (energy_density(state, m, fl).integrate() for fl in ("E1", "E2"))
    summary["density_integrals"] = {"E1": e1, "E2": e2}
    summary["checks"]["density_equivalence"] = _relative(e1, e2) <= 1e-9
    return summary


def run_forces(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp, grid, config = cfg.experiment(), cfg.grid(), cfg.nuclei()
    k, V = exp.get("k", 0), exp.get("V", [1.0, 0.0, 0.0])
    flavor, method = exp.get("flavor", "E1"), exp.get("method", "linearised")
    fd_step = exp.get("fd_step", 1e-2)

    m = assemble_density(config, grid)
    state = solve_ground_state(m, opts)
    partition = build_partition(config, grid, exp.get("gamma_tilde", 0.5))
    m_dot = density_derivative(config, grid, k, V)
    lin = LinearisedSolver(state).solve(m_dot)

    rows = {
        fl: site_forces(state, m, config, partition, k, V, fl, "linearised", lin)
        for fl in ("E1", "E2")
    }
    total = total_force(state, m_dot)
    scale = float(np.sum(np.abs(state.phi.values * m_dot.values))) * grid.dv

    summary: Dict = {"checks": {}, "total_force": total, "rows": {}}
    for fl, row in rows.items():
        summary["checks"][f"total_{fl}"] = abs(row.total - total) <= 1e-6 * max(scale, 1e-300)
        summary["rows"][f"linearised_{fl}"] = row.as_dict()
        writer.csv(f"curves/forces_{fl}.csv", ["j", "k", "distance", "value", "method"], row.rows())
    summary["checks"]["total_E1_E2"] = abs(rows["E1"].total - rows["E2"].total) <= 1e-6 * max(
        scale, 1e-300
    )

    if method in ("central-difference", "both"):
        fd_row = site_forces(
            state, m, config, partition, k, V, flavor, "central-difference", opts=opts, fd_step=fd_step
        )
        summary["rows"][f"central-difference_{flavor}"] = fd_row.as_dict()
        writer.csv(
            f"curves/forces_{flavor}_central_difference.csv",
            ["j", "k", "distance", "value", "method"],
            fd_row.rows(),
        )
        allowed = max(1e-6, 10 * fd_step ** 2)
        gap = max(abs(a - b) for a, b in zip(rows[flavor].entries, fd_row.entries))
        summary["method_gap"] = gap
        summary["checks"]["method_agreement"] = gap <= allowed

    report = ExperimentReport("forces", {})
    row = rows[flavor]
    far = [(d, abs(e)) for d, e in zip(row.distances, row.entries) if d > 0]
    if far:
        r, y = map(np.array, zip(*far))
        report.add_fit("force_decay", r, y, 1e-12, 0.9)
    summary["fits"] = {name: fit.as_dict() for name, fit in report.fits.items()}
    summary["checks"].update(report.checks)
    return summary


def run_invariance(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp = cfg.experiment()
    report = invariance_suite(
        cfg.nuclei(),
        cfg.grid(),
        opts,
        exp.get("gamma_tilde", 0.5),
        exp.get("flavor", "E1"),
        cfg.seed,
    )
    return {"checks": {"invariance": report.passed}, "invariance": report.as_dict()}


def run_linearise(cfg: RunConfig, opts: SolverOptions, writer: RunWriter) -> Dict:
    exp, grid, config = cfg.experiment(), cfg.grid(), cfg.nuclei()
    k, V = exp.get("k", 0), exp.get("V", [1.0, 0.0, 0.0])

    m = assemble_density(config, grid)
    state = solve_ground_state(m, opts)
    m_dot = density_derivative(config, grid, k, V)
    lin = LinearisedSolver(state, exp.get("lin_tol", 1e-10)).solve(m_dot)

    writer.field("u_dot.tfwf", lin.u_dot)
    writer.field("phi_dot.tfwf", lin.phi_dot)
    writer.field("m_dot.tfwf", lin.m_dot)

    charge_gap = abs((2 * state.u * lin.u_dot).integrate() - m_dot.integrate())
    form = operator_form(state, lin.u_dot)
    norm2 = (lin.u_dot * lin.u_dot).integrate()
    data = {
        **lin.as_dict(),
        "charge_response_gap": charge_gap,
        "operator_form": form,
    }
    if config.background > 0:
        data["screening_constants"] = screening_constants(
            config.background, exp.get("C_W", 1.0)
        ).as_dict()
    writer.json("linearised.json", data)

    checks = {"charge_response": charge_gap <= 1e-8, "operator_form": form >= -1e-8 * norm2}
    if "h_list" in exp:
        table = fd_consistency(
            lambda h: assemble_density(perturb(config, k, V, h), grid),
            state,
            lin,
            exp["h_list"],
            opts,
        )
        writer.csv(
            "fd_consistency.csv",
            ["h", "error", "ratio"],
            [[row.h, row.error, "" if row.ratio is None else row.ratio] for row in table],
        )
        ratios = [row.ratio for row in table if row.ratio is not None]
        checks["fd_ratios"] = all(0.35 <= q <= 0.65 for q in ratios)

    return {"checks": checks}


COMMANDS: Dict[str, Command] = {
    "solve": run_solve,
    "locality": run_locality,
    "screening": run_screening,
    "tdl": run_tdl,
    "neutrality": run_neutrality,
    "site-energies": run_site_energies,
    "forces": run_forces,
    "invariance": run_invariance,
    "linearise": run_linearise,
}

HELP = {
    "solve": "solve for the ground state of a configuration",
    "locality": "decay of the response to a local perturbation",
    "screening": "screening of an impurity in jellium",
    "tdl": "convergence of truncated clusters",
    "neutrality": "ball integrals of the induced charge",
    "site-energies": "site energies from both energy densities",
    "forces": "site forces by linear response and finite differences",
    "invariance": "site energies under relabelling and symmetries",
    "linearise": "linearised response to moving one nucleus",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-q",
        "--quiet",
        dest="quiet",
        action="store_true",
        default=False,
        help="suppress all normal output",
    )
    common.add_argument(
        "-v", "--verbose", dest="verbose", action="store_true", default=False, help="debug output"
    )

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument(
        "-c",
        "--config",
        dest="config",
        metavar="/path/to/config.json",
        required=True,
        help="run configuration file",
    )
    run.add_argument("-o", "--output", dest="output", default=None, help="output root")
    run.add_argument(
        "-t", "--threads", dest="threads", type=int, default=None, help="FFT worker threads"
    )
    run.add_argument(
        "-l",
        "--log",
        dest="log_steps",
        default=None,
        type=int,
        help="number of iterations before logging",
    )
    run.add_argument("--seed", dest="seed", type=int, default=None, help="random seed")

    parser = argparse.ArgumentParser("tfwlab", description="TFW supercell laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common, run], help=HELP[name])

    check = sub.add_parser("validate-config", parents=[common], help="validate a configuration")
    check.add_argument("config", metavar="/path/to/config.json", help="run configuration file")
    return parser


def _configure_logging(quiet: bool, verbose: bool) -> None:
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", force=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one subcommand. Returns 0 on success, 2 when a threshold fails, 1 on error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if e.code:
            print(SCHEMA_HELP, file=sys.stderr)
            return 1
        return 0

    _configure_logging(args.quiet, args.verbose)

    try:
        if args.command == "validate-config":
            RunConfig.from_file(args.config)
            print(f"Configuration '{args.config}' is valid.")
            return 0

        cfg = RunConfig.from_file(args.config, args.command)
        if args.seed is not None:
            cfg.data["seed"] = args.seed
        opts = cfg.solver_options(args.log_steps)

        threads = args.threads or cfg.threads or os.cpu_count() or 1
        root = generate_filepath(args.command, output_root(args.output or cfg.output))
        writer = RunWriter(root)

        logger.info("%s - %s - %s", args.command, cfg.grid(), cfg.nuclei())
        with sfft.set_workers(threads):
            summary = COMMANDS[args.command](cfg, opts, writer)

        passed = all(summary.get("checks", {}).values())
        writer.report({"command": args.command, "config": cfg.data, **summary, "passed": passed})
    except (TFWError, OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1

    if not passed:
        logger.warning("Thresholds failed, see %s.", root / "report.json")
        return 2

    logger.info("Results written to %s.", root)
    return 0


def pre() -> None:
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("Program terminated by user.")
