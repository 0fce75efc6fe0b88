"""Command-line entry point.

Every subcommand writes a CSV table to ``--out`` (or stdout) and logs to
stderr. A ``--config`` file holds flat ``key=value`` lines using the long
flag names of the subcommand; flags given on the command line win.
"""

import argparse
import asyncio
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from calmreg import __version__
from calmreg.calming import (CalmedProblem, bias_and_risk_bounds, calming_constants, effective_dimension,
                             fit_profile, info_pack)
from calmreg.config import ExperimentKind, NoiseKind, get_config
from calmreg.exceptions import ConfigError, DomainError, NumericalError, RangeError, ValidationError
from calmreg.experiments.mc_harness import SETUP_TAG, MonteCarloHarness, stream
from calmreg.experiments.reporting import ExperimentConfig, Report, write_csv
from calmreg.logging_utils import configure_logging, get_logger
from calmreg.model import (FIXTURES, ExpDecayModel, LinearModel, SineModel, Smoother, build_fixture,
                           load_data_csv, smoothed_map)
from calmreg.penalty import PenaltyPath, risk_curve, select_w_balance, select_w_risk
from calmreg.qform_bounds import (SpectrumStats, mu_of_x, normalize_stats, solve_xc, z_quantile,
                                  zc_quantile)
from calmreg.tilted_moments import ScalarLaw, tau34

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4

TAIL_KINDS = {
    "upper": ExperimentKind.TAIL_UPPER,
    "lower": ExperimentKind.TAIL_LOWER,
    "exp": ExperimentKind.TAIL_EXP_REGIME,
}
LAWS = {
    "gaussian": ScalarLaw.gaussian,
    "rademacher": ScalarLaw.rademacher,
    "uniform": ScalarLaw.centered_uniform,
}

logger = get_logger(__name__)


class CliConfig(BaseModel):
    """Resolved invocation: subcommand, its options, output path and seed."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    subcommand: str
    options: Dict[str, object] = Field(default_factory=dict)
    out: Optional[Path] = None
    seed: int = Field(0, ge=0)
    quick: bool = False


def float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _global_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    parent.add_argument("--out", type=Path, default=None, help="output CSV path (default stdout)")
    parent.add_argument("--config", type=Path, default=None, help="key=value file with default flag values")
    parent.add_argument("--quick", action="store_true", help="reduced replication counts")
    parent.add_argument("--log-level", default="WARNING", help="stderr log level (default WARNING)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = argparse.ArgumentParser(prog="calmreg", description="Calmed penalized regression toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    bounds = sub.add_parser("bounds", parents=[parent], help="deviation quantile table")
    bounds.add_argument("--dim-a", type=float, required=True, help="tr B")
    bounds.add_argument("--v2", type=float, required=True, help="tr B²")
    bounds.add_argument("--bnorm", type=float, required=True, help="‖B‖")
    bounds.add_argument("--g", type=float, default=None, help="exponential-moment range; enables z_c columns")
    bounds.add_argument("--x", type=float_list, required=True, help="comma-separated deviation levels")

    tau = sub.add_parser("tau", parents=[parent], help="tilted moment constants of a scalar law")
    tau.add_argument("--law", choices=sorted(LAWS), default="rademacher", help="noise law")
    tau.add_argument("--variance", type=float, default=1.0, help="law variance (default 1)")
    tau.add_argument("--g", type=float_list, required=True, help="comma-separated tilt ranges")

    penalty = sub.add_parser("penalty", parents=[parent], help="penalty path and selected weights")
    penalty.add_argument("--gram", type=float_list, required=True, help="diagonal of AᵀA")
    penalty.add_argument("--g0", type=float_list, default=None, help="diagonal of G₀² (default ones)")
    penalty.add_argument("--sigma2", type=float, default=1.0, help="noise variance (default 1)")
    penalty.add_argument("--c0", type=float, default=1.0, help="balance constant (default 1)")
    penalty.add_argument("--w-min", type=float, default=1e-3, help="smallest tabulated w")
    penalty.add_argument("--w-max", type=float, default=1e3, help="largest tabulated w")
    penalty.add_argument("--points", type=int, default=61, help="tabulated weights, log-spaced")

    tails = sub.add_parser("simulate-tails", parents=[parent], help="Monte Carlo tail coverage")
    tails.add_argument("--kind", choices=sorted(TAIL_KINDS), default="upper", help="tail experiment")
    tails.add_argument("--dim", type=int, default=20, help="dimension of B = I")
    tails.add_argument("--x", type=float_list, default=[0.5, 1.0, 2.0, 3.0], help="deviation levels")
    tails.add_argument("--replications", type=int, default=200_000, help="Monte Carlo draws")
    tails.add_argument("--noise", choices=[k.value for k in NoiseKind], default=None,
                       help="noise law (default gaussian; rademacher_scaled for --kind exp)")
    tails.add_argument("--g", type=float, default=None, help="exponential-moment range for --kind exp")

    fit = sub.add_parser("fit", parents=[parent], help="calmed profile fit of one dataset")
    fit.add_argument("--data", type=Path, required=True, help="CSV with columns y and x")
    fit.add_argument("--fixture", choices=FIXTURES[:3], required=True, help="regression family")
    fit.add_argument("--p", type=int, default=2, help="parameter dimension of the linear fixture")
    fit.add_argument("--theta0", type=float_list, default=None, help="initial guess")
    fit.add_argument("--sigma", type=float, default=1.0, help="noise level for p_GG")
    fit.add_argument("--penalty", type=float, default=0.0, help="penalty weight w with 𝔾² = w·I")
    fit.add_argument("--penalty-select", choices=["risk", "balance"], default=None,
                     help="choose w from the linearized design instead of --penalty")
    fit.add_argument("--c0", type=float, default=1.0, help="balance constant for --penalty-select balance")

    sub.add_parser("verify", parents=[parent], help="run the acceptance suite")
    return parser


def _option_strings(subparser: argparse.ArgumentParser) -> Dict[str, argparse.Action]:
    actions = {}
    for action in subparser._actions:
        for option in action.option_strings:
            if option.startswith("--"):
                actions[option[2:].replace("-", "_")] = action
    return actions


def read_config_file(path: Path, subparser: argparse.ArgumentParser) -> List[str]:
    """Translate a key=value file into argv tokens for ``subparser``.

    Raises:
        ConfigError: unreadable file, malformed line or unknown key.
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    known = _option_strings(subparser)
    tokens: List[str] = []
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}")
        if key in ("config", "help") or key not in known:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        flag = "--" + key.replace("_", "-")
        value = value.strip()
        if isinstance(known[key], argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes"):
                tokens.append(flag)
            elif value.lower() not in ("0", "false", "no"):
                raise ConfigError(f"{path}:{number}: {key} expects true or false")
        else:
            tokens.extend([flag, value])
    return tokens


def _config_path(argv: Sequence[str]) -> Optional[Path]:
    for index, token in enumerate(argv):
        if token == "--config" and index + 1 < len(argv):
            return Path(argv[index + 1])
        if token.startswith("--config="):
            return Path(token.split("=", 1)[1])
    return None


def resolve(argv: Sequence[str]) -> CliConfig:
    """Parse ``argv`` with config-file defaults.

    File values are spliced in right after the subcommand, so required flags
    may come from the file and later command-line flags override them.
    """
    parser = build_parser()
    argv = list(argv)
    path = _config_path(argv)
    commands = parser._subparsers._group_actions[0].choices
    if path is not None and argv and argv[0] in commands:
        argv = [argv[0], *read_config_file(path, commands[argv[0]]), *argv[1:]]
    args = parser.parse_args(argv)
    options = {k: v for k, v in vars(args).items()
               if k not in ("subcommand", "seed", "out", "config", "quick", "log_level")}
    configure_logging(args.log_level)
    try:
        return CliConfig(subcommand=args.subcommand, options=options, out=args.out, seed=args.seed,
                         quick=args.quick)
    except PydanticValidationError as exc:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in exc.errors())
        raise ValidationError(problems, check="cli config") from exc


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8", newline="")


def _emit_report(report: Report, out: Optional[Path]) -> None:
    if out is None:
        _emit(report.to_csv(), None)
    else:
        report.write(out)


def cmd_bounds(cfg: CliConfig) -> str:
    """Quantile table with columns x, z_sq, z, mu_x, branch, z_c, x_c, g_c."""
    opts = cfg.options
    stats = SpectrumStats(opts["dim_a"], opts["v2"], opts["bnorm"])
    grid = opts["x"]
    if not grid or any(x < 0 or not math.isfinite(x) for x in grid):
        raise ValidationError("x grid must hold finite nonnegative levels", check="x")
    sol = None
    if opts.get("g") is not None:
        normalized, scale = normalize_stats(stats)
        sol = solve_xc(opts["g"], normalized)
    rows = []
    for x in grid:
        q = z_quantile(stats, x)
        mu = mu_of_x(stats, x) if x > 0 else None
        if sol is None:
            rows.append([x, q.z_sq, q.z, mu, "gaussian", None, None, None])
            continue
        branch = "gaussian" if x <= sol.x_c else "exp"
        z_c = math.sqrt(scale) * zc_quantile(sol, normalized, x) if x > 0 else math.sqrt(stats.dim_a)
        rows.append([x, q.z_sq, q.z, mu, branch, z_c, sol.x_c, sol.g_c])
    return write_csv(["x", "z_sq", "z", "mu_x", "branch", "z_c", "x_c", "g_c"], rows)


def cmd_tau(cfg: CliConfig) -> str:
    law = LAWS[cfg.options["law"]](cfg.options["variance"])
    rows = []
    for g in cfg.options["g"]:
        summary = tau34(law, g)
        rows.append([g, summary.tau3, summary.tau4, summary.subg_const])
    return write_csv(["g", "tau3", "tau4", "subg_const"], rows)


def cmd_penalty(cfg: CliConfig) -> str:
    """Risk curve ``(w, p_w, p_w + w)`` followed by the risk and balance selections."""
    opts = cfg.options
    gram = np.diag(opts["gram"])
    g0 = np.diag(opts["g0"]) if opts.get("g0") else np.eye(gram.shape[0])
    if not 0 < opts["w_min"] < opts["w_max"] or opts["points"] < 2:
        raise ValidationError("need 0 < w-min < w-max and at least two points", check="w grid")
    grid = np.logspace(math.log10(opts["w_min"]), math.log10(opts["w_max"]), opts["points"])
    path = PenaltyPath.from_gram(gram, g0, opts["sigma2"], grid)
    rows = [["curve", pt.w, pt.p_w, pt.risk] for pt in risk_curve(path)]
    chosen = select_w_risk(path)
    rows.append(["risk_optimal" + ("_fallback" if chosen.fallback else ""), chosen.w_star,
                 chosen.risk - chosen.w_star, chosen.risk])
    w_bal = select_w_balance(path, opts["c0"])
    p_bal = risk_curve(path, [w_bal])[0]
    rows.append(["balance", p_bal.w, p_bal.p_w, p_bal.risk])
    return write_csv(["kind", "w", "p_w", "risk"], rows)


def cmd_simulate_tails(cfg: CliConfig) -> Report:
    opts = cfg.options
    kind = TAIL_KINDS[opts["kind"]]
    noise = opts.get("noise") or ("rademacher_scaled" if kind is ExperimentKind.TAIL_EXP_REGIME else "gaussian")
    replications = opts["replications"] // 10 if cfg.quick else opts["replications"]
    try:
        experiment = ExperimentConfig(experiment=kind, seed=cfg.seed, replications=replications,
                                      noise=NoiseKind(noise), dim=opts["dim"], x_grid=opts["x"], g=opts.get("g"))
    except ValueError as exc:
        raise ValidationError(str(exc), check="experiment config") from exc
    return asyncio.run(MonteCarloHarness().run_tail_experiment(experiment))


def _fit_model(cfg: CliConfig):
    opts = cfg.options
    y, x = load_data_csv(opts["data"])
    name = opts["fixture"]
    if name == "linear":
        model, theta_default = build_fixture("linear", n=y.size, p=opts["p"], seed=cfg.seed)
    elif name == "exp_decay":
        model, theta_default = ExpDecayModel(x), np.array([1.0, 1.0])
    else:
        model, theta_default = SineModel(x), np.array([2.0, 1.0])
    theta0 = np.asarray(opts["theta0"], dtype=float) if opts.get("theta0") else theta_default
    if theta0.shape != (model.p,):
        raise ValidationError(f"theta0 has {theta0.size} entries, model has p={model.p}", check="theta0")
    return model, y, theta0


def cmd_fit(cfg: CliConfig) -> str:
    """Profile fit with columns theta_*, iterations, grad_norm, converged, w, p_GG, risk_prediction."""
    opts = cfg.options
    model, y, theta0 = _fit_model(cfg)
    smoother = Smoother.identity(model.n)
    w = opts["penalty"]
    if opts.get("penalty_select"):
        _, grad = smoothed_map(model, smoother, theta0)
        path = PenaltyPath(grad.T, np.eye(model.p), opts["sigma"] ** 2)
        w = select_w_risk(path).w_star if opts["penalty_select"] == "risk" else select_w_balance(path, opts["c0"])
        logger.info("penalty_selected", rule=opts["penalty_select"], w=w)
    if w < 0:
        raise ValidationError(f"penalty must be nonnegative, got {w}", check="penalty")
    # 𝔾² = 2G² in the profile objective
    prob = CalmedProblem.from_observations(model, smoother, 0.5 * w * np.eye(model.p), y)
    fit = fit_profile(prob, theta0)
    if not fit.converged:
        raise NumericalError(f"profile fit did not converge (gradient {fit.grad_norm:.3e})")
    V_sq = opts["sigma"] ** 2 * np.eye(model.n)
    info = info_pack(prob, fit.theta)
    dims = effective_dimension(prob, fit.theta, V_sq, info=info)
    consts = calming_constants(prob, fit.theta, V_sq, rng=stream(cfg.seed, SETUP_TAG, 3))
    risk = bias_and_risk_bounds(prob, fit.theta, consts, dims, info)
    columns = [f"theta_{i}" for i in range(model.p)] + ["iterations", "grad_norm", "converged", "w",
                                                        "p_GG", "risk_prediction"]
    row = list(fit.theta) + [fit.iterations, fit.grad_norm, fit.converged, float(w), dims.p_GG,
                             risk.risk_prediction]
    return write_csv(columns, [row])


def cmd_verify(cfg: CliConfig) -> int:
    """Run the acceptance suite; exit 0 iff every criterion passes."""
    result = asyncio.run(MonteCarloHarness().run_acceptance_suite(cfg.seed, cfg.quick))
    _emit_report(result.summary, cfg.out)
    if cfg.out is not None:
        for name, report in result.details.items():
            report.write(cfg.out.parent / f"{cfg.out.stem}_{name}.csv")
    if not result.passed:
        for failure in result.summary.failures:
            sys.stderr.write(f"FAILED {failure}\n")
        return EXIT_ACCEPTANCE
    return EXIT_OK


def dispatch(cfg: CliConfig) -> int:
    if cfg.subcommand == "verify":
        return cmd_verify(cfg)
    if cfg.subcommand == "simulate-tails":
        _emit_report(cmd_simulate_tails(cfg), cfg.out)
        return EXIT_OK
    handlers = {"bounds": cmd_bounds, "tau": cmd_tau, "penalty": cmd_penalty, "fit": cmd_fit}
    _emit(handlers[cfg.subcommand](cfg), cfg.out)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        cfg = resolve(argv)
        get_config()
        return dispatch(cfg)
    except (ValidationError, DomainError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (NumericalError, RangeError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


__all__ = [
    "CliConfig",
    "build_parser",
    "read_config_file",
    "resolve",
    "cmd_bounds",
    "cmd_tau",
    "cmd_penalty",
    "cmd_simulate_tails",
    "cmd_fit",
    "cmd_verify",
    "dispatch",
    "main",
]
