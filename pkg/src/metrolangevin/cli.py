"""Command line entry point.

    metrolangevin run --study green-kubo --proposal hmc --rule barker --dt-list 0.02,0.01
    metrolangevin run --config experiment.json --seed 7
    metrolangevin reference --model cosine --diffusion cosine-squared
    metrolangevin validate-config experiment.json
    metrolangevin trajectory --proposal mala --dt 0.01 --n-steps 1000 --output traj.csv

Exit status: 0 on success, 2 on an invalid configuration, 3 when the
numerics fail (midpoint solver divergence, degenerate modified scale,
unconverged quadrature).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from ._io import write_csv, write_json
from .accept import AcceptanceRule, bias_profile
from .chain import RecordPolicy, run_trajectory, write_accumulators_json, write_trajectory_csv
from .estimators import (
    InsufficientSignal,
    StrongErrorConfig,
    asymptotic_variance_error,
    bias_order_fit,
    einstein_diffusion,
    green_kubo_diffusion,
    rejection_scaling_study,
    strong_error_study,
)
from .model import DiffusionCoeff1D, Model1D
from .parallel import default_workers
from .proposal import DEFAULT_MAX_ITER, DEFAULT_TOL, Proposal, SchemeError
from .reference import (
    DEFAULT_ETA,
    GeneratorObservable,
    QuadratureGrid,
    QuadratureNotConverged,
    analytic_diffusion_1d,
    lifson_jackson_oracle,
    weak_expansion_residual,
)
from .rng import SEED_MASK, RngStream
from .stats import loglog_fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

STUDIES = ("strong-error", "rejection-scaling", "green-kubo", "einstein", "weak-expansion",
           "reference", "variance-ratio")

DEFAULT_DT_REF = 1e-5

# desk-scale realization counts
DEFAULT_REALIZATIONS = {
    "strong-error": 10_000,
    "green-kubo": 1_000_000,
    "einstein": 100_000,
    "variance-ratio": 200,
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    study: str | None = None
    model: str = "cosine"
    space: str | None = None
    diffusion: str = "unit"
    proposal: str = "mala"
    rule: str = "metropolis"
    beta: float = 1.0
    dt_list: list | None = None
    realizations: int | None = None
    horizon: float = 0.1
    dt_ref: float | None = None
    tau: float | None = None
    n_steps: int | None = None
    fit_window: list = field(default_factory=lambda: [0.1, 1.0])
    gh_points: int = 64
    observable: str | None = None
    eta: float = DEFAULT_ETA
    n_points: int = 4096
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0
    workers: int | None = None
    output_dir: str = "results"

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration field")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- validation ---------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        if self.study is None:
            raise ConfigError("study", f"missing; choose one of {', '.join(STUDIES)}")
        if self.study not in STUDIES:
            raise ConfigError("study", f"unknown study {self.study!r}")
        try:
            self.model_obj()
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None
        try:
            DiffusionCoeff1D.named(self.diffusion)
        except ValueError:
            raise ConfigError("diffusion", f"unknown diffusion {self.diffusion!r}") from None
        try:
            AcceptanceRule(self.rule)
        except ValueError:
            raise ConfigError("rule", f"unknown rule {self.rule!r}") from None
        try:
            self.proposal_obj()
        except ValueError as exc:
            raise ConfigError("proposal", str(exc)) from None
        if not isinstance(self.seed, int) or not 0 <= self.seed <= SEED_MASK:
            raise ConfigError("seed", "must be an integer in [0, 2^64)")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers", "must be a positive integer")
        if self.study == "reference":
            if self.n_points < 16 or self.n_points & (self.n_points - 1):
                raise ConfigError("n_points", "must be a power of two >= 16")
            if not self.eta > 0:
                raise ConfigError("eta", "must be positive")
            if not self.model_obj().periodic:
                raise ConfigError("model", "reference values need a periodic model")
            return self
        self._validate_dt_list()
        if self.realizations is not None and (not isinstance(self.realizations, int) or self.realizations < 1):
            raise ConfigError("realizations", "must be a positive integer")
        getattr(self, "_validate_" + self.study.replace("-", "_"), lambda: None)()
        return self

    def _validate_dt_list(self):
        if self.dt_list is None:
            raise ConfigError("dt_list", f"required for study {self.study!r}")
        if not isinstance(self.dt_list, (list, tuple)) or not self.dt_list:
            raise ConfigError("dt_list", "must be a non-empty list of positive numbers")
        try:
            dts = [float(x) for x in self.dt_list]
        except (TypeError, ValueError):
            raise ConfigError("dt_list", "must contain numbers") from None
        if any(not (d > 0 and math.isfinite(d)) for d in dts):
            raise ConfigError("dt_list", "entries must be positive and finite")
        if any(b >= a for a, b in zip(dts, dts[1:])):
            raise ConfigError("dt_list", "must be strictly decreasing")
        self.dt_list = dts

    def _validate_strong_error(self):
        if self.dt_ref is None:
            self.dt_ref = DEFAULT_DT_REF
        if not self.dt_ref > 0:
            raise ConfigError("dt_ref", "must be positive")
        for d in self.dt_list:
            k = d / self.dt_ref
            if abs(k - round(k)) > 1e-9 * k or round(k) < 1:
                raise ConfigError("dt_list", f"{d} is not an integer multiple of dt_ref={self.dt_ref}")
        if not self.horizon > 0:
            raise ConfigError("horizon", "must be positive")
        n = self.horizon / self.dt_ref
        if abs(n - round(n)) > 1e-9 * n:
            raise ConfigError("horizon", "must be an integer multiple of dt_ref")
        if round(n) < round(self.dt_list[0] / self.dt_ref):
            raise ConfigError("horizon", "shorter than the largest coarse timestep")

    def _validate_rejection_scaling(self):
        if self.n_steps is not None and (not isinstance(self.n_steps, int) or self.n_steps < 100):
            raise ConfigError("n_steps", "must be an integer >= 100")

    def _validate_green_kubo(self):
        tau = self.tau_value()
        if not tau > 0:
            raise ConfigError("tau", "must be positive")
        for d in self.dt_list:
            r = tau / d
            if abs(r - round(r)) > 1e-9 * max(r, 1.0) or round(r) < 1:
                raise ConfigError("tau", f"tau/dt = {r} is not a positive integer for dt={d}")

    def _validate_einstein(self):
        if self.n_steps is not None and (not isinstance(self.n_steps, int) or self.n_steps < 100):
            raise ConfigError("n_steps", "must be an integer >= 100")
        fw = self.fit_window
        if (not isinstance(fw, (list, tuple)) or len(fw) != 2
                or not 0.0 <= float(fw[0]) < float(fw[1]) <= 1.0):
            raise ConfigError("fit_window", "must be [lo, hi] with 0 <= lo < hi <= 1")

    def _validate_weak_expansion(self):
        if self.gh_points < 32:
            raise ConfigError("gh_points", "must be >= 32")
        if self.proposal_obj().multiplicative:
            raise ConfigError("proposal", "weak expansion needs an additive-noise proposal")
        try:
            GeneratorObservable.named(self.observable or "sin")
        except ValueError:
            raise ConfigError("observable", f"unknown observable {self.observable!r}") from None

    def _validate_variance_ratio(self):
        if (self.observable or "force") not in ("force", "drift", "zero"):
            raise ConfigError("observable", "must be force, drift or zero")
        if self.n_steps is not None and (not isinstance(self.n_steps, int) or self.n_steps < 800):
            raise ConfigError("n_steps", "must be an integer >= 800")

    # -- derived objects ----------------------------------------------------

    def model_obj(self) -> Model1D:
        return Model1D.named(self.model, self.beta, self.space)

    def proposal_obj(self) -> Proposal:
        diff = self.diffusion if self.proposal == "mala-mult" else "unit"
        return Proposal.named(self.proposal, diff, tol=self.tol, max_iter=self.max_iter)

    def rule_obj(self) -> AcceptanceRule:
        return AcceptanceRule(self.rule)

    def tau_value(self) -> float:
        if self.tau is not None:
            return float(self.tau)
        return 2.0 if self.proposal == "mala-mult" else 0.6

    def realizations_value(self) -> int:
        return self.realizations or DEFAULT_REALIZATIONS.get(self.study, 1)


# ---------------------------------------------------------------------------
# studies


def _reference_payload(cfg: ExperimentConfig) -> dict:
    model = cfg.model_obj()
    M = DiffusionCoeff1D.named(cfg.diffusion)
    grid = QuadratureGrid(cfg.n_points)
    d_lr = analytic_diffusion_1d(model, M, grid, cfg.eta)
    d_lj = lifson_jackson_oracle(model, grid) if M.kind.value == "unit" else None
    return {
        "model": cfg.model,
        "M": cfg.diffusion,
        "beta": cfg.beta,
        "D_linear_response": d_lr,
        "D_lifson_jackson": d_lj,
        "eta": cfg.eta,
        "n_points": cfg.n_points,
    }


def _reference_value(cfg: ExperimentConfig) -> float | None:
    model = cfg.model_obj()
    if not model.periodic:
        return None
    M = DiffusionCoeff1D.named(cfg.diffusion if cfg.proposal == "mala-mult" else "unit")
    return analytic_diffusion_1d(model, M)


def _run_study(cfg: ExperimentConfig) -> tuple[list, dict]:
    """Rows (dt, estimate, std_error[, series]) and summary fields."""
    model = cfg.model_obj()
    prop = cfg.proposal_obj()
    rule = cfg.rule_obj()
    workers = cfg.workers
    K = cfg.realizations_value()
    summary: dict = {}

    if cfg.study == "strong-error":
        ks = tuple(int(round(d / cfg.dt_ref)) for d in cfg.dt_list)
        sc = StrongErrorConfig(cfg.dt_ref, ks, cfg.horizon, K, model, prop, rule)
        res = strong_error_study(sc, cfg.seed, workers)
        summary.update(fit_slope=res.fit_slope, fit_intercept=res.fit_intercept, k_values=list(ks),
                       realizations=K, compared_steps=res.extra["compared_steps"])
        return [(d, e, s) for d, e, s in zip(res.dt_values, res.estimates, res.std_errors)], summary

    if cfg.study == "rejection-scaling":
        n = cfg.n_steps or 10_000_000
        out = rejection_scaling_study(prop, rule, model, cfg.dt_list, n, cfg.seed, workers=workers)
        rows = [(d, e, s, r.series) for r in out for d, e, s in zip(r.dt_values, r.estimates, r.std_errors)]
        summary["series"] = {r.series: {"fit_slope": r.fit_slope, "fit_intercept": r.fit_intercept}
                             for r in out}
        summary["n_steps"] = n
        return rows, summary

    if cfg.study in ("green-kubo", "einstein"):
        M = prop.diffusion
        ests = []
        for dt in cfg.dt_list:
            if cfg.study == "green-kubo":
                ests.append(green_kubo_diffusion(prop, rule, model, dt, cfg.tau_value(), K, cfg.seed, M,
                                                 workers=workers))
            else:
                n = cfg.n_steps or max(100, int(round(2.0 / dt)))
                ests.append(einstein_diffusion(prop, rule, model, dt, n, K, cfg.seed, M,
                                               fit_window=tuple(cfg.fit_window), workers=workers))
        d_ref = _reference_value(cfg)
        summary.update(realizations=K, D_reference=d_ref, a=bias_profile(prop.kind, rule).a,
                       expected_bias_order=bias_profile(prop.kind, rule).alpha_bias)
        if cfg.study == "green-kubo":
            summary["tau"] = cfg.tau_value()
        if d_ref is not None and len(ests) >= 3:
            try:
                slope, icpt = bias_order_fit(ests, d_ref)
                summary.update(fit_slope=slope, fit_intercept=icpt)
            except InsufficientSignal as exc:
                summary.update(fit_slope=None, fit_intercept=None, fit_note=str(exc))
        return [(e.dt, e.value, e.std_error) for e in ests], summary

    if cfg.study == "weak-expansion":
        psi = GeneratorObservable.named(cfg.observable or "sin")
        res = [weak_expansion_residual(prop, rule, model, psi, dt, cfg.gh_points) for dt in cfg.dt_list]
        slope, icpt = loglog_fit(cfg.dt_list, res) if len(res) > 1 else (None, None)
        summary.update(fit_slope=slope, fit_intercept=icpt, observable=psi.kind.value,
                       gh_points=cfg.gh_points)
        return [(d, r, 0.0) for d, r in zip(cfg.dt_list, res)], summary

    if cfg.study == "variance-ratio":
        rows = []
        for dt in cfg.dt_list:
            ratio, se = asymptotic_variance_error(model, dt, cfg.observable or "force", K, cfg.seed, prop,
                                                  n_steps=cfg.n_steps or 20_000, workers=workers)
            rows.append((dt, ratio, se))
        summary.update(realizations=K, observable=cfg.observable or "force")
        return rows, summary

    raise ConfigError("study", f"unknown study {cfg.study!r}")


def run(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = Path(cfg.output_dir)
    t0 = time.perf_counter()
    try:
        if cfg.study == "reference":
            payload = _reference_payload(cfg)
            print(json.dumps(payload), file=out)
            rows, summary = [], {"reference": payload}
        else:
            rows, summary = _run_study(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemeError, QuadratureNotConverged, ArithmeticError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    wall = time.perf_counter() - t0
    header = ["dt", "estimate", "std_error"]
    if rows and len(rows[0]) == 4:
        header.append("series")
    if cfg.study != "reference":
        write_csv(outdir / f"{cfg.study}.csv", header, rows)
    doc = {"study": cfg.study, "seed": cfg.seed, "config": cfg.to_dict(), **summary,
           "wall_time_s": wall, "version": __version__}
    write_json(outdir / f"{cfg.study}.summary.json", doc)
    if cfg.study != "reference":
        print(json.dumps({k: v for k, v in doc.items() if k != "config"}), file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="flat JSON file; flags override its values")
    p.add_argument("--study", choices=STUDIES, default=S)
    p.add_argument("--model", default=S, help="quartic, cosine, zero or harmonic")
    p.add_argument("--space", default=S, help="torus or line (default depends on the model)")
    p.add_argument("--diffusion", default=S, help="unit or cosine-squared")
    p.add_argument("--proposal", default=S, help="mala, modified, midpoint, hmc or mala-mult")
    p.add_argument("--rule", default=S, help="metropolis or barker")
    p.add_argument("--beta", type=float, default=S)
    p.add_argument("--dt-list", dest="dt_list", type=_float_list, default=S,
                   help="comma-separated, strictly decreasing")
    p.add_argument("--realizations", "-K", type=int, default=S)
    p.add_argument("--horizon", type=float, default=S, help="strong-error horizon T")
    p.add_argument("--dt-ref", dest="dt_ref", type=float, default=S)
    p.add_argument("--tau", type=float, default=S, help="Green-Kubo truncation time")
    p.add_argument("--n-steps", dest="n_steps", type=int, default=S)
    p.add_argument("--fit-window", dest="fit_window", type=_float_list, default=S)
    p.add_argument("--gh-points", dest="gh_points", type=int, default=S)
    p.add_argument("--observable", default=S)
    p.add_argument("--eta", type=float, default=S)
    p.add_argument("--n-points", dest="n_points", type=int, default=S)
    p.add_argument("--tol", type=float, default=S, help="midpoint fixed-point tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--workers", type=int, default=S, help="default: $LANGEVIN_WORKERS or 1")
    p.add_argument("--output-dir", dest="output_dir", default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metrolangevin",
                                     description="Metropolized overdamped Langevin experiments")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_flags(sub.add_parser("run", help="run a study and write CSV/JSON artifacts"))

    ref = sub.add_parser("reference", help="print reference diffusion constants as JSON")
    ref.add_argument("--model", default="cosine")
    ref.add_argument("--diffusion", default="unit")
    ref.add_argument("--beta", type=float, default=1.0)
    ref.add_argument("--eta", type=float, default=DEFAULT_ETA)
    ref.add_argument("--n-points", dest="n_points", type=int, default=4096)

    val = sub.add_parser("validate-config", help="check a config file and print it normalized")
    val.add_argument("path", nargs="?")
    _add_config_flags(val)

    tr = sub.add_parser("trajectory", help="dump one chain as CSV (step,q,Q) plus accumulator JSON")
    tr.add_argument("--model", default="cosine")
    tr.add_argument("--diffusion", default="unit")
    tr.add_argument("--proposal", default="mala")
    tr.add_argument("--rule", default="metropolis")
    tr.add_argument("--beta", type=float, default=1.0)
    tr.add_argument("--dt", type=float, required=True)
    tr.add_argument("--n-steps", dest="n_steps", type=int, required=True)
    tr.add_argument("--every", type=int, default=1, help="record every m-th state")
    tr.add_argument("--q0", type=float, default=0.0)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--stream", type=int, default=0)
    tr.add_argument("--output", required=True, help="CSV path; accumulators go to <output>.json")
    return parser


def _load_config(args: argparse.Namespace, path: str | None) -> ExperimentConfig:
    data: dict = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "path")}
    data.update(flags)
    if "workers" not in data:
        try:
            data["workers"] = default_workers()
        except ValueError as exc:
            raise ConfigError("workers", str(exc)) from None
    try:
        return ExperimentConfig.from_mapping(data)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "reference":
        cfg = ExperimentConfig(study="reference", model=args.model, diffusion=args.diffusion,
                               beta=args.beta, eta=args.eta, n_points=args.n_points)
        try:
            cfg.validate()
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            print(json.dumps(_reference_payload(cfg)))
        except QuadratureNotConverged as exc:
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK

    if args.command == "trajectory":
        try:
            model = Model1D.named(args.model, args.beta)
            prop = Proposal.named(args.proposal, args.diffusion if args.proposal == "mala-mult" else "unit")
            rule = AcceptanceRule(args.rule)
            rng = RngStream(args.seed, args.stream)
            policy = RecordPolicy.every(args.every)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            state, traj = run_trajectory(prop, rule, model, args.dt, args.n_steps, rng, policy, args.q0)
        except SchemeError as exc:
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        write_trajectory_csv(args.output, traj)
        write_accumulators_json(str(args.output) + ".json", state)
        return EXIT_OK

    try:
        cfg = _load_config(args, getattr(args, "path", None) or args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate-config":
        try:
            cfg.validate()
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(cfg.to_dict(), indent=2))
        return EXIT_OK

    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
