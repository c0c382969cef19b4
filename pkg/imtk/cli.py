"""imtk command line: one subcommand per check or construction stage."""

import argparse
import logging
import sys
from typing import Optional, Sequence

from imtk import commands
from imtk.commands.common import PASSING, output_dir
from imtk.config import Settings
from imtk.errors import ImtkError
from imtk.reports import RunManifest, dumps, write_json

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 stays reserved for failed checks."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(with_system: bool = True) -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    parent.add_argument("--out", default=None, help="Output directory (IMTK_OUT overrides)")
    parent.add_argument("--seed", type=int, default=Settings.SEED, help="Random seed")
    if with_system:
        parent.add_argument("--system", required=True, help="System config path or fixture name")
        parent.add_argument("--nu0", type=float, default=None, help="Exponent; defaults to the system's certificate")
    return parent


def _manifold_args(parser: argparse.ArgumentParser):
    parser.add_argument("--cone", default=None, help="cone.json written by synth-p")
    parser.add_argument("--radius", type=float, default=5.0, help="Half-width of the chart box")
    parser.add_argument("--nodes", type=int, default=None, help="Nodes per chart axis")
    parser.add_argument("--tol", type=float, default=1e-6, help="Pullback tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imtk", description="Inertial manifold certificates, construction and reduction")
    sub = parser.add_subparsers(dest="command", required=True)
    system = _common()
    bare = _common(with_system=False)

    p = sub.add_parser("check-freq", parents=[system], help="Frequency inequality on Re p = -nu0")
    p.add_argument("--lambda-lip", type=float, default=None, help="Lipschitz constant; defaults to the system's")
    p.add_argument("--omega-max", type=float, default=None, help="Sweep cut-off")
    p.set_defaults(handler=lambda a: commands.check_freq(a.system, a.out, a.nu0, a.lambda_lip, a.omega_max))

    p = sub.add_parser("gap", parents=[bare], help="Spectral gap condition of a Galerkin truncation")
    p.add_argument("--lambdas", default="squares", help="'squares' or comma-separated eigenvalues")
    p.add_argument("--N", type=int, required=True, help="Truncation size")
    p.add_argument("--j", type=int, required=True, help="Gap index")
    p.add_argument("--alpha-beta", type=float, default=0.0, help="Exponent alpha - beta")
    p.add_argument("--lambda-lip", type=float, required=True, help="Lipschitz constant")
    p.set_defaults(handler=lambda a: commands.gap(a.lambdas, a.N, a.j, a.alpha_beta, a.lambda_lip, a.out))

    p = sub.add_parser("small-delay", parents=[bare], help="Small-delay squeezing condition")
    p.add_argument("--tau", type=float, required=True, help="Delay")
    p.add_argument("--d0", type=float, default=0.0, help="Norm of the neutral term")
    p.add_argument("--r", type=int, default=1, help="Output dimension")
    p.add_argument("--lambda-lip", type=float, required=True, help="Lipschitz constant")
    p.add_argument("--nu0", type=float, default=None, help="Exponent; defaults to 1/tau")
    p.set_defaults(handler=lambda a: commands.small_delay(a.tau, a.r, a.lambda_lip, a.d0, a.nu0, a.out))

    p = sub.add_parser("synth-p", parents=[system], help="Riccati synthesis of the cone operator P")
    p.add_argument("--delta-fraction", type=float, default=None, help="Share of the admissible delta")
    p.add_argument("--kappa-battery", action="store_true", help="Also estimate kappa0 on trajectory pairs")
    p.set_defaults(handler=lambda a: commands.synth_p(a.system, a.out, a.nu0, a.delta_fraction, a.kappa_battery, a.seed))

    p = sub.add_parser("verify-h3", parents=[system], help="Squeezing inequality and cone lemma battery")
    p.add_argument("--cone", default=None, help="cone.json written by synth-p")
    p.add_argument("--pairs", type=int, default=100, help="Trajectory pairs")
    p.add_argument("--delta-scale", type=float, default=1.0, help="Inflate delta_P (adversarial run)")
    p.add_argument("--triples", type=int, default=10_000, help="Romanov triples")
    p.set_defaults(handler=lambda a: commands.verify_h3(a.system, a.out, a.nu0, a.cone, a.pairs, a.delta_scale, a.triples, a.seed))

    p = sub.add_parser("build-manifold", parents=[system], help="Graph transform pullback")
    _manifold_args(p)
    p.add_argument("--T-max", type=float, default=None, help="Longest pullback time")
    p.add_argument("--q", type=float, default=None, help="Driving point")
    p.add_argument("--nested", action="store_true", help="Also build and check the inner manifold")
    p.set_defaults(handler=lambda a: commands.build_manifold_cmd(a.system, a.out, a.nu0, a.cone, a.radius, a.nodes, a.tol, a.T_max, a.q, a.nested))

    p = sub.add_parser("tangents", parents=[system], help="Tangent spaces with finite-difference cross-check")
    _manifold_args(p)
    p.set_defaults(handler=lambda a: commands.tangents(a.system, a.out, a.nu0, a.cone, a.radius, a.nodes, a.tol))

    p = sub.add_parser("track", parents=[system], help="Central projection and exponential tracking")
    _manifold_args(p)
    p.add_argument("--v0", type=_floats, default=None, help="Initial state, comma-separated")
    p.set_defaults(handler=lambda a: commands.track(a.system, a.out, a.nu0, a.cone, a.v0, a.radius, a.nodes, a.tol))

    p = sub.add_parser("leaf", parents=[system], help="Vertical leaf through the central projection of v0")
    _manifold_args(p)
    p.add_argument("--v0", type=_floats, default=None, help="Initial state, comma-separated")
    p.add_argument("--offsets", type=_floats, default=[-0.5, -0.25, 0.25, 0.5], help="Offsets along the first E+ direction")
    p.set_defaults(handler=lambda a: commands.leaf(a.system, a.out, a.nu0, a.cone, a.v0, a.offsets, a.radius, a.nodes, a.tol))

    p = sub.add_parser("reduce", parents=[system], help="Inertial form against the projected full flow")
    _manifold_args(p)
    p.add_argument("--zeta0", type=_floats, default=None, help="Reduced initial state")
    p.add_argument("--T", type=float, default=10.0, help="Horizon")
    p.set_defaults(handler=lambda a: commands.reduce(a.system, a.out, a.nu0, a.cone, a.zeta0, a.T, a.radius, a.nodes, a.tol))

    p = sub.add_parser("analyze", parents=[system], help="Omega-limit, Poincare and stability analysis")
    _manifold_args(p)
    p.add_argument("--zeta0", type=_floats, default=None, help="Reduced initial state")
    p.add_argument("--sigma", type=float, default=None, help="Period of the driving")
    p.set_defaults(handler=lambda a: commands.analyze(a.system, a.out, a.nu0, a.cone, a.zeta0, a.sigma, a.radius, a.nodes, a.tol, seed=a.seed))

    p = sub.add_parser("robustness", parents=[system], help="Manifold distance under a scaled nonlinearity")
    _manifold_args(p)
    p.add_argument("--eps", type=_floats, default=[1e-1, 1e-2, 1e-3], help="Scales, comma-separated")
    p.add_argument("--threads", type=int, default=Settings.THREADS, help="Worker threads")
    p.set_defaults(tol=1e-8)
    p.set_defaults(handler=lambda a: commands.robustness(a.system, a.out, a.nu0, a.cone, a.eps, a.threads, a.radius, a.nodes, a.tol))

    p = sub.add_parser("verify-all", parents=[bare], help="Full pipeline on one system")
    p.add_argument("fixture", help="Fixture name or system config path")
    p.set_defaults(handler=lambda a: commands.verify_all(a.fixture, a.out, a.seed))

    p = sub.add_parser("runs", help="List recorded runs")
    p.add_argument("--limit", type=int, default=20, help="Rows to show")
    p.set_defaults(handler=None)
    return parser


def _exit_code(report: dict) -> int:
    return EXIT_PASS if report.get("status") in PASSING else EXIT_FAIL


def _config_paths(args) -> list:
    return [p for p in (getattr(args, "system", None), getattr(args, "fixture", None), getattr(args, "cone", None)) if p]


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, Settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command == "runs":
        print(dumps(commands.list_runs(args.limit)), end="")
        return EXIT_PASS

    manifest = RunManifest(command=args.command, config_paths=_config_paths(args), seed=args.seed)
    folder = output_dir(args.out)
    try:
        report = args.handler(args)
        code = _exit_code(report)
        artifacts = [folder / f"{args.command}.json"] + [folder / name for name in report.get("artifacts", [])]
    except (ImtkError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"imtk {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        code = EXIT_ERROR
        report = e.to_dict() if isinstance(e, ImtkError) else {"status": "error", "error": type(e).__name__, "message": str(e)}
        artifacts = [write_json(folder / f"{args.command}.error.json", report)]
    except Exception as e:
        logger.exception("%s crashed", args.command)
        print(f"imtk {args.command}: unexpected {type(e).__name__}: {e}", file=sys.stderr)
        code = EXIT_ERROR
        report = {"status": "error", "error": type(e).__name__, "message": str(e), "unexpected": True}
        artifacts = [write_json(folder / f"{args.command}.error.json", report)]

    manifest.finish(artifacts)
    missing = manifest.missing_artifacts()
    if missing:
        logger.warning("artifacts listed but not written: %s", missing)
    write_json(folder / f"{args.command}.manifest.json", manifest.to_dict())
    commands.record_run(manifest, code)
    print(f"{args.command}: {report.get('status')} ({folder})")
    return code
