"""Command-line front end.

Exit codes: 0 success, 1 validation or certificate failure, 2 usage or
input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import estimator, evolution, models
from .fock import BasisOverflowError, FockBasis, HermiteOverflowError, encode_observable, encode_position, load_observable, rank, unrank
from .hamiltonian import BasisTooLargeError, build_hamiltonian, norm_certificate
from .ode import IntegrationError, InvalidSystemError, load_system, random_system, rescale, save_system, system_to_dict, validate_system

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _write(text: str, out: str | None, outputs: list[Path]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        outputs.append(Path(out))


def _load(args, inputs: list[Path]):
    """System, initial point and (optional) rescaling from common flags."""
    path = Path(args.system)
    inputs.append(path)
    system, x0 = load_system(path)
    if getattr(args, "x0", None) is not None:
        x0 = np.array(args.x0)
    if x0 is None:
        raise UsageError("no initial point: give --x0 or an \"x0\" key in the system file")
    if len(x0) != system.n_vars:
        raise UsageError(f"x0 has {len(x0)} entries, system has N={system.n_vars}")
    if getattr(args, "delta", None) is not None:
        system, x0 = rescale(system, x0, args.delta)
    return system, np.asarray(x0, dtype=float)


def _observable(args, inputs: list[Path]):
    path = Path(args.observable)
    inputs.append(path)
    return load_observable(path)


# -- subcommands ----------------------------------------------------------


def cmd_validate(args, inputs, outputs) -> int:
    inputs.append(Path(args.system))
    system, _ = load_system(args.system)
    report = validate_system(system)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if report.ok:
        print(f"valid N={system.n_vars} d={report.d} c={report.c} eta={_fmt(report.eta)}")
        return EXIT_OK
    print(str(report))
    return EXIT_INVALID


def cmd_model(args, inputs, outputs) -> int:
    inputs.append(Path(args.spec))
    data = json.loads(Path(args.spec).read_text())
    spec = models.load_model_spec(args.spec, args.kind)
    if args.kind == "kuramoto":
        system, x0 = models.make_kuramoto(spec)
    else:
        maker = models.make_harmonic if args.kind == "harmonic" else models.make_duffing
        system, tr = maker(spec)
        x0 = tr.to_system(data["x0"], data["v0"]) if "x0" in data and "v0" in data else None
    if args.out:
        save_system(args.out, system, x0)
        outputs.append(Path(args.out))
    else:
        doc = system_to_dict(system)
        if x0 is not None:
            doc["x0"] = [float(v) for v in x0]
        print(json.dumps(doc, indent=1))
    report = validate_system(system)
    print(f"{args.kind}: N={system.n_vars} interactions={len(system.interactions)} d={report.d} c={report.c} eta={_fmt(report.eta)}", file=sys.stderr)
    return EXIT_OK


def cmd_build(args, inputs, outputs) -> int:
    inputs.append(Path(args.system))
    system, _ = load_system(args.system)
    system.require_valid()
    basis = FockBasis(system.n_vars, args.m)
    H = build_hamiltonian(system, basis)
    if args.out:
        H.save_csv(args.out)
        outputs.append(Path(args.out))
    cert = norm_certificate(H, system, basis)
    lines = ["quantity,measured,bound,ok"]
    for name, measured, bound, ok in cert.as_rows():
        lines.append(f"{name},{_fmt(measured)},{'' if bound is None else _fmt(bound)},{'' if ok is None else _fmt(ok)}")
    _write("\n".join(lines) + "\n", args.certificate, outputs)
    print(f"M={H.dim} nnz={H.nnz} hermitian={_fmt(H.hermitian)}", file=sys.stderr)
    return EXIT_OK if cert.passed else EXIT_INVALID


def cmd_evolve(args, inputs, outputs) -> int:
    system, x0 = _load(args, inputs)
    system.require_valid()
    basis = FockBasis(system.n_vars, args.m)
    H = build_hamiltonian(system, basis)
    psi0, L = encode_position(basis, x0)
    grid = np.linspace(0.0, args.T, args.steps + 1)
    obs = {}
    if args.observable:
        obs["c"] = encode_observable(basis, _observable(args, inputs))
    result = evolution.evolve(H, psi0, grid, args.tol, args.krylov_dim, store_states=False, observables=obs)
    cols = {"t": grid, "norm": result.norms, "norm_drift": result.norm_drift}
    if obs:
        cols["quantum"] = evolution.output_series(result, obs["c"], L, name="c").values
    header = list(cols)
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in zip(*cols.values())]
    _write("\n".join(lines) + "\n", args.out, outputs)
    return EXIT_OK


def cmd_compare(args, inputs, outputs) -> int:
    system, x0 = _load(args, inputs)
    obs = _observable(args, inputs)
    table = evolution.compare(system, x0, obs, args.m, args.T, args.steps, args.tol, krylov_dim=args.krylov_dim)
    _write(table.to_csv(), args.out, outputs)
    print(f"max_error={_fmt(table.max_error)} L={_fmt(table.L)} Hmax*T={_fmt(table.max_norm_time)}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args, inputs, outputs) -> int:
    system, x0 = _load(args, inputs)
    obs = _observable(args, inputs)
    table = evolution.convergence_sweep(system, x0, obs, args.T, args.m_list, args.tol, args.steps, args.workers)
    _write(table.to_csv(timings=not args.no_timings), args.out, outputs)
    return EXIT_OK


ESTIMATE_COLUMNS = ("eps", "n0", "m", "delta", "dim", "sparsity", "qubits", "alpha", "queries", "classical", "inequalities_hold")


def cmd_estimate(args, inputs, outputs) -> int:
    inputs.append(Path(args.system))
    system, _ = load_system(args.system)
    rows = []
    for eps in args.eps:
        row = estimator.estimate(system, args.b, eps, args.T, args.rk_order)
        rows.append({"eps": eps, **row})
    if args.format == "csv":
        lines = [",".join(ESTIMATE_COLUMNS)] + [",".join(_fmt(r[k]) for k in ESTIMATE_COLUMNS) for r in rows]
    else:
        cells = [[k for k in ESTIMATE_COLUMNS]] + [[_short(r[k]) for k in ESTIMATE_COLUMNS] for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(ESTIMATE_COLUMNS))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
        lines.append(f"(costs {estimator.COST_CAVEAT}; classical = T N (1/eps)^(1/{args.rk_order}))")
    _write("\n".join(lines) + "\n", args.out, outputs)
    return EXIT_OK if all(r["inequalities_hold"] for r in rows) else EXIT_INVALID


def _short(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return _fmt(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v)) if abs(v) < 10**12 else f"{float(v):.4g}"
    return f"{v:.6g}"


def cmd_rank(args, inputs, outputs) -> int:
    print(rank(args.N, args.m, args.word))
    return EXIT_OK


def cmd_unrank(args, inputs, outputs) -> int:
    print(",".join(str(s) for s in unrank(args.N, args.m, args.index)))
    return EXIT_OK


def cmd_certify(args, inputs, outputs) -> int:
    rng = np.random.default_rng(args.seed)
    lines = ["system,N,d,c,m,row_nnz,sparsity_bound,max_entry,max_norm_bound,one_norm,one_norm_bound,passed"]
    failures = 0
    for k in range(args.count):
        n = int(rng.integers(2, args.max_n + 1))
        system = random_system(rng, n, min(args.max_d, n))
        m = int(rng.integers(args.m_min, args.m_max + 1))
        basis = FockBasis(n, m)
        cert = norm_certificate(build_hamiltonian(system, basis), system, basis)
        failures += not cert.passed
        mb = "" if cert.max_norm_bound is None else _fmt(cert.max_norm_bound)
        lines.append(
            ",".join(
                [str(k), str(n), str(system.d), str(system.c), str(m), str(cert.max_row_nnz), _fmt(cert.sparsity_bound),
                 _fmt(cert.max_abs_entry), mb, _fmt(cert.max_column_abs_sum), _fmt(cert.one_norm_bound), _fmt(cert.passed)]
            )
        )
    _write("\n".join(lines) + "\n", args.out, outputs)
    print(f"{args.count - failures}/{args.count} certificates passed", file=sys.stderr)
    return EXIT_OK if failures == 0 else EXIT_INVALID


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvnsim", description="Embed conservative polynomial ODEs as sparse Hamiltonian dynamics.")
    manifest_help = "write a JSON record of inputs, flags, versions and output hashes"
    parser.add_argument("--emit-manifest", metavar="PATH", help=manifest_help)
    # also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--emit-manifest", metavar="PATH", default=argparse.SUPPRESS, help=manifest_help)
    subparsers = parser.add_subparsers(dest="command", required=True)

    class _Sub:
        def add_parser(self, name, **kw):
            return subparsers.add_parser(name, parents=[common], **kw)

    sub = _Sub()

    def system_arg(p):
        p.add_argument("--system", required=True, help="system JSON")

    def run_args(p, observable_required=True):
        system_arg(p)
        p.add_argument("--x0", type=_floats, help="initial point, comma-separated (overrides the file)")
        p.add_argument("--delta", type=float, help="rescale the system and x0 by this factor first")
        p.add_argument("--observable", required=observable_required, help="observable JSON")
        p.add_argument("--T", type=float, required=True)
        p.add_argument("--steps", type=int, default=20)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--out", help="output CSV (default stdout)")

    p = sub.add_parser("validate", help="check the interaction conditions")
    system_arg(p)

    p = sub.add_parser("model", help="write the system for a named model")
    p.add_argument("kind", choices=["harmonic", "duffing", "kuramoto"])
    p.add_argument("--spec", required=True)
    p.add_argument("--out")

    p = sub.add_parser("build", help="export the Hamiltonian and its norm certificate")
    system_arg(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", help="Hamiltonian CSV")
    p.add_argument("--certificate", help="certificate CSV (default stdout)")

    for name, helptext in (("evolve", "propagate the encoded initial state"), ("compare", "embedded vs classical observable")):
        p = sub.add_parser(name, help=helptext)
        run_args(p, observable_required=(name == "compare"))
        p.add_argument("--m", type=int, required=True)
        p.add_argument("--krylov-dim", type=int, default=evolution.DEFAULT_KRYLOV_DIM)

    p = sub.add_parser("sweep", help="error against truncation m")
    run_args(p)
    p.add_argument("--m-list", type=_ints, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timings", action="store_true", help="leave timing columns empty for reproducible output")

    p = sub.add_parser("estimate", help="truncation and query-cost table")
    system_arg(p)
    p.add_argument("--b", type=int, default=1)
    p.add_argument("--eps", type=_floats, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--rk-order", type=int, default=4)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.add_argument("--out")

    p = sub.add_parser("rank", help="index of an occupation word")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--word", type=_ints, required=True)

    p = sub.add_parser("unrank", help="occupation word at an index")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--index", type=int, required=True)

    p = sub.add_parser("certify", help="norm certificates for random systems")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--max-d", type=int, default=4)
    p.add_argument("--m-min", type=int, default=2)
    p.add_argument("--m-max", type=int, default=5)
    p.add_argument("--out")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "model": cmd_model,
    "build": cmd_build,
    "evolve": cmd_evolve,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "estimate": cmd_estimate,
    "rank": cmd_rank,
    "unrank": cmd_unrank,
    "certify": cmd_certify,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(path: str, args, inputs, outputs, code: int) -> None:
    try:
        version = metadata.version("kvnsim")
    except metadata.PackageNotFoundError:
        version = "unknown"
    flags = {k: v for k, v in vars(args).items() if k != "emit_manifest"}
    doc = {
        "command": args.command,
        "flags": flags,
        "exit_code": code,
        "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
        "outputs": {str(p): _sha256(p) for p in outputs if p.exists()},
        "versions": {"kvnsim": version, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    inputs: list[Path] = []
    outputs: list[Path] = []
    try:
        code = COMMANDS[args.command](args, inputs, outputs)
    except InvalidSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    except (IntegrationError, evolution.KrylovConvergenceError, BasisTooLargeError, BasisOverflowError, HermiteOverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except KeyError as exc:
        print(f"error: input JSON is missing key {exc}", file=sys.stderr)
        code = EXIT_USAGE
    except (UsageError, OSError, IndexError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_USAGE
    if args.emit_manifest:
        _manifest(args.emit_manifest, args, inputs, outputs, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
