"""Command-line surface: fit, sample, density grids, quantiles, studies.

CSV in, JSON/CSV out.  Input CSVs need a header row (UTF-8, decimal
point); output CSVs carry a leading ``#`` comment embedding the tool
version and seed, and readers here skip such lines.  Exit codes: 0 on
success, 1 on input errors, 2 when a fit does not converge (the result
is still written).  The environment variable BCE_THREADS caps study
parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .bce import BceDistribution
from .families import FAMILY_KINDS, Family
from .linalg import NotPositiveDefiniteError, PdMatrix
from .mle import FitSpec, fit
from .simstudy import SCENARIOS, StudyConfig, StudyFailureError, run_study
from .transform import BoxCoxParams
from .truncated import GibbsConfig

__all__ = [
    "CliError",
    "main",
    "cmd_fit",
    "cmd_sample",
    "cmd_pdf_grid",
    "cmd_quantile",
    "cmd_simstudy",
    "cmd_gen_demo_data",
]

_DEMO_MU = (1.45, 19.91)
_DEMO_SIGMA = ((0.16, 0.10), (0.10, 0.23))
_DEMO_TAU = 6.22
_DEMO_N = 136


class CliError(Exception):
    """Bad input; the message is printed to stderr and the exit code is 1."""


# ---------------------------------------------------------------------------
# input/output plumbing


def _read_csv(path: str, columns: list[str] | None):
    """Header-checked positive data matrix from a CSV file."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    with fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise CliError(f"{path}: empty file; a header row is required")
    header = [h.strip() for h in rows[0]]
    if columns:
        missing = [c for c in columns if c not in header]
        if missing:
            raise CliError(
                f"{path}: missing column(s) {', '.join(missing)}; "
                f"found {', '.join(header)}"
            )
        picks = [header.index(c) for c in columns]
        names = list(columns)
    else:
        picks = list(range(len(header)))
        names = header
    data = np.empty((len(rows) - 1, len(picks)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise CliError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for j, c in enumerate(picks):
            try:
                v = float(row[c])
            except ValueError as exc:
                raise CliError(
                    f"{path}: row {i}, column {names[j]!r}: not a number ({row[c]!r})"
                ) from exc
            if not np.isfinite(v) or v <= 0.0:
                raise CliError(
                    f"{path}: row {i}, column {names[j]!r}: "
                    f"value {row[c]} is not strictly positive"
                )
            data[i - 1, j] = v
    if data.shape[0] < 1:
        raise CliError(f"{path}: no data rows")
    return names, data


def _first_bad_pivot(sigma: np.ndarray) -> int:
    """1-based order of the first non-positive leading pivot."""
    for k in range(1, sigma.shape[0] + 1):
        try:
            np.linalg.cholesky(sigma[:k, :k])
        except np.linalg.LinAlgError:
            return k
    return sigma.shape[0]


def _load_params(path: str) -> BceDistribution:
    """Distribution from the canonical parameter-JSON interchange schema."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("family", "mu", "lambda", "sigma"):
        if key not in doc:
            raise CliError(f"{path}: parameter JSON lacks required key {key!r}")
    kind = doc["family"]
    if kind not in FAMILY_KINDS:
        raise CliError(
            f"{path}: unknown family {kind!r}; choose from {sorted(FAMILY_KINDS)}"
        )
    mu = np.asarray(doc["mu"], dtype=float)
    lam = np.asarray(doc["lambda"], dtype=float)
    sigma = np.asarray(doc["sigma"], dtype=float)
    eta = tuple(float(v) for v in doc.get("eta") or ())
    p = mu.size
    if mu.ndim != 1 or lam.shape != (p,):
        raise CliError(f"{path}: mu and lambda must be equal-length vectors")
    if sigma.shape != (p, p):
        raise CliError(f"{path}: sigma must be a full {p}x{p} matrix")
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(np.max(np.abs(sigma)), 1e-300):
        raise CliError(f"{path}: sigma must be symmetric")
    try:
        PdMatrix(sigma)
    except NotPositiveDefiniteError as exc:
        raise CliError(
            f"{path}: sigma is not positive definite "
            f"(leading pivot {_first_bad_pivot(sigma)} fails): {exc}"
        ) from exc
    if np.any(mu <= 0.0) or not np.isfinite(mu).all():
        raise CliError(f"{path}: mu entries must be strictly positive")
    try:
        family = Family(kind, eta, p)
        return BceDistribution(BoxCoxParams(tuple(mu), tuple(lam)), sigma, family)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _write_csv(path: str, header: list[str], rows, *, seed, command: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# artifact={__version__} command={command} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _stamp(payload: dict, seed) -> dict:
    payload["version"] = __version__
    payload["seed"] = seed
    return payload


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    columns = args.columns.split(",") if args.columns else None
    names, data = _read_csv(args.csv, columns)
    try:
        spec = FitSpec(
            kind=args.family,
            lambda_constraints="zero" if args.lambda_mode == "zero" else "free",
            gradient_tol=args.tol,
            seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    result = fit(data, spec)
    se = None
    if result.se_available:
        se = {
            "mu": list(result.mu_se),
            "lambda": list(result.lam_se),
            "sigma": [list(r) for r in result.sigma_se],
            "eta": result.eta_se,
        }
    payload = _stamp(
        {
            "command": "fit",
            "columns": names,
            "n": int(data.shape[0]),
            "label": result.label,
            "family": result.kind,
            "estimates": {
                "mu": list(result.mu),
                "lambda": list(result.lam),
                "sigma": [list(r) for r in result.sigma],
                "eta": result.eta,
            },
            "standard_errors": se,
            "loglik": result.loglik,
            "aic": result.aic,
            "n_params": result.n_params,
            "converged": result.converged,
            "iterations": result.iterations,
        },
        args.seed,
    )
    _write_json(args.out, payload)
    return 0 if result.converged else 2


def cmd_sample(args) -> int:
    dist = _load_params(args.params)
    draws = dist.sample(args.n, GibbsConfig(seed=args.seed))
    header = [f"y{k + 1}" for k in range(dist.dim)]
    _write_csv(args.out, header, draws, seed=args.seed, command="sample")
    return 0


def cmd_pdf_grid(args) -> int:
    dist = _load_params(args.params)
    if dist.dim != 2:
        raise CliError(f"pdf-grid needs bivariate parameters, got p={dist.dim}")
    lo1, hi1 = args.range1
    lo2, hi2 = args.range2
    if not (0.0 < lo1 < hi1 and 0.0 < lo2 < hi2):
        raise CliError("grid ranges must satisfy 0 < low < high")
    y1 = np.linspace(lo1, hi1, args.grid)
    y2 = np.linspace(lo2, hi2, args.grid)
    g1, g2 = np.meshgrid(y1, y2, indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    f = dist.pdf(pts)
    rows = np.column_stack([pts, f])
    _write_csv(args.out, ["y1", "y2", "pdf"], rows, seed=args.seed, command="pdf-grid")
    return 0


def cmd_quantile(args) -> int:
    dist = _load_params(args.params)
    if not 1 <= args.k <= dist.dim:
        raise CliError(f"coordinate k must be in 1..{dist.dim}")
    alphas = sorted(set(args.alpha))
    if any(not 0.0 < a < 1.0 for a in alphas):
        raise CliError("quantile levels must lie strictly between 0 and 1")
    values = [float(dist.quantile(args.k - 1, a)) for a in alphas]
    print(f"# artifact={__version__} command=quantile seed={args.seed}")
    print(f"alpha\tq{args.k}")
    for a, v in zip(alphas, values):
        print(f"{a:g}\t{v!r}")
    if args.out:
        _write_json(
            args.out,
            _stamp(
                {
                    "command": "quantile",
                    "k": args.k,
                    "alpha": list(alphas),
                    "quantile": values,
                },
                args.seed,
            ),
        )
    return 0


def cmd_simstudy(args) -> int:
    replicates = 5000 if args.full else args.replicates
    try:
        config = StudyConfig(
            scenario=args.scenario,
            n=args.n,
            replicates=replicates,
            master_seed=args.seed,
            n_jobs=args.jobs,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    try:
        summary = run_study(config)
    except StudyFailureError as exc:
        raise CliError(f"study aborted: {exc}") from exc
    payload = _stamp({"command": "simstudy", **summary.to_dict()}, args.seed)
    _write_json(args.out, payload)
    return 0


def cmd_gen_demo_data(args) -> int:
    family = Family("t", (_DEMO_TAU,), 2)
    dist = BceDistribution(
        BoxCoxParams(_DEMO_MU, (0.0, 0.0)), np.asarray(_DEMO_SIGMA), family
    )
    draws = dist.sample(args.n, GibbsConfig(seed=args.seed))
    _write_csv(args.out, ["y1", "y2"], draws, seed=args.seed, command="gen-demo-data")
    return 0


# ---------------------------------------------------------------------------
# parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _range_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LOW,HIGH")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bce",
        description="Positive-support elliptical distributions built on the "
        "power transform: fitting, sampling, densities, quantiles, and "
        "recovery studies.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="maximum-likelihood fit of a CSV dataset")
    p.add_argument("--csv", required=True, help="input CSV with a header row")
    p.add_argument("--family", default="normal", choices=sorted(FAMILY_KINDS))
    p.add_argument("--lambda-mode", default="free", choices=["free", "zero"])
    p.add_argument("--columns", default=None, help="comma-separated column subset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6, help="gradient tolerance")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw rows from a parameter JSON")
    p.add_argument("--params", required=True, help="parameter JSON path")
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("pdf-grid", help="density values on a bivariate grid")
    p.add_argument("--params", required=True)
    p.add_argument("--range1", type=_range_pair, required=True, metavar="LOW,HIGH")
    p.add_argument("--range2", type=_range_pair, required=True, metavar="LOW,HIGH")
    p.add_argument("--grid", type=_positive_int, default=50, help="points per axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_pdf_grid)

    p = sub.add_parser("quantile", help="marginal quantiles of one coordinate")
    p.add_argument("--params", required=True)
    p.add_argument("--k", type=_positive_int, default=1, help="coordinate (1-based)")
    p.add_argument("--alpha", type=float, nargs="+", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional output JSON path")
    p.set_defaults(func=cmd_quantile)

    p = sub.add_parser("simstudy", help="parameter-recovery study summary")
    p.add_argument(
        "--scenario", required=True, help=f"one of {', '.join(sorted(SCENARIOS))}"
    )
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--replicates", type=_positive_int, default=200)
    p.add_argument("--full", action="store_true", help="run 5000 replicates")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_simstudy)

    p = sub.add_parser(
        "gen-demo-data", help="synthetic bivariate demo dataset (CSV)"
    )
    p.add_argument("--n", type=_positive_int, default=_DEMO_N)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_gen_demo_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NotPositiveDefiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
