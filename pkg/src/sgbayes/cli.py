"""Command-line front end: build / sample / direct / eval / diagnose.

Every command takes one JSON config file (``--set section.key=value``
overrides individual entries) and writes CSV or structured-text artifacts
into the configured output directory.  Failures exit nonzero with a one-line
``ERROR <class>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .bayes import save_reference_csv
from .errors import ConfigurationError, SgbayesError
from .mcmc import Chain, diagnostics
from .persistence import load_surrogate, store_surrogate
from .pipeline import build_surrogate, run_calibration, run_direct_mcmc


def _add_common(parser):
    parser.add_argument("--config", "-c", help="JSON run configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a config entry")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")


def _load(args):
    return cfgmod.load_config(args.config, overrides=args.overrides, seed=args.seed)


def _out_dir(cfg) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    cfgmod.echo_config(cfg, out)
    model = cfgmod.build_model(cfg)
    plan = cfgmod.build_plan(cfg, model)
    cache = cfgmod.build_cache(cfg, model.spec.name)
    surrogate, report = build_surrogate(model, plan, cache=cache, jobs=args.jobs)
    path = out / cfg["surrogate"]["path"]
    store_surrogate(surrogate, path)
    (out / "build_report.txt").write_text(report.to_text() + "\n")
    print(report.to_text())
    print(f"surrogate: {path} ({len(surrogate)} points, level {surrogate.max_level})")
    return 0


def _posterior_inputs(cfg, need_model: bool):
    """Model (when available), reference data, and likelihood for a run."""
    model = None
    if need_model or not cfg["posterior"]["data_path"]:
        model = cfgmod.build_model(cfg)
    data = cfgmod.reference_data(cfg, model)
    likelihood = cfgmod.build_likelihood(cfg, data)
    return model, data, likelihood


def cmd_sample(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    cfgmod.echo_config(cfg, out)
    surrogate = load_surrogate(out / cfg["surrogate"]["path"])
    model, data, likelihood = _posterior_inputs(cfg, need_model=False)
    save_reference_csv(data, out / "reference_data.csv")
    dram = cfgmod.build_dram(cfg, surrogate.domain)
    result = run_calibration(
        surrogate,
        likelihood,
        dram,
        model=model,
        out_dir=out,
        bins=cfg["mcmc"]["histogram_bins"],
    )
    print(result.diagnostics.to_text())
    print(f"model evaluations during sampling: {result.model_calls_during_sampling}")
    print(f"chain and histograms written to {out}")
    return 0


def cmd_direct(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    cfgmod.echo_config(cfg, out)
    model, data, likelihood = _posterior_inputs(cfg, need_model=True)
    save_reference_csv(data, out / "reference_data.csv")
    dram = cfgmod.build_dram(cfg, model.spec.domain)
    chain = run_direct_mcmc(model, likelihood, dram, force=args.force)
    chain.save_csv(out / "direct_chain.csv")
    diag = diagnostics(chain)
    (out / "direct_diagnostics.txt").write_text(diag.to_text() + "\n")
    print(diag.to_text())
    print(f"model evaluations: {model.calls}")
    return 0


def _read_theta_list(path, ndim):
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != ndim:
                raise ConfigurationError(
                    f"{path}:{line_no}: expected {ndim} values, got {len(parts)}"
                )
            rows.append([float(v) for v in parts])
    if not rows:
        raise ConfigurationError(f"{path}: no evaluation points found")
    return np.array(rows)


def cmd_eval(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    surrogate = load_surrogate(out / cfg["surrogate"]["path"])
    thetas = _read_theta_list(args.points, surrogate.ndim)
    surrogate_out = surrogate.eval_many(thetas)
    model_out = None
    if args.with_model:
        model = cfgmod.build_model(cfg)
        model_out = np.array([model(t) for t in thetas])
    path = out / "eval_results.csv"
    with open(path, "w", newline="") as fh:
        header = "point,output_index,surrogate"
        fh.write(header + (",model\n" if model_out is not None else "\n"))
        for i in range(thetas.shape[0]):
            for k in range(surrogate.n_outputs):
                row = f"{i},{k},{surrogate_out[i, k]!r}"
                if model_out is not None:
                    row += f",{model_out[i, k]!r}"
                fh.write(row + "\n")
    print(f"evaluated {thetas.shape[0]} points -> {path}")
    return 0


def cmd_diagnose(args) -> int:
    chain = Chain.load_csv(args.chain, burn_in=args.burn_in)
    print(diagnostics(chain).to_text())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sgbayes",
        description="Adaptive sparse-grid surrogate construction and "
                    "surrogate-accelerated Bayesian calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build and store a surrogate")
    _add_common(p_build)
    p_build.add_argument("--jobs", type=int, default=1,
                         help="max concurrent model evaluations")
    p_build.set_defaults(fn=cmd_build)

    p_sample = sub.add_parser("sample", help="run surrogate-based DRAM sampling")
    _add_common(p_sample)
    p_sample.set_defaults(fn=cmd_sample)

    p_direct = sub.add_parser("direct", help="run conventional (direct-model) MCMC")
    _add_common(p_direct)
    p_direct.add_argument("--force", action="store_true",
                          help="allow direct MCMC on an external model")
    p_direct.set_defaults(fn=cmd_direct)

    p_eval = sub.add_parser("eval", help="batch-evaluate the surrogate at given points")
    _add_common(p_eval)
    p_eval.add_argument("points", help="text file with one theta per line")
    p_eval.add_argument("--with-model", action="store_true",
                        help="also evaluate the true model for side-by-side columns")
    p_eval.set_defaults(fn=cmd_eval)

    p_diag = sub.add_parser("diagnose", help="print diagnostics for a stored chain")
    p_diag.add_argument("chain", help="chain CSV file")
    p_diag.add_argument("--burn-in", type=int, default=0)
    p_diag.set_defaults(fn=cmd_diagnose)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SgbayesError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
