"""Command-line interface: ``diracinv {direct,inverse,roundtrip,verify}``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
Failures print one JSON error record to stderr and, when the output
directory is usable, write the same record to ``error.json`` there.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .core import Spectrum
from .direct import (
    beta_and_ddelta,
    char_values,
    compute_spectrum,
    product_char_function,
    window_scale,
    wronskian_drift,
)
from .errors import ConfigError, DiracInvError, SpectrumError
from .fileio import (
    REPORT_FORMAT,
    format_report,
    generator_tag,
    read_spectrum,
    write_potential,
    write_spectrum,
    write_table,
)
from .glm import reconstruct_potential
from .verify import default_test_function, parseval_residual, recover_boundary_constants, roundtrip_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# Seed for the sample points of the Wronskian check; fixed for determinism.
WRONSKIAN_SEED = 20240101
WRONSKIAN_SAMPLES = 10

# Pass thresholds of `verify`.
CHECKS = {
    "delta_residual": 1e-10,
    "identity_residual": 1e-4,
    "wronskian_drift": 1e-6,
    "parseval_residual": 1e-2,
    "boundary_relation": 1e-8,
}


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(str(exc))
        self.stage = stage
        self.exc = exc


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (DiracInvError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(getattr(exc, "stage", name), exc) from exc


def _check_spectrum_matches(cfg: RunConfig, header: dict):
    for key in ("a", "alpha", "h1", "h2"):
        if abs(float(header[key]) - getattr(cfg, key)) > 1e-12 * max(1.0, abs(getattr(cfg, key))):
            raise ConfigError(f"spectrum header {key} = {header[key]} differs from config {getattr(cfg, key)!r}")


def run_direct(cfg: RunConfig, out: Path, base_dir: Path | None = None) -> Spectrum:
    """Write ``spectrum.txt`` and ``direct_diagnostics.txt``."""
    w, bc = cfg.weight, cfg.boundary
    pot = cfg.load_potential(base_dir)
    tol = cfg.tolerances
    spec, recs = _stage("direct", compute_spectrum, pot, w, bc, cfg.n_max, root_tol=tol.root_tol,
                        steps_per_unit=tol.ode_steps_per_unit, records=True)
    rng = np.random.default_rng(WRONSKIAN_SEED)
    lam_w = rng.uniform(-spec.lam.max(), spec.lam.max(), WRONSKIAN_SAMPLES)
    drift = _stage("direct", wronskian_drift, pot, w, bc, lam_w, steps_per_unit=tol.ode_steps_per_unit)
    h = cfg.config_hash()
    out.mkdir(parents=True, exist_ok=True)
    write_spectrum(out / "spectrum.txt", spec, a=cfg.a, alpha=cfg.alpha, h1=cfg.h1, h2=cfg.h2,
                   config_hash=h, generator=generator_tag("direct"))
    header = {"config_hash": h, "generator": generator_tag("direct"),
              "wronskian_drift_max": float(drift.max()),
              "delta_residual_max": max(abs(r.delta_residual) / (1 + abs(r.lambda_n)) for r in recs),
              "identity_residual_max": max(r.identity_residual for r in recs)}
    rows = [(r.n, r.lambda_n, r.alpha_n, r.beta_n, r.ddelta_n, r.delta_residual, r.identity_residual)
            for r in recs]
    write_table(out / "direct_diagnostics.txt", header,
                ["n", "lambda", "alpha", "beta", "ddelta", "delta_residual", "identity_residual"], rows)
    return spec


def run_inverse(cfg: RunConfig, spectrum_path: Path, out: Path):
    """Write ``potential.csv`` and ``inverse_diagnostics.txt``."""
    spec, header = read_spectrum(spectrum_path)
    _check_spectrum_matches(cfg, header)
    w = cfg.weight
    grid = cfg.colloc_nodes()
    pot, diag, _ = _stage("inverse", reconstruct_potential, spec, w, grid, tail=cfg.tail,
                          threads=cfg.threads, tol=cfg.tolerances.glm_tol)
    h = cfg.config_hash()
    out.mkdir(parents=True, exist_ok=True)
    fitted = diag.fitted or (float("nan"), float("nan"))
    common = {"config_hash": h, "generator": generator_tag("inverse"),
              "spectrum_config_hash": header.get("config_hash", ""),
              "reference": diag.reference, "h1_ref": float(fitted[0]), "h2_ref": float(fitted[1])}
    write_potential(out / "potential.csv", pot, dict(common, a=cfg.a, alpha=cfg.alpha))
    kd = diag.kernel
    write_table(out / "inverse_diagnostics.txt",
                dict(common, max_asym_defect=diag.max_asym_defect, max_a0_residual=kd.max_a0_residual,
                     max_condition=float(np.max(kd.cond))),
                ["x", "cond", "solve_residual", "a0_residual", "asym_defect"],
                zip(grid, kd.cond, kd.residual, kd.a0_residual, diag.asym_defect))
    return pot, diag


def run_roundtrip(cfg: RunConfig, out: Path, base_dir: Path | None = None, per_x: bool = False):
    """Write ``report.txt`` (and ``roundtrip_errors.csv`` with ``per_x``)."""
    w, bc = cfg.weight, cfg.boundary
    pot = cfg.load_potential(base_dir)
    tol = cfg.tolerances
    try:
        rep, _, _ = roundtrip_report(pot, w, bc, cfg.n_max, cfg.colloc, tail=cfg.tail, threads=cfg.threads,
                                     root_tol=tol.root_tol, steps_per_unit=tol.ode_steps_per_unit,
                                     glm_tol=tol.glm_tol)
    except (DiracInvError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(getattr(exc, "stage", "roundtrip"), exc) from exc
    h = cfg.config_hash()
    fields = dict(rep.fields(), format=REPORT_FORMAT, config_hash=h, generator=generator_tag("roundtrip"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(format_report(fields))
    if per_x:
        d = rep.per_x
        write_table(out / "roundtrip_errors.csv", {"config_hash": h, "generator": generator_tag("roundtrip")},
                    ["x", "p_true", "q_true", "p_hat", "q_hat"],
                    zip(d["x"], d["p_true"], d["q_true"], d["p_hat"], d["q_hat"]))
    return rep


def run_verify(cfg: RunConfig, spectrum_path: Path, out: Path, base_dir: Path | None = None):
    """Identity checks on a spectrum file; returns ``(lines, all_passed)``."""
    spec, header = read_spectrum(spectrum_path)
    _check_spectrum_matches(cfg, header)
    w, bc = cfg.weight, cfg.boundary
    pot = cfg.load_potential(base_dir)
    spu = cfg.tolerances.ode_steps_per_unit
    scale = window_scale(spec.n_max, w.mu_pi)

    def measure():
        delta = char_values(pot, w, bc, spec.lam, lam_scale=scale, steps_per_unit=spu)[0]
        beta, dd = beta_and_ddelta(pot, w, bc, spec.lam, lam_scale=scale, steps_per_unit=spu)
        rng = np.random.default_rng(WRONSKIAN_SEED)
        lam_w = rng.uniform(-spec.lam.max(), spec.lam.max(), WRONSKIAN_SAMPLES)
        fit = recover_boundary_constants(spec, pot, w, steps_per_unit=spu)
        rel = np.abs(fit.residuals) / (1 + np.abs(spec.lam))
        lam_p = 0.1
        d_shoot = char_values(pot, w, bc, [lam_p], lam_scale=scale, steps_per_unit=spu)[0][0]
        d_prod = product_char_function(spec, lam_p)
        return {
            "delta_residual": float(np.max(np.abs(delta) / (1 + np.abs(spec.lam)))),
            "identity_residual": float(np.max(np.abs(dd - beta * spec.alpha) / np.abs(dd))),
            "wronskian_drift": float(np.max(wronskian_drift(pot, w, bc, lam_w, steps_per_unit=spu))),
            "parseval_residual": parseval_residual(default_test_function, pot, w, bc, spec, steps_per_unit=spu),
            "boundary_relation": float(rel.max()),
            "_fit": (fit.h1, fit.h2),
            "_product": abs(d_prod - d_shoot) / abs(d_shoot),
        }

    m = _stage("verify", measure)
    lines = []
    ok = True
    for key, tol in CHECKS.items():
        passed = m[key] <= tol
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {key} = {m[key]:.3e} (tol {tol:.0e})")
    h1f, h2f = m["_fit"]
    lines.append(f"INFO boundary_fit h1_hat = {h1f:.12g} h2_hat = {h2f:.12g}")
    lines.append(f"DIAG product_formula relative_deviation_at_0.1 = {m['_product']:.3e}")
    out.mkdir(parents=True, exist_ok=True)
    text = [f"config_hash = {cfg.config_hash()}", f"generator = {generator_tag('verify')}"] + lines
    (out / "verify.txt").write_text("\n".join(text) + "\n")
    return lines, ok


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diracinv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("direct", "eigenvalues and normalizing numbers"),
                           ("inverse", "reconstruct the potential from a spectrum file"),
                           ("roundtrip", "direct then inverse, with an error report"),
                           ("verify", "identity checks on a spectrum file")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--threads", type=int)
        p.add_argument("--n-max", type=int, dest="n_max")
        p.add_argument("--grid", type=int)
        p.add_argument("--colloc", type=int)
        if name in ("inverse", "verify"):
            p.add_argument("--spectrum", required=True, type=Path)
        if name == "roundtrip":
            p.add_argument("--per-x", action="store_true", help="also write roundtrip_errors.csv")
    return ap


def _emit_error(code, stage, exc, out: Path | None):
    rec = {"status": "error", "exit_code": code, "stage": stage, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("x", "n"):
        if hasattr(exc, attr):
            rec[attr] = getattr(exc, attr)
    line = json.dumps(rec, sort_keys=True)
    print(line, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(line + "\n")
        except OSError:
            pass


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = args.out
    try:
        cfg = load_config(args.config).with_overrides(
            n_max=args.n_max, grid=args.grid, colloc=args.colloc, threads=args.threads,
            out=str(args.out) if args.out else None)
        out = Path(cfg.out)
        base = args.config.parent
        if args.command == "direct":
            spec = run_direct(cfg, out, base)
            print(f"wrote {out / 'spectrum.txt'} ({len(spec)} eigenvalues)")
        elif args.command == "inverse":
            pot, diag = run_inverse(cfg, args.spectrum, out)
            print(f"wrote {out / 'potential.csv'} ({len(pot.grid)} nodes, reference {diag.reference})")
        elif args.command == "roundtrip":
            rep = run_roundtrip(cfg, out, base, per_x=args.per_x)
            print(f"errors_p_L2_rel = {rep.errors_p_L2_rel:.4e}  errors_q_L2_rel = {rep.errors_q_L2_rel:.4e}")
        else:
            lines, ok = run_verify(cfg, args.spectrum, out, base)
            print("\n".join(lines))
            if not ok:
                _emit_error(EXIT_NUMERIC, "verify", RuntimeError("identity checks failed"), out)
                return EXIT_NUMERIC
    except (ConfigError, SpectrumError) as exc:
        _emit_error(EXIT_CONFIG, "config", exc, out)
        return EXIT_CONFIG
    except StageError as exc:
        _emit_error(EXIT_NUMERIC, exc.stage, exc.exc, out)
        return EXIT_NUMERIC
    except OSError as exc:
        _emit_error(EXIT_CONFIG, "io", exc, out)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
