"""Command-line driver.

Every subcommand reads one JSON config (``--config``), validates it against
a schema before computing anything, and writes its outputs into
``output_dir`` only after all computations succeeded.

Exit codes: 0 success, 2 configuration error, 3 numerical or verification
failure, 4 near-resonance.

Output columns:
  bands      bands.csv      eta1,eta2,side,j,lambda
             intervals.json [{j, side, min, max}]
  bounds     bounds.json    {m, M, h}
  homogenize tensor.json    {a_re, a_im, A, A_im, definiteness, residuals}
             scan.csv       a,lambda1,lambda2,class
  spectrum   spectrum.csv   operator,eta1,eta2,index,lambda,residual,boundary_energy_fraction
  verify-laminate  verify.json  [{check, error, tolerance, passed}]
  converge   converge.csv   N,a_re,a_im,error_L2,error_H1,energy
             rates.json     [{sign, slope, errors, degenerate}]
  solve      solve.json     {a_re, a_im, lambda_re, lambda_im, energy_norm, residual,
                             near_resonance, field_re, field_im}
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from typing import Callable

import jsonschema
import numpy as np

from .assembly import ConstraintKind, assemble_forms, dump_coo
from .bloch import band_structure, bloch_spectrum_at
from .conductivity import high_contrast_rate, homogenization_error, solve_source
from .errors import ConfigError, GeometryError, NearResonanceError, PoincareHomogError
from .geometry import CellGeometry, build_cell_mesh, build_macro_mesh
from .homogenization import definiteness_scan, exceptional_set, homogenized_tensor
from .laminate import (LaminateSpec, laminate_bloch_values, laminate_spectrum, laminate_tensor)
from .spectral import boundary_energy_fraction, finite_spectrum, free_cell_bounds

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESONANCE = 0, 2, 3, 4

_NUMBER_OR_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}

_GEOMETRY = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["disk", "smoothed_square", "laminate", "empty"]},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "corner_radius": {"type": "number", "minimum": 0},
        "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
    "additionalProperties": False,
}

_SOURCE = {
    "oneOf": [
        {"type": "number"},
        {"type": "object", "required": ["kind"],
         "properties": {"kind": {"enum": ["constant", "sine"]}, "value": {"type": "number"}},
         "additionalProperties": False},
    ]
}

_COMMON = {
    "output_dir": {"type": "string", "minLength": 1},
    "h": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
    "geometry": _GEOMETRY,
    "seed": {"type": "integer"},
    "method": {"enum": ["condensed", "dense"]},
}


def _schema(required: list[str], extra: dict) -> dict:
    return {
        "type": "object",
        "required": ["output_dir", *required],
        "properties": {**_COMMON, **extra},
        "additionalProperties": False,
    }


_POS_INT = {"type": "integer", "minimum": 1}

SCHEMAS = {
    "bands": _schema(["geometry", "h", "grid_res"], {
        "grid_res": {"type": "integer", "minimum": 2},
        "J": _POS_INT,
    }),
    "bounds": _schema(["geometry", "h"], {}),
    "homogenize": _schema(["geometry", "h"], {
        "a": _NUMBER_OR_COMPLEX,
        "a_values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    }),
    "spectrum": _schema(["geometry", "h", "N"], {
        "N": _POS_INT,
        "bc": {"enum": ["dirichlet", "periodic"]},
        "k": _POS_INT,
        "boundary_width": {"type": "number", "exclusiveMinimum": 0},
    }),
    "verify-laminate": _schema(["theta", "h"], {
        "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "eta": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "N": _POS_INT,
        "n_max": {"type": "integer", "minimum": 0},
        "compare": _POS_INT,
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "tensor_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "a_values": {"type": "array", "items": {"type": "number"}},
    }),
    "converge": _schema(["geometry", "h", "N_list"], {
        "N_list": {"type": "array", "items": _POS_INT, "minItems": 1},
        "a_values": {"type": "array", "items": _NUMBER_OR_COMPLEX},
        "contrast": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "contrast_N": _POS_INT,
        "f": _SOURCE,
    }),
    "solve": _schema(["geometry", "h", "N", "a"], {
        "N": _POS_INT,
        "a": _NUMBER_OR_COMPLEX,
        "f": _SOURCE,
        "bc": {"enum": ["dirichlet", "periodic"]},
        "cross_check": {"type": "boolean"},
    }),
}


def _complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _source(spec) -> Callable | float:
    if spec is None:
        return 1.0
    if isinstance(spec, (int, float)):
        return float(spec)
    value = float(spec.get("value", 1.0))
    if spec["kind"] == "constant":
        return value
    return lambda x, y: value * np.sin(np.pi * x) * np.sin(np.pi * y)


def _geometry(cfg: dict) -> CellGeometry:
    d = cfg["geometry"]
    if d["kind"] == "laminate" and "theta" not in d:
        raise ConfigError("laminate geometry needs theta")
    geom = CellGeometry.from_dict(d)
    try:
        geom.validate()
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    return geom


def load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    out = cfg["output_dir"]
    if not os.path.isdir(out) or not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out!r} does not exist or is not writable")
    if "geometry" in cfg:
        _geometry(cfg)
    if command == "bounds" and cfg["geometry"]["kind"] in ("laminate", "empty"):
        raise ConfigError("bounds need an inclusion strictly inside the cell")
    return cfg


class Outputs:
    """Collects file contents and writes them atomically at the end."""

    def __init__(self, directory: str):
        self.directory = directory
        self.files: dict[str, str] = {}

    def text(self, name: str, content: str) -> None:
        self.files[name] = content

    def json(self, name: str, obj) -> None:
        self.files[name] = json.dumps(obj, indent=1) + "\n"

    def csv(self, name: str, header: list, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.files[name] = buf.getvalue()

    def commit(self) -> list[str]:
        staged = []
        try:
            for name, content in self.files.items():
                fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.")
                with os.fdopen(fd, "w") as fh:
                    fh.write(content)
                staged.append((tmp, os.path.join(self.directory, name)))
        except OSError:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, final in staged:
            os.replace(tmp, final)
        return [final for _, final in staged]


def _num(x: float) -> str:
    return repr(float(x))


def cmd_bands(cfg: dict, args, out: Outputs) -> int:
    geom = _geometry(cfg)
    bs = band_structure(geom, cfg["grid_res"], cfg["h"], cfg.get("J", 6), jobs=args.jobs,
                        method=cfg.get("method", "condensed"))
    rows = []
    for p, eta in enumerate(bs.eta_grid):
        for side, B in (("low", bs.bands_low), ("high", bs.bands_high)):
            for j in range(bs.J):
                if not np.isnan(B[p, j]):
                    rows.append([_num(eta[0]), _num(eta[1]), side, j + 1, _num(B[p, j])])
    out.csv("bands.csv", ["eta1", "eta2", "side", "j", "lambda"], rows)
    out.json("intervals.json", bs.intervals())
    return EXIT_OK


def cmd_bounds(cfg: dict, args, out: Outputs) -> int:
    m, M = free_cell_bounds(_geometry(cfg), cfg["h"], cfg.get("method", "condensed"))
    out.json("bounds.json", {"m": m, "M": M, "h": cfg["h"]})
    return EXIT_OK


def cmd_homogenize(cfg: dict, args, out: Outputs) -> int:
    geom = _geometry(cfg)
    if "a" not in cfg and "a_values" not in cfg:
        raise ConfigError("homogenize needs 'a' or 'a_values'")
    if "a" in cfg:
        T = homogenized_tensor(geom, _complex(cfg["a"]), cfg["h"])
        out.json("tensor.json", T.to_dict())
    if "a_values" in cfg:
        rows = definiteness_scan(geom, cfg["a_values"], cfg["h"], jobs=args.jobs)
        out.csv("scan.csv", ["a", "lambda1", "lambda2", "class"],
                [[_num(r.a), _num(r.lambda1), _num(r.lambda2), r.cls] for r in rows])
    return EXIT_OK


def cmd_spectrum(cfg: dict, args, out: Outputs) -> int:
    geom = _geometry(cfg)
    N = cfg["N"]
    res = finite_spectrum(geom, N, cfg["h"], cfg.get("k", 6), cfg.get("bc", "dirichlet"),
                          cfg.get("method", "condensed"))
    width = cfg.get("boundary_width", 0.5 / N)
    rows = []
    for i, (lam, rr) in enumerate(zip(res.eigenvalues, res.residuals)):
        frac = boundary_energy_fraction(res.vectors[:, i], res.mesh, width)
        rows.append([res.operator_kind, 0.0, 0.0, i, _num(lam), f"{rr:.3e}", _num(frac)])
    out.csv("spectrum.csv", ["operator", "eta1", "eta2", "index", "lambda", "residual",
                             "boundary_energy_fraction"], rows)
    return EXIT_OK


def verify_laminate(cfg: dict) -> list[dict]:
    """Compare the finite-element pipelines with the closed forms."""
    theta, h = cfg["theta"], cfg["h"]
    tol = cfg.get("tolerance", 1e-3)
    ttol = cfg.get("tensor_tolerance", 1e-8)
    eta = tuple(cfg.get("eta", (0.25, 0.5)))
    N = cfg.get("N", 2)
    n_max = cfg.get("n_max", 2)
    count = cfg.get("compare", 12)
    geom = CellGeometry.laminate(theta)
    checks = []

    def record(name, err, tolerance):
        checks.append({"check": name, "error": float(err), "tolerance": tolerance,
                       "passed": bool(err <= tolerance)})

    fem = bloch_spectrum_at(geom, eta, h, None).nontrivial
    ref = laminate_bloch_values(theta, eta, n_max)
    k = min(count, len(ref), len(fem))
    record(f"bloch eta={list(eta)}", _extreme_error(fem, ref, k), tol)

    fem = finite_spectrum(geom, N, h, None, "periodic").nontrivial
    ref = laminate_spectrum(LaminateSpec(theta, N, n_max))
    ref = ref[(ref > 1e-6) & (ref < 1 - 1e-6)]
    k = min(count, len(ref), len(fem))
    record(f"finite periodic N={N}", _extreme_error(fem, ref, k), tol)

    for a in cfg.get("a_values", [2.0, -3.0]):
        if abs(theta / a + 1 - theta) < 1e-12:
            continue
        T = homogenized_tensor(geom, a, h)
        L = laminate_tensor(theta, a)
        err = np.abs(T.entries - np.diag([L.lam_minus, L.lam_plus])).max()
        record(f"tensor a={a}", err, ttol)

    sigma = exceptional_set(geom, h, None)
    target = -theta / (1 - theta)
    record("exceptional -theta/(1-theta)", float(np.min(np.abs(sigma - target))), tol)
    return checks


def _extreme_error(fem: np.ndarray, ref: np.ndarray, k: int) -> float:
    """Largest mismatch among the ``k`` values farthest from 1/2."""
    if k == 0:
        return math.inf
    f = np.sort(fem[np.argsort(-np.abs(fem - 0.5), kind="stable")[:k]])
    r = np.sort(ref[np.argsort(-np.abs(ref - 0.5), kind="stable")[:k]])
    return float(np.abs(f - r).max())


def cmd_verify_laminate(cfg: dict, args, out: Outputs) -> int:
    checks = verify_laminate(cfg)
    out.json("verify.json", checks)
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {c['check']}: error {c['error']:.3e} (tolerance {c['tolerance']:.1e})")
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_NUMERICAL


def cmd_converge(cfg: dict, args, out: Outputs) -> int:
    geom = _geometry(cfg)
    f = _source(cfg.get("f"))
    rows = []
    for a in cfg.get("a_values", [2.0]):
        for r in homogenization_error(geom, f, _complex(a), cfg["N_list"], cfg["h"]):
            rows.append([r.N, _num(r.a.real), _num(r.a.imag), _num(r.error_L2),
                         _num(r.error_H1), _num(r.energy)])
    out.csv("converge.csv", ["N", "a_re", "a_im", "error_L2", "error_H1", "energy"], rows)
    if "contrast" in cfg:
        mags = [abs(a) for a in cfg["contrast"]]
        N = cfg.get("contrast_N", cfg["N_list"][0])
        rates = []
        for sign in (1.0, -1.0):
            R = high_contrast_rate(geom, N, f, [sign * m for m in mags], cfg["h"])
            rates.append({"sign": int(sign), "slope": R.slope,
                          "errors": R.errors.tolist(), "degenerate": R.degenerate})
        out.json("rates.json", rates)
    return EXIT_OK


def cmd_solve(cfg: dict, args, out: Outputs) -> int:
    geom = _geometry(cfg)
    rep = solve_source(geom, cfg["N"], _complex(cfg["a"]), _source(cfg.get("f")), cfg["h"],
                       bc=cfg.get("bc", "dirichlet"), cross_check=cfg.get("cross_check", False))
    field = np.asarray(rep.field, complex)
    out.json("solve.json", {
        "a_re": rep.a.real, "a_im": rep.a.imag,
        "lambda_re": rep.lam.real, "lambda_im": rep.lam.imag,
        "energy_norm": rep.energy_norm, "residual": rep.residual,
        "near_resonance": rep.near_resonance, **rep.params,
        "field_re": field.real.tolist(), "field_im": field.imag.tolist(),
    })
    return EXIT_OK


COMMANDS = {
    "bands": cmd_bands,
    "bounds": cmd_bounds,
    "homogenize": cmd_homogenize,
    "spectrum": cmd_spectrum,
    "verify-laminate": cmd_verify_laminate,
    "converge": cmd_converge,
    "solve": cmd_solve,
}


def _side_outputs(cfg: dict, command: str, args, out: Outputs) -> None:
    if not (args.mesh_out or args.dump_matrices) or "geometry" not in cfg and "theta" not in cfg:
        return
    geom = _geometry(cfg) if "geometry" in cfg else CellGeometry.laminate(cfg["theta"])
    if "N" in cfg and command in ("spectrum", "solve"):
        mesh = build_macro_mesh(geom, cfg["N"], cfg["h"], cfg.get("bc", "dirichlet"))
        kind = ConstraintKind.DIRICHLET_ZERO if cfg.get("bc", "dirichlet") == "dirichlet" \
            else ConstraintKind.PERIODIC_QUOTIENT
    else:
        mesh = build_cell_mesh(geom, cfg["h"])
        kind = ConstraintKind.PERIODIC_QUOTIENT
    if args.mesh_out:
        buf = io.StringIO()
        json.dump(mesh.to_dict(), buf)
        out.text(os.path.basename(args.mesh_out), buf.getvalue())
    if args.dump_matrices:
        pair = assemble_forms(mesh, None, kind)
        for name, mat in (("A_num.coo", pair.A_num), ("A_den.coo", pair.A_den)):
            with tempfile.TemporaryDirectory() as tmp:
                p = os.path.join(tmp, name)
                dump_coo(mat, p)
                with open(p) as fh:
                    out.text(name, fh.read())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poincare-homog", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for independent items")
    p.add_argument("--mesh-out", default=None,
                   help="also write the mesh JSON under this file name in output_dir")
    p.add_argument("--dump-matrices", action="store_true",
                   help="also write the reduced form matrices as A_num.coo / A_den.coo")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.command)
        if args.mesh_out and os.path.dirname(args.mesh_out):
            raise ConfigError("--mesh-out takes a file name inside output_dir")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Outputs(cfg["output_dir"])
    try:
        code = COMMANDS[args.command](cfg, args, out)
        _side_outputs(cfg, args.command, args, out)
    except (ConfigError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NearResonanceError as exc:
        print(f"near resonance: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except (PoincareHomogError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out.commit()
    return code


if __name__ == "__main__":
    sys.exit(main())
