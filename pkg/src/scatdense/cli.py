"""Command-line experiment runner.

    scatdense eigens     --set ell_max=3 --set count=2 --out results/
    scatdense farfield   --config farfield.cfg --out results/
    scatdense synthesize --config synth.cfg --set k=2 --out results/
    scatdense sweep      --config sweep.cfg --out results/

Configs are flat ``key = value`` files with ``#`` comments; ``--set`` overrides
single keys.  Exit codes: 0 success, 2 configuration error, 3 numerical or
solver failure.  Nothing is written unless the whole command succeeds.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from . import bem, mie, specfun, synthesis
from .farfield import ParamSurface, amplitude_from_boundary
from .sphgrid import Direction, HarmonicCoeffs, analyze, grid_for_degree, l2_norm, synthesize_function

logger = logging.getLogger("scatdense")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------- config parsing


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        out[key] = value
    return out


DEFAULTS = {
    "eigens": {"ell_max": "3", "count": "3", "radius": "1"},
    "farfield": {
        "geometry": "sphere", "radius": "1", "semi_axes": "1,1,1", "k": "2", "alpha": "0,0,1",
        "solver": "auto", "beta_degree": "60", "bem_n_theta": "24", "bem_n_phi": "48",
        "cond_max": "1e12", "discrepancy_max": "1e-6",
    },
    "synthesize": {
        "geometry": "sphere", "radius": "1", "semi_axes": "1,1,1", "k": "2", "target": "3,1:1",
        "M_list": "4,9,16,25,36,49", "rule": "fibonacci-spiral", "seed": "0", "svd_cutoff": "1e-10",
        "bem_n_theta": "24", "bem_n_phi": "48", "cond_max": "1e12",
    },
    "sweep": {
        "radius": "1", "ell0": "3", "target": "3,1:1", "M": "36", "k_min": "6.5", "k_max": "7.5",
        "n_k": "101", "seed": "0", "svd_cutoff": "1e-10",
    },
}


class Config:
    """Resolved key-value parameters with typed, validating accessors."""

    def __init__(self, command: str, values: dict[str, str]):
        allowed = DEFAULTS[command]
        for key in values:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' for command '{command}'")
        self.command = command
        self.values = {**allowed, **values}

    def raw(self, key: str) -> str:
        return self.values[key]

    def _num(self, key: str, cast: Callable, lo=None, strict=True, hi=None):
        try:
            v = cast(self.values[key])
        except ValueError:
            raise ConfigError(f"key '{key}': cannot parse {self.values[key]!r}") from None
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"key '{key}': value must be finite")
        if lo is not None and (v <= lo if strict else v < lo):
            raise ConfigError(f"key '{key}': value {v} must be {'>' if strict else '>='} {lo}")
        if hi is not None and v > hi:
            raise ConfigError(f"key '{key}': value {v} must be <= {hi}")
        return v

    def pos_float(self, key):
        return self._num(key, float, 0.0)

    def int_at_least(self, key, lo, hi=None):
        return self._num(key, int, lo, strict=False, hi=hi)

    def floats(self, key, n=None, positive=False):
        try:
            vals = [float(p) for p in self.values[key].split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"key '{key}': expected comma-separated numbers") from None
        if n is not None and len(vals) != n:
            raise ConfigError(f"key '{key}': expected {n} numbers, got {len(vals)}")
        if not vals or any(not math.isfinite(v) or (positive and v <= 0) for v in vals):
            raise ConfigError(f"key '{key}': values must be finite{' and positive' if positive else ''}")
        return vals

    def ints(self, key, lo=1):
        try:
            vals = [int(p) for p in self.values[key].split(",") if p.strip()]
        except ValueError:
            raise ConfigError(f"key '{key}': expected comma-separated integers") from None
        if not vals or any(v < lo for v in vals):
            raise ConfigError(f"key '{key}': values must be integers >= {lo}")
        return vals

    def choice(self, key, options):
        v = self.values[key]
        if v not in options:
            raise ConfigError(f"key '{key}': {v!r} not one of {sorted(options)}")
        return v

    def wavenumbers(self, key: str, radius: float) -> list[float]:
        """Positive wavenumbers; a token ``jzero:ell:n`` means the n-th zero of j_ell over ``radius``."""
        out = []
        for tok in (p.strip() for p in self.values[key].split(",")):
            if not tok:
                continue
            if tok.startswith("jzero:"):
                try:
                    _, ell, n = tok.split(":")
                    ell, n = int(ell), int(n)
                except ValueError:
                    raise ConfigError(f"key '{key}': cannot parse {tok!r}, expected jzero:ell:n") from None
                if not (0 <= ell <= specfun.MAX_DEGREE and n >= 1):
                    raise ConfigError(f"key '{key}': {tok!r} out of range")
                out.append(specfun.bessel_zeros(ell, n)[-1].x / radius)
                continue
            try:
                v = float(tok)
            except ValueError:
                raise ConfigError(f"key '{key}': cannot parse {tok!r}") from None
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"key '{key}': wavenumber {tok!r} must be finite and > 0")
            out.append(v)
        if not out:
            raise ConfigError(f"key '{key}': no wavenumber given")
        return out

    def direction(self, key):
        v = np.array(self.floats(key, 3))
        if np.linalg.norm(v) == 0:
            raise ConfigError(f"key '{key}': zero vector")
        return Direction.from_vector(v)

    def target(self, key="target") -> HarmonicCoeffs:
        """Harmonic target ``ell,m:weight; ell,m:weight`` with Python complex weights."""
        terms = {}
        for part in self.values[key].split(";"):
            part = part.strip()
            if not part:
                continue
            try:
                idx, w = part.split(":")
                ell, m = (int(p) for p in idx.split(","))
                specfun.HarmonicIndex(ell, m)
                weight = complex(w.strip().replace(" ", ""))
            except ValueError:
                raise ConfigError(f"key '{key}': cannot parse term {part!r}") from None
            if ell > 40:
                raise ConfigError(f"key '{key}': target degree {ell} too high (max 40)")
            terms[(ell, m)] = terms.get((ell, m), 0) + weight
        if not terms:
            raise ConfigError(f"key '{key}': empty target")
        return HarmonicCoeffs.from_dict(terms)

    def surface(self) -> tuple[str, ParamSurface]:
        geom = self.choice("geometry", {"sphere", "ellipsoid"})
        if geom == "sphere":
            return geom, ParamSurface.sphere(self.pos_float("radius"))
        ax = self.floats("semi_axes", 3, positive=True)
        return geom, ParamSurface.ellipsoid(*ax)

    def comment(self) -> str:
        return "# config: command=" + self.command + "; " + "; ".join(
            f"{k}={self.values[k]}" for k in sorted(self.values)
        )


# ---------------------------------------------------------------- output handling


class Outputs:
    """Collects output files in memory; written atomically only on success."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def csv(self, name: str, header: list[str], rows, summary: list[str] = ()):
        lines = [self.cfg.comment(), ",".join(header)]
        for row in rows:
            lines.append(",".join(v if isinstance(v, str) else (str(v) if isinstance(v, int) else fmt(v)) for v in row))
        lines.extend(summary)
        self.files[name] = "\n".join(lines) + "\n"

    def jsonl(self, name: str, columns: list[str], records: list[dict]):
        head = json.dumps({"config": dict(sorted(self.cfg.values.items())), "command": self.cfg.command,
                           "columns": columns})

        def enc(v):
            if isinstance(v, bool) or isinstance(v, int):
                return json.dumps(v)
            if isinstance(v, float):
                return fmt(v) if math.isfinite(v) else json.dumps(str(v))
            return json.dumps(v)

        body = ["{" + ", ".join(f'"{c}": {enc(r[c])}' for c in columns) + "}" for r in records]
        self.files[name] = "\n".join([head] + body) + "\n"

    def commit(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        staged = []
        try:
            for name, text in self.files.items():
                fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.")
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                staged.append((tmp, os.path.join(out_dir, name)))
        except BaseException:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, dest in staged:
            os.replace(tmp, dest)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- commands


def cmd_eigens(cfg: Config, out: Outputs, threads: int = 1) -> None:
    ell_max = cfg.int_at_least("ell_max", 0, specfun.MAX_DEGREE)
    count = cfg.int_at_least("count", 1)
    a = cfg.pos_float("radius")
    rows = []
    for ell in range(ell_max + 1):
        for z in specfun.bessel_zeros(ell, count):
            rows.append((ell, z.index, z.x, z.x / a))
    out.csv("eigens.csv", ["ell", "index", "ka", "k"], rows)
    for r in rows:
        print(f"ell={r[0]} n={r[1]} ka={fmt(r[2])} k={fmt(r[3])}")


def _eigen_degrees(ka: float, lmax: int, tol: float = synthesis.EIGEN_FLAG_THRESHOLD) -> list[int]:
    table = specfun.bessel_zeros_below(lmax, ka + 1.0)
    return [l for l, zs in table.items() if any(abs(z - ka) < tol for z in zs)]


def cmd_farfield(cfg: Config, out: Outputs, threads: int = 1) -> None:
    geom, surface = cfg.surface()
    ks = cfg.wavenumbers("k", surface.bounding_radius)
    if len(ks) != 1:
        raise ConfigError("key 'k': farfield takes a single wavenumber")
    k = ks[0]
    alpha = cfg.direction("alpha")
    solver = cfg.choice("solver", {"auto", "mie", "bem"})
    if solver == "auto":
        solver = "mie" if geom == "sphere" else "bem"
    if solver == "mie" and geom != "sphere":
        raise ConfigError("key 'solver': the closed-form solver needs geometry = sphere")
    beta_degree = cfg.int_at_least("beta_degree", 4, specfun.MAX_DEGREE)
    nt = cfg.int_at_least("bem_n_theta", 2)
    npf = cfg.int_at_least("bem_n_phi", 4)
    if nt * npf > bem.MAX_NODES:
        raise ConfigError(f"keys 'bem_n_theta','bem_n_phi': {nt * npf} nodes exceed {bem.MAX_NODES}")
    cond_max = cfg.pos_float("cond_max")
    disc_max = cfg.pos_float("discrepancy_max")
    grid = grid_for_degree(beta_degree)
    L = grid.exactness_degree // 2

    if solver == "mie":
        model = mie.build_mie(surface.bounding_radius, k)
        values = mie.far_field(model, grid.points, alpha.as_array())
    else:
        op = bem.assemble(surface, k, nt, npf)
        print(f"bem: N={op.size} condition estimate={op.condition:.6e}")
        try:
            values = bem.bem_far_field(op, alpha, grid, cond_max).values
        except bem.NearEigenvalueError as exc:
            raise NumericalFailure(str(exc)) from exc

    coeffs = analyze(values, grid, L)
    out.csv("far_field.csv", ["theta", "phi", "re_A", "im_A"],
            [(th, ph, v.real, v.imag) for th, ph, v in zip(grid.theta, grid.phi, values)])
    out.csv("coeffs.csv", ["ell", "m", "re", "im"],
            [(l, m, coeffs[l, m].real, coeffs[l, m].imag) for l in range(L + 1) for m in range(-l, l + 1)])

    if geom == "sphere":
        a = surface.bounding_radius
        model = mie.build_mie(a, k)
        sgrid = grid_for_degree(2 * model.L + 4)
        trace = mie.boundary_normal_derivative(model, sgrid, alpha)
        quad = amplitude_from_boundary(surface, trace, k, grid).values
        exact = mie.far_field(model, grid.points, alpha.as_array())
        disc = float(np.max(np.abs(quad - exact)))
        print(f"boundary-quadrature vs closed-form max discrepancy: {disc:.3e}")
        if solver == "bem":
            rel = l2_norm(values - exact, grid) / l2_norm(exact, grid)
            print(f"bem vs closed-form relative L2 error: {rel:.3e}")
        if not disc <= disc_max:
            raise NumericalFailure(f"far-field discrepancy {disc:.3e} exceeds {disc_max:.1e}")
        t = np.linspace(-1.0, 1.0, 181)
        a_t = mie.far_field_from_cosine(model, t)
        out.csv("slice.csv", ["cos_theta", "re_A", "im_A"], [(ti, v.real, v.imag) for ti, v in zip(t, a_t)])
        for ell in _eigen_degrees(k * a, min(L, model.L)):
            block = np.abs(coeffs.degree_block(ell))
            print(f"interior eigenvalue: j_{ell}(ka)=0; max |A_{ell},m| = {block.max():.3e}")


def _synth_reports(cfg: Config, k: float, geom: str, surface: ParamSurface, target: HarmonicCoeffs,
                   Ms: list[int], cutoff: float, seed: int):
    if geom == "sphere":
        return synthesis.synthesize_sphere(surface.bounding_radius, k, target, Ms, cutoff, seed)
    nt, npf = cfg.int_at_least("bem_n_theta", 2), cfg.int_at_least("bem_n_phi", 4)
    op = bem.assemble(surface, k, nt, npf)
    grid = synthesis.sweep_grid(surface.bounding_radius, k, target.max_degree)
    dirs = synthesis.DirectionSet.fibonacci(max(Ms), seed)
    try:
        D = bem.far_field_matrix(op, dirs.points, grid, cfg.pos_float("cond_max"))
    except bem.NearEigenvalueError as exc:
        raise NumericalFailure(str(exc)) from exc
    f = synthesize_function(target, grid)
    return [synthesis.solve_ls(D[:, :M], f, grid, cutoff, k) for M in Ms]


def cmd_synthesize(cfg: Config, out: Outputs, threads: int = 1) -> None:
    geom, surface = cfg.surface()
    ks = sorted(cfg.wavenumbers("k", surface.bounding_radius))
    target = cfg.target()
    Ms = sorted(set(cfg.ints("M_list", 1)))
    cfg.choice("rule", {"fibonacci-spiral"})
    seed = cfg.int_at_least("seed", 0)
    cutoff = cfg.pos_float("svd_cutoff")
    if geom == "ellipsoid":
        cfg.pos_float("cond_max")
        nt, npf = cfg.int_at_least("bem_n_theta", 2), cfg.int_at_least("bem_n_phi", 4)
        if nt * npf > bem.MAX_NODES:
            raise ConfigError(f"keys 'bem_n_theta','bem_n_phi': {nt * npf} nodes exceed {bem.MAX_NODES}")
    results = _pmap(lambda k: _synth_reports(cfg, k, geom, surface, target, Ms, cutoff, seed), ks, threads)
    records = [r.as_record() for reps in results for r in reps]
    cols = ["k", "M", "residual", "relative_residual", "gram_condition", "rank", "eigenflag"]
    out.jsonl("reports.jsonl", cols, records)
    out.csv("residual_vs_M.csv", cols, [tuple(r[c] for c in cols) for r in records])
    for r in records:
        print(f"k={fmt(r['k'])} M={r['M']} residual={r['residual']:.6e} relative={r['relative_residual']:.6e}")


def cmd_sweep(cfg: Config, out: Outputs, threads: int = 1) -> None:
    a = cfg.pos_float("radius")
    ell0 = cfg.int_at_least("ell0", 0, specfun.MAX_DEGREE)
    target = cfg.target()
    M = cfg.int_at_least("M", 1)
    k_min, k_max = cfg.pos_float("k_min"), cfg.pos_float("k_max")
    if k_max < k_min:
        raise ConfigError("key 'k_max': must be >= k_min")
    n_k = cfg.int_at_least("n_k", 1)
    seed = cfg.int_at_least("seed", 0)
    cutoff = cfg.pos_float("svd_cutoff")
    ks = np.linspace(k_min, k_max, n_k) if n_k > 1 else np.array([k_min])
    grid = synthesis.sweep_grid(a, k_max, target.max_degree)
    profile = [p for chunk in _pmap(
        lambda kk: synthesis.obstruction_profile(a, ell0, target, M, (kk, kk), 1, cutoff, seed, beta_grid=grid),
        [float(x) for x in ks], threads) for p in chunk]
    norm = target.norm()
    peaks = synthesis.profile_peaks(profile)
    zeros = [z / a for z in specfun.bessel_zeros_below(ell0, k_max * a + 5.0)[ell0]]
    summary = []
    for kp in peaks:
        nearest = min(zeros, key=lambda z: abs(z - kp)) if zeros else math.nan
        summary.append(f"# peak,k={fmt(kp)},nearest_zero_k={fmt(nearest)},distance={fmt(abs(kp - nearest))}")
    res = [r for _, r in profile]
    summary.append(f"# max_over_min,{fmt(max(res) / min(res)) if min(res) > 0 else 'inf'}")
    out.csv("residual_vs_k.csv", ["k", "residual", "relative_residual"],
            [(k, r, r / norm) for k, r in profile], summary)
    for line in summary:
        print(line[2:])


COMMANDS = {"eigens": cmd_eigens, "farfield": cmd_farfield, "synthesize": cmd_synthesize, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scatdense", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        values = {}
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    values = parse_config_text(fh.read())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            values[key.strip()] = value.strip()
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = Config(args.command, values)
        out = Outputs(cfg)
        COMMANDS[args.command](cfg, out, args.threads)
        out.commit(args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, bem.NearEigenvalueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
