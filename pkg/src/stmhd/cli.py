"""Experiment harness: (dx, dt, T) sweeps and CSV output.

Config files are plain ``key = value`` text; ``#`` starts a comment. Lists
are comma separated. Recognized keys: problem, dx, dt, T, mode, precond,
out, newton_tol, gmres_rtol, gmres_atol, max_newton, eps, seed. Command-line
flags override file values.

Exit codes: 0 full success, 1 configuration error, 2 at least one
non-converged sweep cell.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceError, StmhdError
from .linalg import GmresConfig
from .precond import Variant
from .problems import by_name, discretize
from .solver import NewtonConfig, compute_overhead_ratios, solve_all_at_once, solve_sequential

CSV_HEADER = "problem,dx,dt,T,Nt,mode,newton,avg_gmres,effective_steps,newton_ratio,gmres_ratio,status,wall_s"

MODES = ("spacetime", "sequential", "both")


@dataclass
class ExperimentConfig:
    problem: str = "tearing_mode"
    dx: list = field(default_factory=lambda: [0.25])
    dt: list = field(default_factory=lambda: [0.25])
    t_final: list = field(default_factory=lambda: [1.0])
    mode: str = "spacetime"
    precond: str = "triangular"
    out: str = "results.csv"
    newton_tol: float = 1e-10
    gmres_rtol: float = 1e-2
    gmres_atol: float = 1e-14
    max_newton: int = 25
    eps: float = 1e-3
    seed: int = 0  # reserved; the solver itself is deterministic

    def validate(self):
        if not self.dx or not self.dt or not self.t_final:
            raise ConfigurationError("dx, dt, and T sweep lists must be nonempty")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got '{self.mode}'")
        if any(v <= 0 for v in self.dx + self.dt + self.t_final):
            raise ConfigurationError("all dx, dt, T values must be positive")
        for t in self.t_final:
            if any(dt > t for dt in self.dt):
                raise ConfigurationError("dt must not exceed T")
        Variant(self.precond)

    def newton_config(self) -> NewtonConfig:
        return NewtonConfig(
            abs_tol=self.newton_tol,
            max_iters=self.max_newton,
            gmres=GmresConfig(rel_tol=self.gmres_rtol, abs_tol=self.gmres_atol),
            variant=Variant(self.precond),
        )


@dataclass
class ResultRow:
    problem: str
    dx: float
    dt: float
    t_final: float
    n_steps: int
    mode: str
    newton: float
    avg_gmres: float
    effective_steps: int | None
    newton_ratio: float | None
    gmres_ratio: float | None
    status: str
    wall_s: float

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return f"{v:.6g}"
            return str(v)

        return ",".join(
            fmt(v)
            for v in (
                self.problem, self.dx, self.dt, self.t_final, self.n_steps, self.mode,
                self.newton, self.avg_gmres, self.effective_steps,
                self.newton_ratio, self.gmres_ratio, self.status, self.wall_s,
            )
        )


def parse_config_file(path: str) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{ln}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    return values


_FLOAT_LISTS = {"dx": "dx", "dt": "dt", "T": "t_final"}
_FLOATS = {"newton_tol": "newton_tol", "gmres_rtol": "gmres_rtol",
           "gmres_atol": "gmres_atol", "eps": "eps"}
_INTS = {"max_newton": "max_newton", "seed": "seed"}
_STRS = {"problem": "problem", "mode": "mode", "precond": "precond", "out": "out"}


def build_config(file_values: dict, args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for key, val in file_values.items():
        if key in _FLOAT_LISTS:
            setattr(cfg, _FLOAT_LISTS[key], [float(v) for v in val.split(",") if v.strip()])
        elif key in _FLOATS:
            setattr(cfg, _FLOATS[key], float(val))
        elif key in _INTS:
            setattr(cfg, _INTS[key], int(val))
        elif key in _STRS:
            setattr(cfg, _STRS[key], val)
        else:
            raise ConfigurationError(f"unknown config key '{key}'")
    for key, attr in _FLOAT_LISTS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            setattr(cfg, attr, [float(v) for v in cli_val.split(",") if v.strip()])
    for key, attr in _STRS.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            setattr(cfg, attr, cli_val)
    cfg.validate()
    return cfg


def run_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """One row per (dx, dt, T) cell, ordered dx outer, then dt, then T.

    In 'both' mode a single row carries the space-time counts, the sequential
    effective-step count, and the iteration overhead ratios. Non-convergence
    is recorded in the status column and the sweep continues.
    """
    cfg.validate()
    problem = by_name(cfg.problem, eps=cfg.eps)
    rows = []
    for dx in cfg.dx:
        for dt in cfg.dt:
            for t_final in cfg.t_final:
                rows.append(_run_cell(cfg, problem, dx, dt, t_final))
    return rows


def _run_cell(cfg: ExperimentConfig, problem, dx: float, dt: float, t_final: float) -> ResultRow:
    ncfg = cfg.newton_config()
    disc = discretize(problem, dx, dt, t_final)
    base = dict(problem=cfg.problem, dx=dx, dt=dt, t_final=t_final, n_steps=disc.n_steps)
    try:
        if cfg.mode == "spacetime":
            _, st = solve_all_at_once(disc, ncfg)
            return ResultRow(
                **base, mode="spacetime", newton=st.newton_iters, avg_gmres=st.avg_gmres,
                effective_steps=None, newton_ratio=None, gmres_ratio=None,
                status="ok" if st.converged else "nonconverged", wall_s=st.wall_time,
            )
        if cfg.mode == "sequential":
            _, seq = solve_sequential(disc, ncfg)
            return ResultRow(
                **base, mode="sequential", newton=seq.avg_newton_per_step,
                avg_gmres=(seq.avg_gmres if seq.newton_iters else 0.0),
                effective_steps=seq.effective_steps, newton_ratio=None, gmres_ratio=None,
                status="ok" if seq.converged else "nonconverged", wall_s=seq.wall_time,
            )
        _, st = solve_all_at_once(disc, ncfg)
        _, seq = solve_sequential(disc, ncfg)
        nr, gr = compute_overhead_ratios(st, seq)
        ok = st.converged and seq.converged
        return ResultRow(
            **base, mode="both", newton=st.newton_iters, avg_gmres=st.avg_gmres,
            effective_steps=seq.effective_steps, newton_ratio=nr, gmres_ratio=gr,
            status="ok" if ok else "nonconverged", wall_s=st.wall_time + seq.wall_time,
        )
    except (ConvergenceError, StmhdError) as exc:
        return ResultRow(
            **base, mode=cfg.mode, newton=0, avg_gmres=0.0, effective_steps=None,
            newton_ratio=None, gmres_ratio=None, status=f"failed: {exc}", wall_s=0.0,
        )


def emit_csv(rows: list[ResultRow], path: str) -> None:
    """Write the sweep results with LF endings and 6-significant-digit floats."""
    if not rows:
        raise ConfigurationError("no result rows to write")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


# -- verification battery ----------------------------------------------------


def _verify_checks():
    """Small invariant/oracle battery run by ``stmhd verify``."""
    from . import fem
    from .linalg import gmres as _gmres
    from .mesh import build_rect_mesh
    from .precond import SpaceTimePreconditioner, compute_alfven_scaling
    from .problems import initial_state
    from .spacetime import assemble_jacobian, residual

    rng = np.random.default_rng(7)

    def mesh_tiling():
        m = build_rect_mesh(0.0, 1.0, 0.0, 1.0, 0.25)
        return abs(m.triangle_areas().sum() - 1.0) < 1e-12 and m.n_triangles == 32

    def reference_p1_matrices():
        pts, w = fem.triangle_rule(fem.MATRIX_RULE)
        tab, gtab = fem.basis_tables(1, pts)
        mass = np.einsum("iq,jq,q->ij", tab, tab, w)
        stiff = np.einsum("iqd,jqd,q->ij", gtab, gtab, w)
        mass_exact = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
        stiff_exact = np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]) / 2.0
        return np.allclose(mass, mass_exact, atol=1e-14) and np.allclose(
            stiff, stiff_exact, atol=1e-13
        )

    def gmres_identity():
        b = rng.standard_normal(40)
        res = _gmres(lambda v: v, None, b, config=GmresConfig(rel_tol=1e-12))
        return res.iterations <= 1 and res.converged

    def alfven_analytic():
        prob = by_name("tearing_mode")
        disc = discretize(prob, 0.25, 0.5, 1.0)
        a = disc.pot.interpolate(prob.a_eq)
        s = compute_alfven_scaling(disc.pot, [a], prob.mu0)[0]
        expected = (0.4 * np.log(np.cosh(2.5))) ** 2
        return abs(s - expected) < 1e-10

    def jacobian_consistency():
        prob = by_name("island_coalescence")
        disc = discretize(prob, 0.5, 0.5, 1.0)
        state = initial_state(disc)
        jac = assemble_jacobian(state, disc)
        v = rng.standard_normal(jac.size)
        eps = 1e-6
        sp_ = state.copy()
        sm = state.copy()
        sp_.vec.data += eps * v
        sm.vec.data -= eps * v
        fd = (residual(sp_, disc).data - residual(sm, disc).data) / (2 * eps)
        jv = jac.apply(v)
        return np.linalg.norm(fd - jv) <= 1e-6 * max(np.linalg.norm(jv), 1.0)

    def triangular_round_trip():
        prob = by_name("island_coalescence")
        disc = discretize(prob, 0.5, 0.5, 1.0)
        state = initial_state(disc)
        jac = assemble_jacobian(state, disc)
        prec = SpaceTimePreconditioner(jac, disc, state)
        x = rng.standard_normal(jac.size)
        y = prec.apply_inverse(prec.apply_forward(x))
        return np.linalg.norm(y - x) <= 1e-9 * np.linalg.norm(x)

    def initial_current_residual():
        prob = by_name("tearing_mode")
        disc = discretize(prob, 0.25, 0.5, 1.0)
        state = initial_state(disc)
        r = residual(state, disc)
        from .linalg import BlockVector

        rb = BlockVector(disc.layout, disc.n_steps, r.data)
        return max(np.linalg.norm(rb.field(k, "j")) for k in range(disc.n_steps)) < 1e-12

    return [
        ("mesh area tiling", mesh_tiling),
        ("reference P1 mass/stiffness", reference_p1_matrices),
        ("gmres on identity", gmres_identity),
        ("alfven scaling analytic value", alfven_analytic),
        ("jacobian matches central differences", jacobian_consistency),
        ("triangular preconditioner round trip", triangular_round_trip),
        ("current residual zero at initial guess", initial_current_residual),
    ]


def cmd_verify() -> int:
    failures = 0
    for name, check in _verify_checks():
        try:
            ok = check()
        except Exception as exc:  # pragma: no cover - defensive
            ok = False
            name = f"{name} ({exc})"
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stmhd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a (dx, dt, T) sweep and write CSV")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--problem", choices=sorted(("tearing_mode", "island_coalescence")))
    run.add_argument("--dx", help="comma-separated dx list")
    run.add_argument("--dt", help="comma-separated dt list")
    run.add_argument("--T", help="comma-separated final-time list")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--precond", choices=[v.value for v in Variant])
    run.add_argument("--out", help="output CSV path")

    sub.add_parser("verify", help="run the invariant/oracle battery")

    args = parser.parse_args(argv)
    if args.command == "verify":
        return cmd_verify()

    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, args)
        rows = run_sweep(cfg)
        emit_csv(rows, cfg.out)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for row in rows:
        print(row.to_csv())
    if any(r.status != "ok" for r in rows):
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
