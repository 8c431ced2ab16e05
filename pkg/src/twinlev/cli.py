"""Command-line entry point.

    twinlev [--config PATH] [--out PATH] [--seed N] [--threads N] COMMAND

Commands: derive, equilibrium, psd, sql, negativity, simulate,
demo-electron.  Data goes to ``--out`` (or standard output), progress and
diagnostics to standard error.  Exit status is 0 on success, 1 for a
physics error (unstable trap, no equilibrium, ...) and 2 for a
configuration error.
"""

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import entanglement as ent
from .config import load_config, parse_config
from .equilibrium import equilibrium
from .errors import ConfigError, GeometryInvalid, KernelNotCausal, PhysicsError, StepTooLarge
from .filters import FilterModel
from .gaussian import check_physical, mode_covariance
from .params import DerivedParams
from .spectra import (electron_demo, first_moment_covariance, frequency_grid, noise_vs_recoil,
                      spectrum_table, sql_resonant)
from .trajectory import ensemble_moments, realize_kernel, simulate_trajectory, step_bound

__all__ = ["main", "build_filters", "resolve_damping", "negativity_sweep"]

COMMANDS = ("derive", "equilibrium", "psd", "sql", "negativity", "simulate", "demo-electron")
MODES = ("+", "-")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# shared helpers

def resolve_damping(cfg, derived):
    """(gamma_plus, gamma_minus) in rad/s.

    Numbers are taken as multiples of omega0.  'opt' maximises the
    unconditional negativity when there is no out-of-loop channel and
    falls back to the analytic damping rule otherwise.
    """
    w0 = derived.omega0
    Op, Om = cfg.Omega_plus * w0, cfg.Omega_minus * w0
    if cfg.gamma_plus != "opt" and cfg.gamma_minus != "opt":
        return cfg.gamma_plus * w0, cfg.gamma_minus * w0
    if derived.eta_out == 0:
        opt = ent.optimize_damping(derived, Op, Om)
        seed = (opt.gamma_plus, opt.gamma_minus)
    else:
        seed = ent.analytic_damping(derived, Op, Om)
    gp = seed[0] if cfg.gamma_plus == "opt" else cfg.gamma_plus * w0
    gm = seed[1] if cfg.gamma_minus == "opt" else cfg.gamma_minus * w0
    return gp, gm


def build_filters(cfg, derived, gammas):
    """Mode -> FilterModel of the configured family."""
    out = {}
    for mode, gam, Om in zip(MODES, gammas, (cfg.Omega_plus, cfg.Omega_minus)):
        ws = derived.mode_frequency(mode)
        bw = Om * derived.omega0
        if cfg.filter_family == "ideal":
            out[mode] = FilterModel.ideal(gam, ws)
        elif cfg.filter_family == "lorentzian":
            try:
                out[mode] = FilterModel.lorentzian(gam, ws, bw)
            except ValueError as exc:
                raise ConfigError(str(exc), key=f"Omega_{'plus' if mode == '+' else 'minus'}") from None
        else:
            out[mode] = FilterModel.resonant(gam, ws, bw)
    return out


def _dimensionless_base(cfg):
    """(eta_eff, Gamma / omega0, g / omega0) of the configured system."""
    if cfg.model == "dimensionless":
        return cfg.eta_eff, cfg.heating_over_omega0, cfg.coupling_over_omega0
    d = cfg.derived()
    return d.eta_eff, d.Gamma / d.omega0, d.coupling / d.omega0


def _axis(lo, hi, n, scale):
    if n == 0:
        return np.empty(0)
    if scale == "log":
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def negativity_sweep(cfg, threads=1, progress=None):
    """Rows of the negativity sweep, ordered by grid index."""
    eta0, G0, g0 = _dimensionless_base(cfg)
    base = {"eta_eff": eta0, "heating_over_omega0": G0, "coupling_over_omega0": g0,
            "Omega_plus": cfg.Omega_plus, "Omega_minus": cfg.Omega_minus}
    a1 = _axis(cfg.sweep_min, cfg.sweep_max, cfg.sweep_points, cfg.sweep_scale)
    points = [{cfg.sweep_param: v} for v in a1]
    if cfg.sweep2_param != "none":
        a2 = _axis(cfg.sweep2_min, cfg.sweep2_max, cfg.sweep2_points, cfg.sweep2_scale)
        points = [{cfg.sweep_param: v, cfg.sweep2_param: u} for v in a1 for u in a2]
    use_gamma = "heating_over_omega0" in (cfg.sweep_param, cfg.sweep2_param)
    kinds = ("unconditional", "conditional") if cfg.negativity_kind == "both" else (cfg.negativity_kind,)

    def evaluate(i):
        p = {**base, **points[i]}
        col2 = p["heating_over_omega0"] if use_gamma else p["eta_eff"]
        rows = []
        for kind in kinds:
            try:
                d = DerivedParams.from_dimensionless(1.0, p["eta_eff"], p["heating_over_omega0"],
                                                     p["coupling_over_omega0"], mass=1.0)
                if kind == "conditional":
                    r = ent.conditional_negativity(d)
                    gp = gm = float("nan")
                else:
                    if cfg.gamma_plus == "opt" or cfg.gamma_minus == "opt":
                        _, gp_, gm_ = ent.max_negativity_grid(p["eta_eff"], p["heating_over_omega0"],
                                                               p["coupling_over_omega0"],
                                                               p["Omega_plus"], p["Omega_minus"])
                        gp = float(gp_) if cfg.gamma_plus == "opt" else cfg.gamma_plus
                        gm = float(gm_) if cfg.gamma_minus == "opt" else cfg.gamma_minus
                    else:
                        gp, gm = cfg.gamma_plus, cfg.gamma_minus
                    state = ent.unconditional_covariance(d, gp, gm, p["Omega_plus"], p["Omega_minus"])
                    r = ent.log_negativity(state, gp, gm)
                rows.append((p["coupling_over_omega0"], col2, gp, gm, r.E_N, r.duan_violated, kind))
            except PhysicsError:
                nan = float("nan")
                rows.append((p["coupling_over_omega0"], col2, nan, nan, nan, False, kind))
        return rows

    idx = range(len(points))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(evaluate, idx))
    else:
        results = [evaluate(i) for i in idx]
    if progress:
        progress(f"negativity: {len(points)} grid points done")
    return [row for rows in results for row in rows]


# ---------------------------------------------------------------------------
# commands

def cmd_derive(cfg, args):
    d = cfg.derived()
    two_pi = 2 * math.pi
    rows = [
        ("omega0", d.omega0, "rad/s"),
        ("omega0_over_2pi", d.omega0 / two_pi, "Hz"),
        ("gamma_sc", d.gamma_sc, "rad/s"),
        ("gamma_sc_over_omega0", d.gamma_sc / d.omega0, "1"),
        ("coupling", d.coupling, "rad/s"),
        ("coupling_over_omega0", d.coupling / d.omega0, "1"),
        ("omega_plus", d.omega_plus, "rad/s"),
        ("omega_minus", d.omega_minus, "rad/s"),
        ("L2", d.L2, "m^2"),
        ("D_g", d.D_g, "kg^2 m^2 s^-3"),
        ("Gamma", d.Gamma, "rad/s"),
        ("Gamma_over_2pi", d.Gamma / two_pi, "Hz"),
        ("eta_eff", d.eta_eff, "1"),
        ("mass", d.mass, "kg"),
    ]
    return _csv(["quantity", "value", "unit"], rows)


def cmd_equilibrium(cfg, args):
    if cfg.model != "physical":
        raise ConfigError("equilibrium needs model = physical", key="model")
    r = equilibrium(cfg.physical())
    header = ["E_c_v_m", "y01_m", "waist_m", "omega0_eff_rad_s", "recoil_scale", "omega_y_plus_rad_s",
              "omega_y_minus_rad_s", "stable_x", "stable_y", "multiple_roots", "needs_y_feedback"]
    y01 = float("nan") if r.y01 is None else r.y01
    row = (r.E_c, y01, r.waist, r.omega0_eff, r.recoil_scale, r.omega_y_plus, r.omega_y_minus,
           r.stable_x, r.stable_y, r.multiple_roots, r.needs_y_feedback)
    return _csv(header, [row])


def cmd_psd(cfg, args):
    d = cfg.derived()
    gam = resolve_damping(cfg, d)
    w0 = d.omega0
    channels = ("in", "out") if d.eta_out > 0 else ("in",)
    if cfg.psd_panel == "recoil":
        gsc = _axis(cfg.psd_min_over_omega0, cfg.psd_max_over_omega0, cfg.psd_points, "log") \
            if cfg.psd_max_over_omega0 > cfg.psd_min_over_omega0 > 0 else np.empty(0)
        rows = []
        for mode, g in zip(MODES, gam):
            for ch in channels:
                vals = noise_vs_recoil(d, mode, ch, g, gsc * w0) if gsc.size else []
                rows += [(G, d.coupling / w0, mode, ch, v) for G, v in zip(gsc, vals)]
        return _csv(["gamma_sc_over_omega0", "g_over_omega0", "mode", "channel", "noise_normalized"], rows)
    filters = build_filters(cfg, d, gam)
    lo, hi = cfg.psd_min_over_omega0 * w0, cfg.psd_max_over_omega0 * w0
    grids = [frequency_grid(d.mode_frequency(m), f.gamma, lo, hi, cfg.psd_inner_points, cfg.psd_points)
             for m, f in filters.items()]
    omega = np.unique(np.concatenate(grids))
    table = spectrum_table(omega, d, filters, kind=cfg.psd_kind, channels=channels)
    return table.to_csv()


def cmd_sql(cfg, args):
    d = cfg.derived()
    gam = resolve_damping(cfg, d)
    if not (d.eta_in > 0 and d.eta_out > 0):
        raise ConfigError("the out-of-loop limit needs eta_in > 0 and eta_out > 0", key="eta_out")
    rows = []
    for mode, g in zip(MODES, gam):
        r = sql_resonant(d, mode, g, d.eta_in, d.eta_out)
        rows.append((mode, g, r.L2_opt, r.floor, r.closed_form, r.floor / r.closed_form - 1, r.gamma_sc_opt))
    return _csv(["mode", "gamma_rad_s", "L2_opt_m2", "floor_n2s", "closed_form_n2s", "rel_diff",
                 "gamma_sc_opt_rad_s"], rows)


def cmd_negativity(cfg, args):
    rows = negativity_sweep(cfg, args.threads, _progress)
    return _csv(["g_over_omega0", "eta_eff_or_Gamma", "gamma_plus", "gamma_minus", "E_N",
                 "duan_violated", "kind"], rows)


def cmd_simulate(cfg, args):
    d = cfg.derived()
    gam = resolve_damping(cfg, d)
    if cfg.filter_family != "resonant":
        raise ConfigError("trajectories need a causal filter: filter_family = resonant", key="filter_family")
    filters = build_filters(cfg, d, gam)
    dt = cfg.dt_s or step_bound(d, filters)
    duration = cfg.duration_s or 20 / min(g for g in gam if g > 0)
    rec = simulate_trajectory(d, filters, seed=cfg.seed, duration=duration, dt=dt)
    traj_csv = rec.to_csv()
    if cfg.n_traj == 0:
        return traj_csv
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(traj_csv)
        args.out = None
    em = ensemble_moments(d, filters, cfg.n_traj, cfg.seed, duration, dt, threads=args.threads)
    check_physical_estimate(em)
    rows = []
    names = ("X", "XP", "P")
    s = np.array([d.x_scale, d.p_scale])
    broad = None
    if d.eta_out == 0:
        broad = ent.unconditional_covariance(d, gam[0], gam[1], cfg.Omega_plus * d.omega0,
                                             cfg.Omega_minus * d.omega0).cov
    for k, mode in enumerate(MODES):
        i = 2 * k
        _, cont = realize_kernel(filters[mode], dt)
        Vx, C, Vp = mode_covariance(d, d.mode_frequency(mode))
        exact = (first_moment_covariance(d, mode, cont) + [[Vx, C], [C, Vp]]) / np.outer(s, s)
        for name, (a, b) in zip(names, ((0, 0), (0, 1), (1, 1))):
            mc = em.cov_dimensionless[i + a, i + b]
            se = em.se_dimensionless[i + a, i + b]
            bf = broad[i + a, i + b] if broad is not None else float("nan")
            rows.append((mode, name, mc, se, exact[a, b], bf))
    return _csv(["mode", "moment", "monte_carlo", "standard_error", "exact_realized_filter",
                 "broad_filter_closed_form"], rows)


def check_physical_estimate(em):
    """The Monte-Carlo covariance must be physical within three standard errors."""
    from .gaussian import CovarianceState
    try:
        check_physical(CovarianceState(np.zeros(4), em.cov_dimensionless, "unconditional", "dimensionless"))
    except PhysicsError:
        shifted = em.cov_dimensionless + 3 * em.se_dimensionless
        check_physical(CovarianceState(np.zeros(4), 0.5 * (shifted + shifted.T), "unconditional",
                                       "dimensionless"))


def cmd_demo_electron(cfg, args):
    if cfg.model != "physical":
        raise ConfigError("demo-electron needs model = physical", key="model")
    pc = cfg.physical()
    d = cfg.derived()
    gam = resolve_damping(cfg, d)
    filt = build_filters(cfg, d, gam)["-"]
    r = electron_demo(d, filt, pc.charge1, pc.charge2, pc.separation, cfg.electron_distance_m,
                      math.radians(cfg.electron_angle_deg), cfg.electron_amplitude_m, cfg.electron_quality)
    return _csv(["snr", "force_amplitude_n", "linewidth_rad_s", "force_peak_psd_n2s", "noise_n2s",
                 "gamma_minus_rad_s"],
                [(r.snr, r.force_amplitude, r.linewidth, r.force_peak_psd, r.noise, gam[1])])


HANDLERS = {
    "derive": cmd_derive,
    "equilibrium": cmd_equilibrium,
    "psd": cmd_psd,
    "sql": cmd_sql,
    "negativity": cmd_negativity,
    "simulate": cmd_simulate,
    "demo-electron": cmd_demo_electron,
}


def build_parser():
    p = argparse.ArgumentParser(prog="twinlev", description="Coulomb-coupled levitated particles under cold damping")
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--out", metavar="PATH", help="output file (default: standard output)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and ensembles")
    p.add_argument("--echo-config", metavar="PATH", help="write the effective configuration here")
    p.add_argument("command", choices=COMMANDS)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = {} if args.seed is None else {"seed": args.seed}
        cfg = load_config(args.config, overrides) if args.config else parse_config("", overrides)
        if args.echo_config:
            with open(args.echo_config, "w") as fh:
                fh.write(cfg.to_text())
        text = HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if getattr(exc, "key", None) else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return 2
    except (GeometryInvalid, StepTooLarge, KernelNotCausal) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PhysicsError as exc:
        print(f"physics error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    elif text:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
