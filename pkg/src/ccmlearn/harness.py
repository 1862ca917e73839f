"""Benchmark pipeline: matched-protocol comparison of learned models.

For each fixed initial condition, every model solves the same fixed-endpoint
transfer to hover at the origin (same final time), is tracked on the true
plant by TV-LQR gains computed from its own linearization, and the realized
trajectory is scored by full-state RMS error against the model's nominal.
Open-loop (zero-gain) rollouts of the same nominals are recorded separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import rng_stream
from .errors import ConfigError
from .models import CertifiedModel, DynamicsModel
from .pvtol import PvtolParams, pvtol_dynamics
from .tracking import track_closed_loop, tvlqr_gains
from .trajopt import NlpConfig, NominalTrajectory, cheb_grid, solve_trajopt

DIVERGENCE_ERROR_NORM = 10.0


@dataclass
class ResultsRow:
    model_kind: str            # NR | RR | CCMR
    n_train: int
    ic_index: int
    rms_error: float
    diverged: bool
    trajopt_status: str
    final_error: float
    T: float


@dataclass
class BenchConfig:
    """Benchmark protocol knobs; initial conditions are shared across models."""

    n_radii: int = 4
    n_angles: int = 5
    r_min: float = 4.0
    r_max: float = 12.0
    cheb_order: int = 30
    speed_for_T: float = 1.5
    T_min: float = 2.0
    q_diag: tuple = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    r_diag: tuple = (1.0, 1.0)
    qf_scale: float = 10.0
    track_dt: float = 0.01
    seed: int = 0
    include_open_loop: bool = True

    @property
    def n_ic(self) -> int:
        return self.n_radii * self.n_angles


def benchmark_initial_conditions(cfg: BenchConfig) -> np.ndarray:
    """Grid of positions 4-12 m from the origin; other states randomly drawn once."""
    rng = rng_stream(cfg.seed, "benchmark_ic")
    radii = np.linspace(cfg.r_min, cfg.r_max, cfg.n_radii)
    angles = np.linspace(0.0, 2.0 * np.pi, cfg.n_angles, endpoint=False)
    ics = np.zeros((cfg.n_ic, 6))
    k = 0
    for r in radii:
        for th in angles:
            ics[k, 0] = r * np.cos(th)
            ics[k, 1] = r * np.sin(th)
            ics[k, 2] = rng.uniform(-np.pi / 6, np.pi / 6)
            ics[k, 3:5] = rng.uniform(-0.5, 0.5, size=2)
            ics[k, 5] = rng.uniform(-0.2, 0.2)
            k += 1
    return ics


def final_time_for(ic, cfg: BenchConfig) -> float:
    dist = float(np.hypot(ic[0], ic[1]))
    return max(cfg.T_min, dist / cfg.speed_for_T)


def rms_error(realized, nominal: NominalTrajectory) -> float:
    """RMS over realized samples of the full-state 2-norm tracking error."""
    times = realized.times
    mask = (times >= nominal.times[0]) & (times <= nominal.times[-1] + 1e-9)
    if not np.any(mask):
        raise ValueError("trajectories do not overlap in time")
    errs = []
    for t, x in zip(times[mask], realized.states[mask]):
        errs.append(np.linalg.norm(x - nominal.interp_state(t)))
    return float(np.sqrt(np.mean(np.square(errs))))


def classify_stability(realized, nominal: NominalTrajectory, sim_diverged: bool) -> bool:
    """Diverged if the simulator blew up or the error norm ever crossed 10."""
    if sim_diverged:
        return True
    for t, x in zip(realized.times, realized.states):
        if np.linalg.norm(x - nominal.interp_state(t)) > DIVERGENCE_ERROR_NORM:
            return True
    return False


def run_case(dynamics: DynamicsModel, ic, T: float, cfg: BenchConfig, plant: PvtolParams,
             gains_on: bool = True, nominal: NominalTrajectory | None = None):
    """One model/IC evaluation; returns (row fields, nominal) for reuse."""
    grid = cheb_grid(cfg.cheb_order)
    if nominal is None:
        nominal = solve_trajopt(dynamics, ic, np.zeros(6), T, grid,
                                NlpConfig(tol=1e-6))
    field_fn = lambda x, u: pvtol_dynamics(x, u, plant)
    if gains_on:
        Q = np.diag(cfg.q_diag)
        R = np.diag(cfg.r_diag)
        gains = tvlqr_gains(dynamics, nominal, Q, R, cfg.qf_scale * Q, dt=cfg.track_dt)
    else:
        gains = None
    res = track_closed_loop(field_fn, nominal, gains, dt=cfg.track_dt)
    rms = rms_error(res.traj, nominal)
    diverged = classify_stability(res.traj, nominal, res.diverged)
    final_err = float(np.linalg.norm(res.traj.states[-1] - nominal.interp_state(res.traj.times[-1])))
    return rms, diverged, final_err, nominal


def run_benchmark(models: dict, n_train: int, cfg: BenchConfig,
                  plant: PvtolParams | None = None, verbose: bool = False):
    """Evaluate all models on the shared protocol.

    ``models`` maps kind (NR/RR/CCMR) to a DynamicsModel (or CertifiedModel,
    whose dynamics part is used).  Returns (closed-loop rows, open-loop rows).
    """
    if not models:
        raise ConfigError("no models supplied to the benchmark")
    plant = plant or PvtolParams()
    ics = benchmark_initial_conditions(cfg)
    rows, rows_open = [], []
    for kind, model in models.items():
        dynamics = model.dynamics if isinstance(model, CertifiedModel) else model
        for i, ic in enumerate(ics):
            T = final_time_for(ic, cfg)
            rms, diverged, ferr, nominal = run_case(dynamics, ic, T, cfg, plant, gains_on=True)
            rows.append(ResultsRow(kind, n_train, i, rms, diverged,
                                   nominal.status, ferr, T))
            if verbose:
                print(f"{kind:5s} ic {i:3d}  T={T:5.2f}  rms={rms:9.3f}  "
                      f"diverged={diverged}  trajopt={nominal.status}")
            if cfg.include_open_loop:
                rms_o, div_o, ferr_o, _ = run_case(dynamics, ic, T, cfg, plant,
                                                   gains_on=False, nominal=nominal)
                rows_open.append(ResultsRow(kind, n_train, i, rms_o, div_o,
                                            nominal.status, ferr_o, T))
    return rows, rows_open


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

QUARTILE_RULE = "quartiles by linear interpolation between order statistics (numpy 'linear')"


def quartiles(values) -> tuple:
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25.0, 50.0, 75.0], method="linear")
    return float(q1), float(med), float(q3)


def box_stats(values) -> dict:
    """Quartiles, 1.5-IQR whiskers clipped to data, and outliers."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = quartiles(v)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    wlo = float(inside.min()) if inside.size else q1
    whi = float(inside.max()) if inside.size else q3
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return {"q1": q1, "median": med, "q3": q3, "whisker_lo": wlo,
            "whisker_hi": whi, "outliers": [float(o) for o in outliers],
            "n": int(v.size)}


def summarize(rows) -> list:
    """Per-(model, N) box statistics over RMS errors, plus divergence counts."""
    groups = {}
    for r in rows:
        groups.setdefault((r.model_kind, r.n_train), []).append(r)
    out = []
    for (kind, n_train) in sorted(groups):
        rs = groups[(kind, n_train)]
        stats = box_stats([r.rms_error for r in rs])
        stats.update(model=kind, N=n_train,
                     n_diverged=sum(r.diverged for r in rs),
                     n_outliers=len(stats["outliers"]))
        out.append(stats)
    return out


def write_summary_csv(summary, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        fh.write(f"# {QUARTILE_RULE}; whiskers extend 1.5 x IQR beyond the box\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "N", "n", "q1", "median", "q3",
                         "whisker_lo", "whisker_hi", "n_outliers", "n_diverged"])
        for s in summary:
            writer.writerow([s["model"], s["N"], s["n"], repr(s["q1"]), repr(s["median"]),
                             repr(s["q3"]), repr(s["whisker_lo"]), repr(s["whisker_hi"]),
                             s["n_outliers"], s["n_diverged"]])


def render_box_svg(summary, path, title="RMS tracking error") -> None:
    """Minimal static box-whisker plot (axes, boxes, whiskers, outlier marks)."""
    width, height = 640, 420
    ml, mr, mt, mb = 70, 20, 40, 60
    plot_w = width - ml - mr
    plot_h = height - mt - mb
    if not summary:
        raise ValueError("empty summary")
    vmax = max(max(s["whisker_hi"], max(s["outliers"], default=0.0)) for s in summary)
    vmax = max(vmax * 1.08, 1e-9)

    def ypix(v):
        return mt + plot_h * (1.0 - v / vmax)

    n = len(summary)
    slot = plot_w / n
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{width/2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt+plot_h}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt+plot_h}" x2="{ml+plot_w}" y2="{mt+plot_h}" stroke="black"/>']
    for k in range(6):
        v = vmax * k / 5
        y = ypix(v)
        parts.append(f'<line x1="{ml-4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml-8}" y="{y+4:.1f}" text-anchor="end" font-size="10">{v:.2g}</text>')
    for i, s in enumerate(summary):
        cx = ml + slot * (i + 0.5)
        bw = min(40.0, slot * 0.5)
        y1, ym, y3 = ypix(s["q1"]), ypix(s["median"]), ypix(s["q3"])
        ylo, yhi = ypix(s["whisker_lo"]), ypix(s["whisker_hi"])
        parts.append(f'<line x1="{cx:.1f}" y1="{ylo:.1f}" x2="{cx:.1f}" y2="{y1:.1f}" stroke="black"/>')
        parts.append(f'<line x1="{cx:.1f}" y1="{yhi:.1f}" x2="{cx:.1f}" y2="{y3:.1f}" stroke="black"/>')
        parts.append(f'<line x1="{cx-bw/2:.1f}" y1="{ylo:.1f}" x2="{cx+bw/2:.1f}" y2="{ylo:.1f}" stroke="black"/>')
        parts.append(f'<line x1="{cx-bw/2:.1f}" y1="{yhi:.1f}" x2="{cx+bw/2:.1f}" y2="{yhi:.1f}" stroke="black"/>')
        parts.append(f'<rect class="box" x="{cx-bw/2:.1f}" y="{y3:.1f}" width="{bw:.1f}" '
                     f'height="{max(y1-y3, 0.5):.1f}" fill="#9ecae1" stroke="black"/>')
        parts.append(f'<line x1="{cx-bw/2:.1f}" y1="{ym:.1f}" x2="{cx+bw/2:.1f}" y2="{ym:.1f}" '
                     f'stroke="black" stroke-width="2"/>')
        for o in s["outliers"]:
            yo = ypix(o)
            parts.append(f'<path d="M {cx-3:.1f} {yo-3:.1f} L {cx+3:.1f} {yo+3:.1f} '
                         f'M {cx-3:.1f} {yo+3:.1f} L {cx+3:.1f} {yo-3:.1f}" stroke="red"/>')
        parts.append(f'<text x="{cx:.1f}" y="{mt+plot_h+16}" text-anchor="middle" font-size="11">'
                     f'{s["model"]} N={s["N"]}</text>')
        parts.append(f'<text x="{cx:.1f}" y="{mt+plot_h+32}" text-anchor="middle" font-size="9">'
                     f'{s["n_diverged"]}/{s["n"]} diverged</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def emit_report(rows, out_dir, rows_open=None) -> list:
    """Write results CSV(s), the summary CSV, and the SVG box plot."""
    import os

    from .core import save_results
    if not rows:
        raise ValueError("results table is empty")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    results_path = os.path.join(out_dir, "results.csv")
    save_results(rows, results_path)
    written.append(results_path)
    if rows_open:
        p = os.path.join(out_dir, "results_openloop.csv")
        save_results(rows_open, p)
        written.append(p)
    summary = summarize(rows)
    p = os.path.join(out_dir, "summary.csv")
    write_summary_csv(summary, p)
    written.append(p)
    p = os.path.join(out_dir, "boxplot.svg")
    render_box_svg(summary, p)
    written.append(p)
    return written
