"""Experiment presets, deterministic data emission and run manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import dumps_config, validate_config
from .dynamics import (correlator_convergence, dynamics_error, lightcone_fit, commutator_profile,
                       max_group_velocity)
from .errors import ValidationError
from .gaussian import WeylDescriptor
from .lattice import HarmonicModel, LatticeSpec, energy, ground_energy, ground_state
from .mera import disentangler_action, verify_layer
from .rg import coarse_graining_stability, flow_report, scaling_limit_state, trajectory_flow
from .wavelets import cascade_evaluate, daubechies_filter

MANIFEST_NAME = "manifest.json"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, header, rows):
    """Header plus rows, floats with 17 significant digits, ``\\n`` line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _clean(o):
    # JSON has no inf/nan; write them as strings
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return str(float(o))
    return o


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def check(name, value, tol=None, passed=None, hard=True):
    """One manifest check; ``passed`` defaults to ``value <= tol``."""
    if passed is None:
        passed = bool(value <= tol)
    return {"name": name, "value": float(value), "tol": tol, "passed": bool(passed), "hard": hard}


def _spec(cfg, N=None):
    return LatticeSpec(cfg.d, cfg.L, cfg.eps0, cfg.N if N is None else N)


def _model(cfg, spec):
    if cfg.m is not None:
        return HarmonicModel.on_trajectory(spec, cfg.m)
    return HarmonicModel(spec, cfg.mu)


def _coords(spec):
    c = spec.coordinates()
    grids = np.meshgrid(*([c] * spec.d), indexing="ij")
    return [g.ravel() for g in grids]


def exp_filters(cfg, out):
    bank = daubechies_filter(cfg.K)
    write_csv(out / "filter.csv", ["n", "h", "g"], zip(range(len(bank.h)), bank.h, bank.g))
    res = bank.residuals()
    return [check(f"filter_{k}", abs(v), 1e-12) for k, v in sorted(res.items())]


def exp_fig1_weights(cfg, out):
    haar, d4 = daubechies_filter(1), daubechies_filter(2)
    rows = [(n, haar.h[n] if n < 2 else 0.0, d4.h[n]) for n in range(4)]
    write_csv(out / "weights.csv", ["n", "block_spin", "d4"], rows)
    samples = cascade_evaluate(d4, 8)
    write_csv(out / "scaling_d4.csv", ["x", "s"], zip(samples.x, samples.values))
    return [check("cascade_partition_of_unity", samples.partition_of_unity_error(), 1e-8)]


def exp_groundstate(cfg, out):
    spec = _spec(cfg)
    model = _model(cfg, spec)
    gs = ground_state(model)
    cols = _coords(spec)
    phi, pi = gs.position_kernel("phiphi").ravel(), gs.position_kernel("pipi").ravel()
    header = [f"x{j + 1}" for j in range(spec.d)] + ["phiphi", "pipi"]
    write_csv(out / "kernel.csv", header, zip(*cols, phi, pi))
    e_modes, e_pos = ground_energy(model), energy(model, gs)
    return [
        check("uncertainty_min_minus_quarter", abs(gs.min_uncertainty() - 0.25), 1e-12),
        check("energy_mode_vs_position", abs(e_modes - e_pos) / abs(e_modes), 1e-12),
    ]


def exp_rgflow(cfg, out):
    spec, bank = _spec(cfg), daubechies_filter(cfg.K)
    rep = flow_report(spec, bank, cfg.M, m=cfg.m, mu=cfg.mu, tol=cfg.tol)
    keys = list(rep.rows[0].keys())
    write_csv(out / "flow.csv", keys, ([r[k] for k in keys] for r in rep.rows))
    checks = []
    if cfg.m is not None:
        for name in ("phiphi", "pipi"):
            res = rep.column(f"residual_{name}")
            checks.append(check(f"residual_{name}_decreasing", float(np.max(np.diff(res))), 0.0, hard=False))
    else:
        loc = rep.column("locality_phiphi")
        checks.append(check("locality_decreasing", float(np.max(np.diff(loc))), 0.0, hard=False))
    return checks


def exp_triangle(cfg, out):
    bank = daubechies_filter(cfg.K)
    rows = []
    for N in range(cfg.N + 1):
        spec = _spec(cfg, N)
        cols = _coords(spec)
        states = trajectory_flow(spec, bank, cfg.M, m=cfg.m, mu=cfg.mu)
        for M, st in enumerate(states):
            phi, pi = st.position_kernel("phiphi").ravel(), st.position_kernel("pipi").ravel()
            for i in range(spec.volume):
                rows.append((N, M, *(c[i] for c in cols), phi[i], pi[i]))
    header = ["N", "M"] + [f"x{j + 1}" for j in range(cfg.d)] + ["phiphi", "pipi"]
    write_csv(out / "triangle.csv", header, rows)
    return []


def exp_limit(cfg, out):
    spec, bank = _spec(cfg), daubechies_filter(cfg.K)
    lim = scaling_limit_state(spec, cfg.m, bank, tol=cfg.tol, cutoff_level=cfg.cutoff_level,
                              allow_divergent=cfg.allow_divergent)
    st = lim.state
    header = [f"x{j + 1}" for j in range(spec.d)] + ["phiphi", "pipi"]
    write_csv(out / "limit.csv", header,
              zip(*_coords(spec), st.position_kernel("phiphi").ravel(), st.position_kernel("pipi").ravel()))
    write_json(out / "limit.json", {"cutoff_level": lim.cutoff_level, "kmax": lim.kmax,
                                    "tail_error": lim.tail_error, "tail_size": lim.tail_size,
                                    "divergent": lim.divergent, "ratios": lim.ratios})
    stab = coarse_graining_stability(spec, cfg.m, bank, lim.cutoff_level, allow_divergent=cfg.allow_divergent)
    return [check(f"stability_{k}", v, 1e-8) for k, v in sorted(stab.items())]


def exp_lightcone(cfg, out):
    spec = LatticeSpec(1, cfg.lightcone_L, 1.0, cfg.lightcone_N)
    model = HarmonicModel.on_trajectory(spec, cfg.m)
    t_grid = np.linspace(cfg.t_max / 20, cfg.t_max, 20)
    r = spec.separations().ravel()
    rows, exterior = [], 0.0
    for t in t_grid:
        c = np.abs(commutator_profile(model, t)).ravel()
        ext = r > 3 * t + 0.1
        if np.any(ext):
            exterior = max(exterior, float(np.max(c[ext])))
        rows.extend(zip(np.full(r.shape, t), r, c))
    write_csv(out / "commutator.csv", ["t", "r", "abs_commutator"], rows)
    fit = lightcone_fit(model, t_grid, v0=cfg.v0)
    write_json(out / "fit.json", {"velocity": fit.velocity, "decay_rate": fit.decay_rate,
                                  "intercept": fit.intercept, "r_squared": fit.r_squared,
                                  "n_points": fit.n_points, "times_used": fit.times_used,
                                  "times_skipped": fit.times_skipped,
                                  "max_group_velocity": max_group_velocity(model)})
    return [
        check("exterior_commutator", exterior, 1e-8),
        check("decay_rate_positive", fit.decay_rate, passed=fit.decay_rate > 0),
        check("fit_r_squared", fit.r_squared, passed=fit.r_squared >= 0.95, hard=False),
    ]


def dynamics_probes(spec):
    """Three Weyl descriptors and the coherent vector used by ``dyn-error``."""
    D = WeylDescriptor.delta
    o = (0,) * spec.d
    e = (1,) + (0,) * (spec.d - 1)
    ws = {"phi0+pi0": D(spec, o, "phi") + D(spec, o, "pi"), "phi0": D(spec, o, "phi"), "pi1": D(spec, e, "pi")}
    psi = D(spec, o, "phi") + D(spec, e, "pi")
    return ws, psi


def exp_dyn_error(cfg, out):
    spec = LatticeSpec(cfg.d, cfg.dyn_L, cfg.eps0, cfg.dyn_N)
    bank = daubechies_filter(cfg.dyn_K)
    ws, psi = dynamics_probes(spec)
    deltas = tuple(cfg.deltas)
    rows, finest = [], 0.0
    for name, w in ws.items():
        for t in cfg.t_grid:
            for M in range(1, cfg.scales + 1):
                r = dynamics_error(w, psi, spec.N + M, bank, cfg.m, t, level=M + cfg.level_offset, deltas=deltas)
                rows.append((name, t, spec.N + M, r.lhs, *(r.rhs[float(dl)] for dl in deltas)))
                if M == cfg.scales:
                    finest = max(finest, r.lhs)
    header = ["descriptor", "t", "Nprime", "lhs"] + [f"rhs_delta_{dl:g}" for dl in deltas]
    write_csv(out / "dyn_error.csv", header, rows)
    return [check("lhs_finest", finest, 1e-3, hard=False)]


CORRELATOR_CASES = {
    "2pt_phi": ([(0, "phi")], [(0, "phi")]),
    "2pt_pi": ([(0, "pi")], [(0, "pi")]),
    "2pt_mix": ([(0, "phi")], [(1, "pi")]),
    "4pt": ([(0, "phi"), (1, "pi")], [(0, "phi"), (1, "phi")]),
    "4pt_pi": ([(0, "pi"), (1, "pi")], [(0, "pi"), (1, "pi")]),
}


def exp_corr_conv(cfg, out):
    spec = LatticeSpec(cfg.d, cfg.corr_L, cfg.eps0, cfg.corr_N)
    bank = daubechies_filter(cfg.corr_K)
    x = spec.eps * np.eye(spec.d)[0]
    rows, finest = [], 0.0
    for name, (A, B) in CORRELATOR_CASES.items():
        A = [((s,) + (0,) * (spec.d - 1), f) for s, f in A]
        B = [((s,) + (0,) * (spec.d - 1), f) for s, f in B]
        for t in cfg.t_grid:
            for M in range(1, cfg.scales + 1):
                c = correlator_convergence(spec, spec.N + M, bank, cfg.m, A, B, t, x,
                                           level=M + cfg.level_offset)
                rows.append((name, t, spec.N + M, c.lattice.real, c.lattice.imag,
                             c.continuum.real, c.continuum.imag, c.difference))
                if M == cfg.scales:
                    finest = max(finest, c.difference)
    header = ["case", "t", "Nprime", "lattice_re", "lattice_im", "continuum_re", "continuum_im", "difference"]
    write_csv(out / "correlators.csv", header, rows)
    return [check("difference_finest", finest, 1e-3, hard=False)]


def exp_mera_check(cfg, out, descriptors=None):
    spec, bank = _spec(cfg), daubechies_filter(cfg.K)
    rep = verify_layer(spec, bank, cfg.m, descriptors=descriptors, cutoff_level=cfg.mera_cutoff)
    write_json(out / "layer.json", rep.as_dict())
    dis = disentangler_action(spec.refine(1), bank)
    k = spec.refine(1).momenta()
    if spec.d == 1:
        write_csv(out / "symbol.csv", ["k", "abs_symbol", "singular"], zip(k, np.abs(dis.symbol), dis.singular))
    return [
        check("dwt_orthogonality", rep.orthogonality, 1e-12),
        check("factorization_phi", rep.factorization_phi, 1e-12),
        check("dwt_factorization_phi", rep.dwt_factorization_phi, 1e-12),
        check("dwt_factorization_pi", rep.dwt_factorization_pi, 1e-12),
        check("gram", rep.gram, 1e-6),
        check("channel", rep.channel, 1e-10),
    ]


REGISTRY = {
    "filters": exp_filters,
    "fig1-weights": exp_fig1_weights,
    "groundstate": exp_groundstate,
    "rgflow": exp_rgflow,
    "triangle": exp_triangle,
    "limit": exp_limit,
    "lightcone": exp_lightcone,
    "dyn-error": exp_dyn_error,
    "corr-conv": exp_corr_conv,
    "mera-check": exp_mera_check,
}


@dataclass
class RunManifest:
    """Record of one run: config echo, code version, timing, checks and file digests."""

    config: str
    version: str
    wall_clock: float
    checks: dict
    files: list = field(default_factory=list)

    @property
    def ok(self):
        """False when a hard invariant failed."""
        return all(c["passed"] for cs in self.checks.values() for c in cs if c["hard"])

    def as_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _version():
    from . import __version__

    return __version__


def run_experiment(cfg, out=None, threads=1, extra=None):
    """Validate ``cfg``, run its experiments and write outputs plus ``manifest.json``.

    Parameters
    ----------
    cfg : RunConfig
    out : path, optional
        Output directory; ``cfg.out`` when omitted.
    threads : int
        Experiments run concurrently, each writing only into its own subdirectory.
    extra : dict, optional
        Per-experiment keyword arguments (e.g. ``{"mera-check": {"descriptors": [...]}}``).

    Raises
    ------
    ValidationError
        Before any computation when ``validate_config`` reports violations.
    OSError
        Output cannot be written.
    """
    violations = validate_config(cfg)
    if violations:
        raise ValidationError(violations)
    out = Path(cfg.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    extra = extra or {}
    start = time.perf_counter()
    with open(out / "config.ini", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_config(cfg))

    def one(name):
        sub = out / name
        sub.mkdir(exist_ok=True)
        return name, REGISTRY[name](cfg, sub, **extra.get(name, {}))

    names = list(dict.fromkeys(cfg.experiments))
    if threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, names))
    else:
        results = [one(n) for n in names]
    checks = {name: cs for name, cs in results}

    files = []
    for root, _, fnames in sorted(os.walk(out)):
        for fn in sorted(fnames):
            p = Path(root) / fn
            rel = p.relative_to(out).as_posix()
            if rel == MANIFEST_NAME:
                continue
            files.append({"path": rel, "sha256": _digest(p), "bytes": p.stat().st_size})
    manifest = RunManifest(dumps_config(cfg), _version(), time.perf_counter() - start, checks, files)
    write_json(out / MANIFEST_NAME, manifest.as_dict())
    return manifest
