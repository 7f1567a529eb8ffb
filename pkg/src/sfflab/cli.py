"""``sff-lab`` command-line runner."""
import argparse
import hashlib
import json
import logging
import math
import os
import signal
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, backend_name
from .config import COMMANDS, load_config
from .errors import ConfigError, NumericalError, ParameterError, SffLabError

log = logging.getLogger("sfflab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4
COUPLING_COLUMNS = ("pair_i", "pair_j", "distance_um", "J_xy", "J_z", "beta", "Jp_xy", "Jp_z")


def source_hash():
    """Digest of the package sources, recorded to tie outputs to a build."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serialisable")


def _clean(o):
    """Replace non-finite floats so manifests stay strict JSON."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return None
    return o


class Writer:
    def __init__(self, out_dir, prefix):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.files = []

    def path(self, name):
        return self.dir / f"{self.prefix}{name}"

    def curve(self, name, curve):
        from .sff import SffCurve

        text = curve.to_csv()
        back = SffCurve.from_csv(text)
        same = all(np.array_equal(a, b, equal_nan=True) for a, b in
                   ((back.times, curve.times), (back.K, curve.K), (back.stderr, curve.stderr)))
        if not same:
            raise NumericalError(f"curve {name} does not survive its own CSV round trip")
        self._write(name, text)

    def couplings(self, name, model):
        lines = [",".join(COUPLING_COLUMNS)]
        for row in model.table:
            vals = [row["i"], row["j"], row["distance"], row["J_xy"], row["J_z"],
                    row["beta"], row["Jp_xy"], row["Jp_z"]]
            lines.append(",".join([str(vals[0]), str(vals[1])] + [f"{v:.17g}" for v in vals[2:]]))
        text = "\n".join(lines) + "\n"
        parsed = read_couplings(text)
        if len(parsed) != len(model.table):
            raise NumericalError("coupling table failed self-validation")
        self._write(name, text)

    def json(self, name, obj):
        text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default,
                          allow_nan=False)
        json.loads(text)
        self._write(name, text + "\n")

    def _write(self, name, text):
        p = self.path(name)
        tmp = p.with_suffix(p.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, p)
        self.files.append(p.name)
        log.info("wrote %s", p)


def read_couplings(text):
    import csv
    import io

    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COUPLING_COLUMNS:
        raise ParameterError(f"coupling CSV header must be {','.join(COUPLING_COLUMNS)}")
    out = []
    for r in rows[1:]:
        if len(r) != len(COUPLING_COLUMNS):
            raise ParameterError(f"malformed coupling row {r!r}")
        out.append((int(r[0]), int(r[1]), *map(float, r[2:])))
    return out


# ---------------------------------------------------------------------------
# time grids and task construction


def _times(cfg, floquet_dim=None):
    from .sff import time_grid

    g = cfg.section("grid")
    if floquet_dim is not None:
        if not g:
            return np.arange(0, floquet_dim + 1, dtype=float)
        if g["spacing"] != "integer":
            raise ConfigError("[grid] spacing must be 'integer' for floquet runs")
        lo, hi = int(math.ceil(g["t_min"])), int(math.floor(g["t_max"]))
        if lo < 0 or hi <= lo:
            raise ConfigError("[grid] needs 0 <= t_min < t_max for floquet runs")
        return np.arange(lo, hi + 1, dtype=float)
    if g["spacing"] == "integer":
        raise ConfigError("[grid] spacing 'integer' is only for floquet runs")
    try:
        return time_grid(g["t_min"], g["t_max"], g["points"], g["spacing"])
    except ParameterError as exc:
        raise ConfigError(f"[grid] {exc}") from None


def _plan(cfg):
    from .protocol import ShotPlan

    p = cfg.section("plan")
    return ShotPlan(p["N"], p["n_disorder"], p["n_reuse"], p["master_seed"])


def _label(x):
    return f"{x:g}".replace("-", "m")


def _progress(tag):
    state = {"last": -1}

    def report(done, total):
        step = max(1, total // 10)
        if done == total or done // step != state["last"]:
            state["last"] = done // step
            log.info("%s: %d/%d realizations", tag, done, total)

    return report


def _run_summary(label, result):
    meta = (result.curve if result.curve is not None else result.exact).meta
    return {
        "label": label,
        "summary": meta,
        "realizations": [r.summary() for r in result.realizations],
    }


# ---------------------------------------------------------------------------
# commands


def cmd_sff(cfg, writer, workers, measure):
    from .models import SpinModelSpec
    from .protocol import HamiltonianTask, PrepConfig, run_experiment
    from .sff import rmt_baseline, thouless_time

    m, pr = cfg.section("model"), cfg.section("prep") or {"M": 3, "t0": None, "delta": None}
    times = _times(cfg)
    plan = _plan(cfg)
    prep = PrepConfig(pr["M"], pr["t0"], pr["delta"])
    t_coh = cfg.get("output", "coherence_time")
    name = "sff_measure" if measure else "sff_exact"
    runs, results, complete = [], [], True
    for w in m["w"]:
        spec = SpinModelSpec(m["L"], m["delta"], m["j2"], m["delta2"], w)
        task = HamiltonianTask(spec, prep, m["law"], m["sector"])
        res = run_experiment(task, plan, times, workers, measure, t_coh, _progress(f"W={w:g}"))
        results.append((w, res))
        runs.append(_run_summary(f"w={w:g}", res))
        if res.complete and not any(r.ok for r in res.realizations):
            raise NumericalError(f"every realization failed at W={w:g}")
        if measure:
            writer.curve(f"{name}_w{_label(w)}.csv", res.curve)
            writer.curve(f"{name}_exact_w{_label(w)}.csv", res.exact)
        else:
            writer.curve(f"{name}_w{_label(w)}.csv", res.exact)
        if not res.complete:
            complete = False
            break
    extra = {}
    if measure and results:
        # one GOE reference from the weakest disorder, as in a single dashed line
        w0, r0 = min(results, key=lambda x: x[0])
        meta = r0.exact.meta
        if meta.get("tau_H") and meta.get("K_inf"):
            base = rmt_baseline("GOE", times, meta["tau_H"], meta["K_inf"])
            writer.curve(f"{name}_goe.csv", base)
            th = cfg.section("thouless") or {"eps": 0.3, "sustain": 5}
            extra["goe_reference"] = {"w": w0, "tau_H": meta["tau_H"], "K_inf": meta["K_inf"]}
            extra["thouless"] = [
                {
                    "w": w,
                    "measured": thouless_time(r.curve, base, th["eps"], th["sustain"]),
                    "exact": thouless_time(r.exact, base, th["eps"], th["sustain"]),
                }
                for w, r in results
            ]
    return runs, complete, extra


def cmd_floquet(cfg, writer, workers):
    from .protocol import FloquetTask, run_experiment
    from .sff import rmt_baseline

    f = cfg.section("floquet")
    dim = 2 ** f["L"]
    times = _times(cfg, floquet_dim=dim)
    plan = _plan(cfg)
    runs, complete, fits = [], True, []
    sel = (times >= 2) & (times <= dim)
    bases = {e: rmt_baseline(e, times, dim=dim) for e in ("COE", "CUE")}
    for e, b in bases.items():
        writer.curve(f"floquet_{e.lower()}.csv", b)
    for th in f["theta"]:
        task = FloquetTask(f["model"], f["L"], th, f["sampling"])
        res = run_experiment(task, plan, times, workers, True, None, _progress(f"theta={th:g}"))
        runs.append(_run_summary(f"theta={th:g}", res))
        if res.complete and not any(r.ok for r in res.realizations):
            raise NumericalError(f"every realization failed at theta={th:g}")
        writer.curve(f"floquet_theta{_label(th)}.csv", res.curve)
        writer.curve(f"floquet_exact_theta{_label(th)}.csv", res.exact)
        fit = {"theta": th}
        for which, c in (("measured", res.curve), ("exact", res.exact)):
            fit[which] = {e: float(np.sum((c.K[sel] - b.K[sel]) ** 2)) for e, b in bases.items()}
        fits.append(fit)
        if not res.complete:
            complete = False
            break
    return runs, complete, {"residuals_t2_to_D": fits, "dim": dim}


def cmd_rmt(cfg, writer):
    from .sff import rmt_baseline

    r = cfg.section("rmt")
    times = _times(cfg)
    tau_h, k_inf, dim = cfg.get("rmt", "tau_h"), cfg.get("rmt", "k_inf"), cfg.get("rmt", "dim")
    src = None
    if r["manifest"]:
        src = r["manifest"]
        try:
            doc = json.loads(Path(src).read_text(encoding="utf-8"))
            summ = doc["runs"][0]["summary"]
        except (OSError, ValueError, KeyError, IndexError) as exc:
            raise ConfigError(f"[rmt] manifest {src!r} unusable: {exc}") from None
        tau_h = tau_h or summ.get("tau_H")
        k_inf = k_inf or summ.get("K_inf")
        dim = dim or summ.get("dim")
    try:
        base = rmt_baseline(r["ensemble"], times, tau_h, k_inf, dim)
    except ParameterError as exc:
        raise ConfigError(f"[rmt] {exc}") from None
    writer.curve(f"rmt_{r['ensemble'].lower()}.csv", base)
    return [], True, {"ensemble": r["ensemble"], "tau_H": tau_h, "K_inf": k_inf, "dim": dim,
                      "manifest": src}


def _rydberg_inputs(cfg):
    from .rydberg import RingGeometry, RydbergConfig

    r, g = cfg.section("rydberg"), cfg.section("geometry")
    rc = RydbergConfig(r["C6"], r["C6_tilde"], r["C6_prime"], r["delta"], r["xi"],
                       r["delta_B"], r["gamma_d"], r["gamma_dp"])
    geom = RingGeometry(g["L"], g["R"], g["r_c"], cfg.get("geometry", "r_c_prime"))
    return rc, geom


def _budget(cfg, rc, geom, model):
    from .rydberg import decoherence_budget, max_ring_atoms, spectral_range

    h = spectral_range(model, "spin")
    hp = spectral_range(model, "prime")
    b = decoherence_budget(rc, geom, h, hp, J_unit=model.J_nearest,
                           kappa1_reference=cfg.get("rydberg", "kappa1_reference"))
    out = b.as_dict()
    r_max = cfg.get("geometry", "R_max") or geom.R
    out["R_max"] = r_max
    out["L_max"] = max_ring_atoms(geom.r_c, r_max)
    out["J_nearest_MHz"] = model.J_nearest
    out["delta_offset"] = model.delta_offset
    out["xi_prime"] = model.xi_prime
    out["warnings"] = list(model.warnings)
    return out


def cmd_rydberg(cfg, writer, with_table=True):
    from .rydberg import build_ring_model

    rc, geom = _rydberg_inputs(cfg)
    model = build_ring_model(rc, geom, cfg.get("rydberg", "electronic_offset", 0.0))
    for w in model.warnings:
        log.warning("%s", w)
    if with_table:
        writer.couplings("rydberg_couplings.csv", model)
    budget = _budget(cfg, rc, geom, model)
    writer.json("rydberg_budget.json" if with_table else "budget.json", budget)
    return [], True, {"budget": budget}


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="sff-lab", description="Simulated SFF measurements.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI config or run manifest JSON")
        s.add_argument("--out-dir", default=".", help="directory for output files")
        s.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: all cores)")
        s.add_argument("--seed", type=int, default=None, help="override [plan] master_seed")
        s.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    return p


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    start = time.perf_counter()
    try:
        cfg = load_config(args.config, args.command, seed=args.seed)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if workers < 1:
        log.error("--workers must be >= 1")
        return EXIT_CONFIG
    writer = Writer(args.out_dir, cfg.get("output", "prefix", "") or "")
    prev = signal.signal(signal.SIGTERM, _raise_interrupt)
    try:
        if args.command in ("sff-exact", "sff-measure"):
            runs, complete, extra = cmd_sff(cfg, writer, workers, args.command == "sff-measure")
        elif args.command == "floquet":
            runs, complete, extra = cmd_floquet(cfg, writer, workers)
        elif args.command == "rmt":
            runs, complete, extra = cmd_rmt(cfg, writer)
        else:
            runs, complete, extra = cmd_rydberg(cfg, writer, args.command == "rydberg-couplings")
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except ParameterError as exc:
        log.error("invalid parameters: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except SffLabError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    finally:
        signal.signal(signal.SIGTERM, prev)
    manifest = cfg.to_manifest()
    manifest.update(
        version=__version__,
        source_hash=source_hash(),
        backend=backend_name(),
        workers=workers,
        wall_time_s=time.perf_counter() - start,
        complete=complete,
        runs=runs,
        results=extra,
        files=list(writer.files),
    )
    writer.json(f"{args.command.replace('-', '_')}_manifest.json", manifest)
    if not complete:
        log.warning("run cancelled; partial results written")
        return EXIT_PARTIAL
    return EXIT_OK


def _raise_interrupt(signum, frame):
    raise KeyboardInterrupt


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
