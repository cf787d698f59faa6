"""Command-line experiment runner.

    otfsidet design      one design on one channel realization (JSON)
    otfsidet sweep       grid over r_min x lambda x speed x err_var (CSV)
    otfsidet validate    Monte-Carlo check of the closed forms on a design (JSON)
    otfsidet compare     paired OTFS vs OFDM designs per speed (CSV)
    otfsidet channel-gen channel realizations per speed (JSON)

Configs are JSON files holding any subset of :class:`ExperimentConfig`
fields; ``--seed/--trials/--threads/--out`` and ``--set key=value`` override
them. Every output carries the package version, the seed and a hash of the
effective config. Nothing time- or host-dependent is written, so a fixed seed
gives byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__, designer, linksim, ofdmbaseline as ofdm
from .channel import DDChannel, doppler_index_bound, sample_dd_channel, tf_from_dd
from .designer import DesignInfeasible, SystemParams
from .ehmodel import EHCircuit
from .grids import GridDims
from .units import dbm_to_watts, kmh_to_ms

log = logging.getLogger("otfsidet")

SCHEMA_VERSION = 1
WAVEFORMS = ("otfs", "ofdm", "both")
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VALIDATION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    realizations: int = 20
    waveform: str = "otfs"
    # system
    n_slots: int = 12
    m_subcarriers: int = 12
    df: float = 15e3
    fc: float = 27e9
    p_tx_dbm: float = 36.1
    p_pilot_dbm: float = 20.0
    p_noise_dbm: float = -70.0
    p_peak_w: Optional[float] = None
    k2: float = 0.0034
    k4: float = 0.3859
    r_ant: float = 50.0
    rx_gain_db: float = 2.0
    path_loss_db: float = -50.0
    n_paths: int = 3
    l_max: int = 6
    literal_quartic: bool = False
    # single-design operating point
    r_min: float = 40.0
    lam: float = 0.1
    speed_kmh: float = 300.0
    err_var: float = 0.0
    realization: int = 0
    # sweep axes
    r_min_list: list = field(default_factory=lambda: [40.0])
    lam_list: list = field(default_factory=lambda: [0.0, 0.1, 0.5])
    speed_list: list = field(default_factory=lambda: [30.0, 150.0, 300.0])
    err_var_list: list = field(default_factory=lambda: [0.0, 0.01, 0.05])
    # successive GP
    eps: float = 1e-3
    max_outer: int = 30
    extrapolate: bool = True
    # Monte Carlo
    trials: int = 20_000
    report_ci: bool = False
    # OFDM benchmark
    cp_len: Optional[int] = None
    ofdm_averaging: str = "rms"
    cp_in_budget: bool = True
    # execution (excluded from the config hash)
    threads: int = 1
    out: Optional[str] = None

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.waveform not in WAVEFORMS:
            raise ConfigError(f"waveform must be one of {WAVEFORMS}")
        for name in ("r_min_list", "lam_list", "speed_list", "err_var_list"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if self.p_pilot_dbm >= self.p_tx_dbm:
            raise ConfigError("pilot power must be below the transmit power")
        if self.trials < 1 or self.threads < 1:
            raise ConfigError("trials and threads must be >= 1")
        if self.ofdm_averaging not in ofdm.AVERAGING:
            raise ConfigError(f"ofdm_averaging must be one of {ofdm.AVERAGING}")
        if self.cp_len is not None and self.cp_len < 0:
            raise ConfigError("cp_len must be >= 0")
        try:
            self.system()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def system(self, **over) -> SystemParams:
        return SystemParams(
            dims=GridDims(self.n_slots, self.m_subcarriers),
            df=self.df,
            fc=self.fc,
            p_tx=dbm_to_watts(self.p_tx_dbm),
            p_pilot=dbm_to_watts(self.p_pilot_dbm),
            p_peak=self.p_peak_w,
            p_noise=dbm_to_watts(self.p_noise_dbm),
            lam=over.get("lam", self.lam),
            r_min=over.get("r_min", self.r_min),
            circuit=EHCircuit(self.k2, self.k4, self.r_ant),
            rx_gain_db=self.rx_gain_db,
            path_loss_db=self.path_loss_db,
            literal_quartic=self.literal_quartic,
        )

    @property
    def cp(self) -> int:
        return self.l_max if self.cp_len is None else self.cp_len

    def hashed(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        d.pop("out")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return ExperimentConfig(**data).validate()


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


# -- channels ---------------------------------------------------------------


def channel_seed(seed: int, realization: int) -> np.random.SeedSequence:
    # keyed by realization index only, so every speed/lambda/err_var cell of a
    # realization sees the same delays and gains
    return np.random.SeedSequence(seed, spawn_key=(realization,))


def doppler_bound(cfg: ExperimentConfig, speed_kmh: float) -> int:
    return doppler_index_bound(cfg.fc, kmh_to_ms(speed_kmh), cfg.n_slots, cfg.df)


def make_channel(cfg: ExperimentConfig, realization: int, speed_kmh: float, err_var: float) -> DDChannel:
    """Unit-power draw scaled by path loss and receive gain."""
    rng = np.random.default_rng(channel_seed(cfg.seed, realization))
    raw = sample_dd_channel(rng, cfg.n_paths, cfg.l_max, doppler_bound(cfg, speed_kmh), err_var=err_var)
    return raw.scaled(cfg.system().channel_amplitude)


# -- tasks (top level so worker processes can import them) ----------------------


def _design_row(args) -> dict:
    cfg, r_min, lam, speed, err_var, realization, waveform = args
    params = cfg.system(r_min=r_min, lam=lam)
    dd = make_channel(cfg, realization, speed, err_var)
    ch = tf_from_dd(dd, params.dims)
    row = {
        "r_min": r_min,
        "lambda": lam,
        "speed_kmh": speed,
        "err_var": err_var,
        "realization": realization,
        "waveform": waveform,
    }
    ext = designer.Extrapolation(enabled=cfg.extrapolate)
    try:
        if waveform == "otfs":
            sol = designer.run(ch, params, eps=cfg.eps, max_outer=cfg.max_outer, extrapolation=ext)
            i_out, rate = sol.i_out, sol.rate.average
        else:
            sol = ofdm.design_ofdm(
                ch,
                params,
                cp_len=cfg.cp,
                averaging=cfg.ofdm_averaging,
                cp_in_budget=cfg.cp_in_budget,
                eps=cfg.eps,
                max_outer=cfg.max_outer,
                extrapolation=ext,
            )
            mc = linksim.McConfig(trials=cfg.trials, seed=int(channel_seed(cfg.seed, realization).generate_state(1)[0]))
            ev = ofdm.evaluate_under_mobility(sol.vars, dd, params, mc, cfg.cp, ch_design=ch)
            i_out, rate = ev.i_out, ev.rate.mean
    except DesignInfeasible as exc:
        row.update(status="infeasible", i_out=math.nan, rate=math.nan, iterations=0, converged=False, data_fraction=math.nan)
        log.info("cell %s infeasible: %s", row, exc)
        return row
    row.update(
        status="ok",
        i_out=i_out,
        rate=rate,
        iterations=sol.iterations,
        converged=sol.converged,
        data_fraction=sol.vars.data_fraction,
    )
    return row


def _map(fn, jobs, threads: int):
    if threads == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    # map() returns in submission order, so output never depends on timing
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


# -- output -----------------------------------------------------------------


def meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"version": __version__, "command": command, "seed": cfg.seed, "config_hash": cfg.config_hash()}


def _write(text: str, cfg: ExperimentConfig):
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def dump_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


def dump_csv(rows: list, columns: list, header: dict) -> str:
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _mean_rows(rows: list, keys: list, group_cols: list) -> list:
    out = []
    order = []
    groups: dict = {}
    for r in rows:
        key = tuple(r[c] for c in group_cols)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    for key in order:
        members = [r for r in groups[key] if r["status"] == "ok"]
        agg = dict(zip(group_cols, key))
        agg.update(realization="mean", status=f"{len(members)}/{len(groups[key])} ok")
        for k in keys:
            agg[k] = float(np.mean([r[k] for r in members])) if members else math.nan
        out.append(agg)
    return out


# -- commands ---------------------------------------------------------------


def cmd_design(cfg: ExperimentConfig) -> int:
    params = cfg.system()
    dd = make_channel(cfg, cfg.realization, cfg.speed_kmh, cfg.err_var)
    ch = tf_from_dd(dd, params.dims)
    ext = designer.Extrapolation(enabled=cfg.extrapolate)
    result = {"meta": meta(cfg, "design"), "channel": dd.to_json(), "solutions": {}}
    waves = ("otfs", "ofdm") if cfg.waveform == "both" else (cfg.waveform,)
    try:
        for w in waves:
            if w == "otfs":
                sol = designer.run(ch, params, eps=cfg.eps, max_outer=cfg.max_outer, extrapolation=ext)
            else:
                sol = ofdm.design_ofdm(
                    ch,
                    params,
                    cp_len=cfg.cp,
                    averaging=cfg.ofdm_averaging,
                    cp_in_budget=cfg.cp_in_budget,
                    eps=cfg.eps,
                    max_outer=cfg.max_outer,
                    extrapolation=ext,
                )
            result["solutions"][w] = sol.to_json()
    except DesignInfeasible as exc:
        result["error"] = {"kind": "infeasible", "message": str(exc)}
        _write(dump_json(result), cfg)
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(dump_json(result), cfg)
    return 0


SWEEP_COLUMNS = [
    "r_min",
    "lambda",
    "speed_kmh",
    "err_var",
    "realization",
    "waveform",
    "status",
    "i_out",
    "rate",
    "iterations",
    "converged",
    "data_fraction",
]


def cmd_sweep(cfg: ExperimentConfig) -> int:
    waves = ("otfs", "ofdm") if cfg.waveform == "both" else (cfg.waveform,)
    cells = list(itertools.product(cfg.r_min_list, cfg.lam_list, cfg.speed_list, cfg.err_var_list, waves))
    jobs = [
        (cfg, float(r), float(lam), float(v), float(e), k, w)
        for (r, lam, v, e, w) in cells
        for k in range(cfg.realizations)
    ]
    rows = _map(_design_row, jobs, cfg.threads)
    rows += _mean_rows(rows, ["i_out", "rate", "data_fraction"], ["r_min", "lambda", "speed_kmh", "err_var", "waveform"])
    _write(dump_csv(rows, SWEEP_COLUMNS, meta(cfg, "sweep")), cfg)
    return 0


COMPARE_COLUMNS = ["speed_kmh", "realization", "otfs_i_out", "ofdm_i_out", "gap", "otfs_status", "ofdm_status"]


def cmd_compare(cfg: ExperimentConfig) -> int:
    jobs = [
        (cfg, cfg.r_min, cfg.lam, float(v), cfg.err_var, k, w)
        for v in cfg.speed_list
        for k in range(cfg.realizations)
        for w in ("otfs", "ofdm")
    ]
    res = _map(_design_row, jobs, cfg.threads)
    rows = []
    for a, b in zip(res[0::2], res[1::2]):
        rows.append(
            {
                "speed_kmh": a["speed_kmh"],
                "realization": a["realization"],
                "otfs_i_out": a["i_out"],
                "ofdm_i_out": b["i_out"],
                "gap": a["i_out"] - b["i_out"],
                "otfs_status": a["status"],
                "ofdm_status": b["status"],
            }
        )
    summary = []
    for v in cfg.speed_list:
        ok = [r for r in rows if r["speed_kmh"] == float(v) and r["otfs_status"] == r["ofdm_status"] == "ok"]
        summary.append(
            {
                "speed_kmh": float(v),
                "realization": "mean",
                "otfs_i_out": float(np.mean([r["otfs_i_out"] for r in ok])) if ok else math.nan,
                "ofdm_i_out": float(np.mean([r["ofdm_i_out"] for r in ok])) if ok else math.nan,
                "gap": float(np.mean([r["gap"] for r in ok])) if ok else math.nan,
                "otfs_status": f"{len(ok)} paired",
                "ofdm_status": f"{len(ok)} paired",
            }
        )
    _write(dump_csv(rows + summary, COMPARE_COLUMNS, meta(cfg, "compare")), cfg)
    return 0


QUAD_BAND = 4.0
QUARTIC_EXACT_RTOL = 1e-9


def validation_checks(rep: linksim.McReport, err_var: float, trials: int) -> list:
    """(name, passed, detail) rows for a Monte-Carlo report."""
    band = QUAD_BAND
    if trials < 100:
        band = QUAD_BAND * math.sqrt(100.0 / trials)
        log.warning("only %d trials: widening the bands to %.1f sigma", trials, band)
    checks = []
    cf = rep.closed_form
    for key in ("psi_yd2", "psi_ye2"):
        est = getattr(rep, "emp_" + key)
        z = est.z_score(getattr(cf, key))
        ok = z <= band or (est.stderr == 0 and trials < 2)
        checks.append((key, bool(ok), f"z={z:.3g} band={band:.3g}"))
    if err_var == 0:
        est = rep.emp_psi_yd4
        z = est.z_score(cf.psi_yd4)
        checks.append(("psi_yd4", bool(z <= band or (est.stderr == 0 and trials < 2)), f"z={z:.3g} band={band:.3g}"))
        rel = abs(rep.emp_psi_ye4.mean - cf.psi_ye4) / max(abs(cf.psi_ye4), 1e-300)
        checks.append(("psi_ye4_exact", bool(rel <= QUARTIC_EXACT_RTOL or cf.psi_ye4 == 0), f"rel={rel:.3g}"))
    if rep.emp_rate is not None:
        est = rep.emp_rate
        z = est.z_score(rep.closed_rate)
        ok = z <= band if est.stderr > 0 else math.isclose(est.mean, rep.closed_rate, rel_tol=1e-9)
        checks.append(("rate", bool(ok), f"z={z:.3g}"))
    return checks


def cmd_validate(cfg: ExperimentConfig) -> int:
    params = cfg.system()
    dd = make_channel(cfg, cfg.realization, cfg.speed_kmh, cfg.err_var)
    ch = tf_from_dd(dd, params.dims)
    try:
        sol = designer.run(
            ch, params, eps=cfg.eps, max_outer=cfg.max_outer, extrapolation=designer.Extrapolation(enabled=cfg.extrapolate)
        )
        v = sol.vars
        source = "design"
    except DesignInfeasible:
        v = designer.initialize(ch, params, zeta=0.5)
        source = "initial point (design infeasible)"
    if cfg.report_ci and cfg.trials < 2:
        log.warning("a confidence interval needs at least 2 trials; reporting zero width")
    mc = linksim.McConfig(trials=cfg.trials, seed=cfg.seed, report_ci=cfg.report_ci, workers=cfg.threads)
    rep = linksim.estimate_moments(v, ch, mc, with_rate={"lam": params.lam, "p_noise": params.p_noise})
    checks = validation_checks(rep, ch.err_var, cfg.trials)
    out = {
        "meta": meta(cfg, "validate"),
        "waveform_source": source,
        "report": rep.to_json(),
        "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in checks],
    }
    _write(dump_json(out), cfg)
    failed = [n for n, p, _ in checks if not p]
    if failed:
        print(f"validation failed: {failed}", file=sys.stderr)
        return EXIT_VALIDATION
    return 0


def cmd_channel_gen(cfg: ExperimentConfig) -> int:
    out = {"meta": meta(cfg, "channel-gen"), "channels": []}
    for k in range(cfg.realizations):
        for v in cfg.speed_list:
            dd = make_channel(cfg, k, float(v), cfg.err_var)
            out["channels"].append(
                {"realization": k, "speed_kmh": float(v), "k_max": doppler_bound(cfg, float(v)), **dd.to_json()}
            )
    _write(dump_json(out), cfg)
    return 0


COMMANDS = {
    "design": cmd_design,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "channel-gen": cmd_channel_gen,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otfsidet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--threads", type=int, help="worker processes")
        p.add_argument("--trials", type=int, help="Monte-Carlo trials")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field (JSON value)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        over = _parse_set(args.set)
        over.update({"seed": args.seed, "out": args.out, "threads": args.threads, "trials": args.trials})
        cfg = load_config(args.config, over)
    except (ConfigError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
