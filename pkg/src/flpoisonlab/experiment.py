"""Run experiments from an ``ExperimentConfig`` and write their outputs.

Each run directory receives::

    config.resolved      fully expanded config (re-runnable as is)
    metrics.csv          one row per (round, model): global, clients, attackers
    trace.jsonl          attacker diagnostics and detection reports per round
    plotdata/*.dat       whitespace-separated series for external plotting
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import DualSettings, VgaeMpAttacker, VgaeSettings
from .baselines import BaselineAttacker, BaselineConfig
from .config import ExperimentConfig, with_overrides
from .data import ClientDataset, Dataset, PartitionPlan, load_named, partition, synthetic_split
from .defense import KrumDefense
from .errors import ConfigError
from .fl import Federation, FlConfig, RoundLedger

logger = logging.getLogger(__name__)

METRICS_HEADER = [
    "round", "model", "kind", "accuracy", "loss", "distance_to_global",
    "flagged", "lambda", "rho", "eta_loss_final",
]
SWEEP_AXES = {"J": "attackers", "I": "clients", "M": "m", "n_eavesdropped": "n_eavesdropped"}
TAIL = 10


# -------------------------------------------------------------- assembly


def build_clients(cfg: ExperimentConfig) -> tuple[list[ClientDataset], Dataset]:
    if cfg.dataset == "synthetic":
        s = cfg.synthetic
        spc = cfg.samples_per_client or 2000
        need = cfg.clients * spc
        per_class = math.ceil(need / s.classes) if cfg.partition == "iid" else need
        train, test = synthetic_split(s.classes, s.dim, per_class, s.per_class_test, cfg.seed, s.sigma)
    else:
        train, test = load_named(cfg.dataset)
        spc = cfg.samples_per_client or len(train) // cfg.clients
    plan = PartitionPlan(cfg.clients, spc, cfg.partition, cfg.seed)
    return partition(train, plan, test), test


def fl_config(cfg: ExperimentConfig) -> FlConfig:
    return FlConfig(
        clients=cfg.clients,
        attackers=cfg.effective_attackers,
        rounds=cfg.rounds,
        local_iters=cfg.local_iters,
        learning_rate=cfg.learning_rate,
        reg_coeff=cfg.reg_coeff,
        batch_size=cfg.batch_size,
        claimed_size=cfg.claimed_size,
        jobs=cfg.jobs,
    )


def build_attackers(cfg: ExperimentConfig) -> list:
    kind = cfg.attack.kind
    n = cfg.effective_attackers
    if kind == "vgae_mp":
        v, d = cfg.vgae, cfg.duals
        vs = VgaeSettings(m=cfg.m, h1=v.h1, h2=v.h2, lr=v.lr, epochs=v.epochs, k=v.k, minimize=v.minimize)
        ds = DualSettings(d.d_t_mode, d.upsilon_mode, d.step, d.lam0, d.rho0)
        return [VgaeMpAttacker(j, cfg.seed, vs, ds) for j in range(n)]
    if kind in ("mp", "rmp"):
        bc = BaselineConfig(kind, cfg.attack.rmp_scale, cfg.attack.mp_push)
        return [BaselineAttacker(j, cfg.seed, bc) for j in range(n)]
    return []


def build_defense(cfg: ExperimentConfig) -> KrumDefense:
    f = cfg.defense.f if cfg.defense.f is not None else cfg.effective_attackers
    return KrumDefense(f, cfg.defense.mode)


# ---------------------------------------------------------------- output


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return f"{float(x):.10g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        items = sorted(obj) if isinstance(obj, set) else obj
        return [_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(f"{float(obj):.12g}")
    return obj


def metrics_rows(ledger: Sequence[RoundLedger]) -> list[list[str]]:
    rows = []
    for e in ledger:
        flagged = e.defense_report.flagged if e.defense_report is not None else set()
        nb = len(e.benign_models)
        rows.append([str(e.round), "global", "global", _num(e.global_accuracy), _num(e.global_loss),
                     _num(e.global_distance), "", "", "", ""])
        for i in range(nb):
            rows.append([str(e.round), f"client_{i}", "benign", _num(e.per_client_accuracy[i]),
                         _num(e.client_losses[i]), _num(e.distances[i]), _num(i in flagged), "", "", ""])
        for j, diag in enumerate(e.attack_diagnostics):
            eta = diag.get("eta_loss")
            rows.append([str(e.round), f"attacker_{j}", diag["kind"], _num(e.malicious_accuracy[j]), "",
                         _num(e.distances[nb + j]), _num(nb + j in flagged), _num(diag.get("lambda")),
                         _num(diag.get("rho")), _num(eta[-1] if eta else None)])
    return rows


def write_metrics(path: Path, ledger: Sequence[RoundLedger]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    w.writerows(metrics_rows(ledger))
    path.write_text(buf.getvalue())


def write_trace(path: Path, ledger: Sequence[RoundLedger]) -> None:
    with path.open("w") as fh:
        for e in ledger:
            for j, diag in enumerate(e.attack_diagnostics):
                rec = {"type": "attack", "round": e.round, "attacker": j, **diag}
                fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
            if e.defense_report is not None:
                rec = {"type": "detection", **e.defense_report.to_json()}
                fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def _write_dat(path: Path, header: Sequence[str], rows) -> None:
    lines = ["# " + " ".join(header)]
    lines += [" ".join(v if isinstance(v, str) else _num(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


@dataclass
class RunSummary:
    accuracies: list[float]
    final_accuracy: float
    tail_mean: float
    tail_std: float  # std of global accuracy over rounds 10..end
    label: str
    out_dir: Path

    @classmethod
    def from_ledger(cls, ledger: Sequence[RoundLedger], label: str, out_dir: Path) -> "RunSummary":
        acc = [e.global_accuracy for e in ledger]
        return cls(acc, acc[-1], float(np.mean(acc[-TAIL:])), fluctuation(acc), label, out_dir)


def fluctuation(acc: Sequence[float], start: int = 10) -> float:
    """Population std of per-round accuracy over rounds ``start..end`` (1-based)."""
    window = list(acc)[start - 1 :] if len(acc) >= start else list(acc)
    return float(np.std(window))


def write_plotdata(root: Path, ledger: Sequence[RoundLedger], summary: RunSummary, cfg: ExperimentConfig) -> None:
    root.mkdir(parents=True, exist_ok=True)
    nb = cfg.clients
    nm = len(ledger[0].malicious_models) if ledger else 0
    names = [f"client_{i}" for i in range(nb)] + [f"attacker_{j}" for j in range(nm)]
    _write_dat(root / "fig3_accuracy_per_client.dat", ["round", "global", *names],
               [[e.round, e.global_accuracy, *e.per_client_accuracy, *e.malicious_accuracy] for e in ledger])
    _write_dat(root / "fig4_global_accuracy.dat", ["label", "mean_last10", "std_round10_on"],
               [[summary.label, summary.tail_mean, summary.tail_std]])
    _write_dat(root / "fig5_accuracy_vs_J.dat", ["J", "mean_last10"],
               [[cfg.effective_attackers, summary.tail_mean]])
    _write_dat(root / "fig6_distance.dat", ["round", *names], [[e.round, *e.distances] for e in ledger])
    _write_dat(root / "fig7_accuracy_vs_eavesdropped.dat", ["n_eavesdropped", "mean_last10"],
               [[cfg.n_eavesdropped or cfg.clients, summary.tail_mean]])


def summary_table(s: RunSummary, ledger: Sequence[RoundLedger]) -> str:
    last = ledger[-1]
    nb = len(last.benign_models)
    mal = last.distances[nb:]
    lines = [
        f"run               {s.label}",
        f"rounds            {len(s.accuracies)}",
        f"final accuracy    {s.final_accuracy:.4f}",
        f"mean last {TAIL:<2}      {s.tail_mean:.4f}",
        f"std round 10+     {s.tail_std:.4f}",
        f"max benign dist   {max(last.distances[:nb]):.4g}",
    ]
    if mal:
        lines.append(f"max attacker dist {max(mal):.4g}")
    return "\n".join(lines)


# ------------------------------------------------------------------- runs


def run_experiment(cfg: ExperimentConfig, out_dir: Path | str | None = None, quiet: bool = False) -> RunSummary:
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.dump())

    clients, test = build_clients(cfg)
    fed = Federation(clients, test, fl_config(cfg), cfg.seed)
    attackers = build_attackers(cfg)
    defense = build_defense(cfg)
    n_eav = cfg.n_eavesdropped

    def eavesdrop(j: int, n: int) -> int:
        return n if n_eav is None else min(n_eav, n)

    for _ in range(cfg.rounds):
        entry = fed.run_round(attackers, defense, eavesdrop)
        logger.info("round %d global accuracy %.4f", entry.round, entry.global_accuracy)

    label = cfg.attack.kind if cfg.effective_attackers else "none"
    if label == "mp":
        label = "mp-surrogate"
    summary = RunSummary.from_ledger(fed.ledger, f"{label}_M{cfg.m}", out)
    write_metrics(out / "metrics.csv", fed.ledger)
    write_trace(out / "trace.jsonl", fed.ledger)
    write_plotdata(out / "plotdata", fed.ledger, summary, cfg)
    if not quiet:
        print(summary_table(summary, fed.ledger))
    return summary


def _sweep_one(args) -> RunSummary:
    cfg, out = args
    return run_experiment(cfg, out, quiet=True)


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence, out_dir: Path | str | None = None,
          jobs: int = 1) -> list[tuple[object, RunSummary]]:
    """One run per value of ``axis``; writes ``sweep.csv`` and a matching ``.dat`` series.

    Rows are appended as runs finish, so a failing run leaves the
    completed rows on disk before the error propagates.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = [(with_overrides(cfg, **{SWEEP_AXES[axis]: v}), out / f"{axis}={v}") for v in values]

    results: list[tuple[object, RunSummary]] = []
    csv_path = out / "sweep.csv"
    csv_path.write_text(f"{axis},final_accuracy,mean_last10,std_round10_on\n")

    def record(v, s: RunSummary) -> None:
        results.append((v, s))
        with csv_path.open("a") as fh:
            fh.write(f"{v},{_num(s.final_accuracy)},{_num(s.tail_mean)},{_num(s.tail_std)}\n")

    if jobs > 1 and len(runs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for v, s in zip(values, pool.map(_sweep_one, runs)):
                record(v, s)
    else:
        for v, run in zip(values, runs):
            record(v, _sweep_one(run))

    name = {"J": "fig5_accuracy_vs_J.dat", "n_eavesdropped": "fig7_accuracy_vs_eavesdropped.dat"}.get(
        axis, f"sweep_{axis}.dat")
    (out / "plotdata").mkdir(exist_ok=True)
    _write_dat(out / "plotdata" / name, [axis, "mean_last10", "std_round10_on"],
               [[str(v), s.tail_mean, s.tail_std] for v, s in results])
    return results
