"""Evaluation reports: long-format rows, CSV output and a method-by-metric text table."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ReportRow:
    method: str
    lam: float
    metric: str
    attribute: str
    value: float

    @property
    def scaled(self) -> float:
        return 100.0 * self.value


@dataclass
class EvalReport:
    """One row per (method, lambda, metric, attribute); ranking metrics use attribute "-"."""

    rows: list[ReportRow] = field(default_factory=list)

    def add(self, method: str, lam: float, metric: str, value: float, attribute: str = "-"):
        self.rows.append(ReportRow(method, float(lam), metric, attribute, float(value)))

    def extend(self, other: "EvalReport") -> "EvalReport":
        self.rows.extend(other.rows)
        return self

    def get(self, metric: str, attribute: str = "-", method: str | None = None) -> float:
        for r in self.rows:
            if r.metric == metric and r.attribute == attribute and (method is None or r.method == method):
                return r.value
        raise KeyError((metric, attribute, method))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "lambda", "metric", "attribute", "value", "value_x100"])
            for r in self.rows:
                w.writerow([r.method, f"{r.lam:g}", r.metric, r.attribute,
                            f"{r.value:.6f}", f"{r.scaled:.2f}"])

    @classmethod
    def read_csv(cls, path) -> "EvalReport":
        with open(path, newline="") as fh:
            rows = [ReportRow(d["method"], float(d["lambda"]), d["metric"], d["attribute"],
                              float(d["value"])) for d in csv.DictReader(fh)]
        return cls(rows)

    def table(self) -> str:
        """Metrics as rows, one column per (method, lambda), values shown raw and x100."""
        columns = []
        for r in self.rows:
            key = (r.method, r.lam)
            if key not in columns:
                columns.append(key)
        metrics = []
        for r in self.rows:
            key = (r.metric, r.attribute)
            if key not in metrics:
                metrics.append(key)
        cell = {((r.metric, r.attribute), (r.method, r.lam)): r for r in self.rows}
        header = ["metric"] + [f"{m} (lambda={lam:g})" for m, lam in columns]
        lines = [header]
        for mkey in metrics:
            name = mkey[0] if mkey[1] == "-" else f"{mkey[0]}[{mkey[1]}]"
            row = [name]
            for ckey in columns:
                r = cell.get((mkey, ckey))
                row.append("" if r is None else f"{r.value:.4f} ({r.scaled:.1f})")
            lines.append(row)
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        out = []
        for n, line in enumerate(lines):
            out.append("  ".join(s.ljust(w) for s, w in zip(line, widths)).rstrip())
            if n == 0:
                out.append("  ".join("-" * w for w in widths))
        return "\n".join(out)


def evaluate_model(model, data, ks=(10,), attack=None, method: str = "model", lam: float = 0.0,
                   cluster_seed: int = 0):
    """Full protocol for a trained model: ranking, fresh-attacker inference, clustering.

    Returns ``(report, attack_outcome, representations)``.
    """
    from .clustering import kmeans_vmeasure, v_measure
    from .privacy import AttackConfig, attack_representations, user_representations
    from .ranking import RankingResult, evaluate_ranking

    report = EvalReport()
    ranking = evaluate_ranking(model, data, data.test, k=max(ks))
    for k in ks:
        m = RankingResult(ranking.ranks, ranking.n_candidates, k).metrics()
        report.add(method, lam, f"HR@{k}", m["hr"])
        report.add(method, lam, f"NDCG@{k}", m["ndcg"])
    m = ranking.metrics()
    report.add(method, lam, "MRR", m["mrr"])
    report.add(method, lam, "AUC", m["auc"])

    reps = user_representations(model, data)
    outcome = attack_representations(reps, data.table, data.privacy, attack or AttackConfig())
    for res in outcome.results:
        report.add(method, lam, "Precision", res.precision, res.attribute)
        report.add(method, lam, "Recall", res.recall, res.attribute)
        report.add(method, lam, "F1", res.f1, res.attribute)
        report.add(method, lam, "F1-majority", res.majority_f1, res.attribute)
    # identical representations (no transfer) form a single cluster
    single = len(np.unique(reps, axis=0)) < 2
    for p, attr in enumerate(data.table.attributes):
        labels = data.table.values[:, p]
        if single:
            v = v_measure(labels, np.zeros(len(labels), dtype=np.int64))
        else:
            _, v = kmeans_vmeasure(reps, labels, k=2, seed=cluster_seed)
        report.add(method, lam, "V-measure", v, attr.name)
    return report, outcome, reps


def write_embeddings(path, reps, user_ids=None):
    """One line per user: ``user_id<TAB>v1,...,vk``."""
    ids = range(len(reps)) if user_ids is None else user_ids
    with open(path, "w") as fh:
        for uid, row in zip(ids, reps):
            fh.write(f"{uid}\t" + ",".join(f"{v:.17g}" for v in row) + "\n")


def read_embeddings(path):
    ids, rows = [], []
    with open(path) as fh:
        for line in fh:
            uid, values = line.rstrip("\n").split("\t")
            ids.append(int(uid))
            rows.append([float(v) for v in values.split(",")])
    return np.array(ids, dtype=np.int64), np.array(rows)
