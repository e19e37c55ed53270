"""Re-derive every logged MECLatency quantity from a trace, one user at a time.

Deliberately written with scalar ``math`` loops and no calls into
``dressrl.wireless`` beyond reading the config, so that it checks the
vectorised environment code rather than repeating it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

SENTINEL = 1e9


@dataclass
class ReplayReport:
    rows: int
    max_abs_error: float
    max_scaled_error: float
    worst_field: str
    case_mismatches: int

    def ok(self, tol: float = 1e-9) -> bool:
        return self.case_mismatches == 0 and self.max_abs_error < tol


def _read(path: str | Path) -> tuple[dict, list[dict]]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# config: "):
            raise ValueError(f"{path}: missing '# config:' header line")
        config = json.loads(first[len("# config: "):])
        rows = list(csv.DictReader(fh))
    return config, rows


def recompute_row(cfg: dict, row: dict) -> dict:
    n = int(cfg["n_users"])
    radius = cfg["cell_diameter"] / 2.0
    x = [float(row[f"x_{i}"]) for i in range(n)]
    g = [float(row[f"g_{i}"]) for i in range(n)]
    d = [float(row[f"d_{i}"]) for i in range(n)]
    rho = [int(row[f"rho_{i}"]) for i in range(n)]
    active = [row[f"active_{i}"] == "1" for i in range(n)]
    b = [float(row[f"b_{i}"]) if active[i] else 0.0 for i in range(n)]
    p = [float(row[f"p_{i}"]) if active[i] else 0.0 for i in range(n)]
    c = [float(row[f"c_{i}"]) if active[i] else 0.0 for i in range(n)]

    received = []
    for i in range(n):
        dist = max(x[i] * radius, cfg["d_min"])
        received.append(p[i] * cfg["P_max"] * dist ** (-cfg["alpha_pathloss"]) * g[i])
    sinr, T, L, S = [], [], [], []
    for i in range(n):
        interference = 0.0
        for j in range(n):
            if j != i:
                interference += received[j]
        s = received[i] / (interference + cfg["noise_power"])
        t = b[i] * cfg["B_max"] * math.log2(1.0 + s)
        if active[i] and t > 0.0 and c[i] > 0.0:
            lat = min(d[i] / t + d[i] / (c[i] * cfg["C_max"]), SENTINEL)
        else:
            lat = SENTINEL
        sinr.append(s)
        T.append(t)
        L.append(lat)
        S.append(1.0 / lat if active[i] else 0.0)

    counted = [i for i in range(n) if active[i] or cfg.get("departed_unserved", False)]
    if not counted or any(L[i] > cfg["latency_limit"] for i in counted):
        reward, case = 0.0, "NoFeedback"
    else:
        penalty = 0.0
        for i in counted:
            excess = L[i] - cfg["latency_limit"]
            if cfg.get("clamp_latency_penalty", False):
                excess = max(excess, 0.0)
            penalty += excess
        impatience = sum(cfg["mu_penalty"] for i in counted if rho[i] <= cfg["patience_threshold"])
        reward = sum(S[i] for i in counted) - cfg["lambda_penalty"] * penalty - impatience
        case = "Degraded"
    return {"sinr": sinr, "T": T, "L": L, "S": S, "r_E": reward, "case": case}


def replay_trace(path: str | Path) -> ReplayReport:
    """Compare every logged SINR, throughput, latency, service rate and
    reward against the recomputation.

    Pass/fail uses the absolute error. ``|a - b| / max(1, |b|)`` is also
    reported since SINR near the base station reaches 1e8, where one ulp of
    disagreement would already exceed 1e-9.
    """
    cfg, rows = _read(path)
    n = int(cfg["n_users"])
    worst, worst_scaled, worst_field, mismatches = 0.0, 0.0, "", 0
    for k, row in enumerate(rows):
        ref = recompute_row(cfg, row)
        pairs = [(f"{k}_{i}", ref[k][i]) for k in ("sinr", "T", "L", "S") for i in range(n)]
        pairs.append(("r_E", ref["r_E"]))
        for name, expected in pairs:
            err = abs(float(row[name]) - expected)
            scaled = err / max(1.0, abs(expected))
            worst = max(worst, err)
            if scaled > worst_scaled:
                worst_scaled, worst_field = scaled, f"row {k} (t={row['t']}) {name}"
        mismatches += row["case"] != ref["case"]
    return ReplayReport(len(rows), worst, worst_scaled, worst_field, mismatches)
