"""Time-indexed run records shared by all simulators.

The on-disk trace schema is fixed: columns t, err_x, z_mean_norm, lyap,
comm_total (lyap blank when no certificate was attached).  Per-agent data
and extra monitor channels stay in memory; the benchmark runner surfaces
their summaries in summary.json.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = ("t", "err_x", "z_mean_norm", "lyap", "comm_total")


@dataclass
class Trace:
    t: np.ndarray
    err_x: np.ndarray
    z_mean_norm: np.ndarray
    comm_total: np.ndarray
    lyap: np.ndarray | None = None
    per_agent_err: np.ndarray | None = None  # (samples, N)
    per_agent_comm: np.ndarray | None = None  # (samples, N)
    monitors: dict = field(default_factory=dict)
    states_x: np.ndarray | None = None  # (samples, N d), only when recorded
    states_z: np.ndarray | None = None

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            lyap = self.lyap
            for k in range(len(self.t)):
                writer.writerow(
                    [
                        repr(float(self.t[k])),
                        repr(float(self.err_x[k])),
                        repr(float(self.z_mean_norm[k])),
                        "" if lyap is None else repr(float(lyap[k])),
                        int(self.comm_total[k]),
                    ]
                )

    @classmethod
    def from_csv(cls, path) -> "Trace":
        rows = {name: [] for name in TRACE_COLUMNS}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header {reader.fieldnames}")
            for row in reader:
                for name in TRACE_COLUMNS:
                    rows[name].append(row[name])
        lyap = None
        if any(v != "" for v in rows["lyap"]):
            lyap = np.array([float(v) if v else np.nan for v in rows["lyap"]])
        return cls(
            t=np.array([float(v) for v in rows["t"]]),
            err_x=np.array([float(v) for v in rows["err_x"]]),
            z_mean_norm=np.array([float(v) for v in rows["z_mean_norm"]]),
            comm_total=np.array([int(v) for v in rows["comm_total"]]),
            lyap=lyap,
        )


@dataclass
class EventLog:
    """Broadcast events: (time, agent, kind) with kind in sync/async/initial."""

    events: list = field(default_factory=list)
    n_agents: int = 0

    def append(self, t: float, agent: int, kind: str):
        self.events.append((float(t), int(agent), kind))

    def __len__(self):
        return len(self.events)

    def times_for(self, agent: int) -> np.ndarray:
        return np.array([t for t, a, _ in self.events if a == agent])

    def per_agent_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_agents, dtype=int)
        for _, a, _ in self.events:
            counts[a] += 1
        return counts

    def min_gap(self, agent: int) -> float:
        times = self.times_for(agent)
        if len(times) < 2:
            return np.inf
        return float(np.min(np.diff(times)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "agent_id", "kind"])
            for t, a, kind in self.events:
                writer.writerow([repr(t), a + 1, kind])

    @classmethod
    def from_csv(cls, path, n_agents: int = 0) -> "EventLog":
        log = cls(n_agents=n_agents)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                log.append(float(row["t"]), int(row["agent_id"]) - 1, row["kind"])
        log.n_agents = max(n_agents, 1 + max((a for _, a, _ in log.events), default=-1))
        return log


def fit_decay_rate(t: np.ndarray, err: np.ndarray, window: tuple = (0.25, 0.75)):
    """Least-squares slope of log(err) over a fractional time window.

    Returns (rate, r_squared) where rate = -slope, so positive means decay.
    Samples at or below the floor of the trajectory noise are excluded.
    """
    t = np.asarray(t, dtype=float)
    err = np.asarray(err, dtype=float)
    lo = t[0] + window[0] * (t[-1] - t[0])
    hi = t[0] + window[1] * (t[-1] - t[0])
    keep = (t >= lo) & (t <= hi) & (err > max(err[0] * 1e-13, 1e-300))
    if keep.sum() < 3:
        raise ValueError("not enough samples in the fit window")
    tt, yy = t[keep], np.log(err[keep])
    slope, intercept = np.polyfit(tt, yy, 1)
    pred = slope * tt + intercept
    ss_res = float(np.sum((yy - pred) ** 2))
    ss_tot = float(np.sum((yy - yy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), float(r2)
