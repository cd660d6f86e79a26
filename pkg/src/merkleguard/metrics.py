"""Time-binned traffic sent/received, end-to-end delay and network load."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = ("time", "sent_pps", "received_pps", "mean_delay_s", "load_bps")


class ClockError(RuntimeError):
    pass


@dataclass
class MetricsSeries:
    t_end: float
    bin_width: float = 10.0
    sent_pkts: list[int] = field(init=False)
    received_pkts: list[int] = field(init=False)
    load_bits: list[int] = field(init=False)
    delay_samples: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        n = math.ceil(self.t_end / self.bin_width - 1e-9)
        self.sent_pkts = [0] * n
        self.received_pkts = [0] * n
        self.load_bits = [0] * n

    @property
    def n_bins(self) -> int:
        return len(self.sent_pkts)

    def bin_of(self, time: float) -> int:
        # the final instant t_end belongs to the last bin
        return min(int(time // self.bin_width), self.n_bins - 1)

    def record_sent(self, time: float) -> None:
        self.sent_pkts[self.bin_of(time)] += 1

    def record_received(self, time: float) -> None:
        self.received_pkts[self.bin_of(time)] += 1

    def record_delay(self, sent_time: float, received_time: float) -> None:
        if received_time < sent_time:
            raise ClockError(f"negative delay: sent {sent_time} received {received_time}")
        self.delay_samples.append((received_time, received_time - sent_time))

    def record_load(self, bits: int, time: float) -> None:
        self.load_bits[self.bin_of(time)] += bits

    # -- summaries ------------------------------------------------------------

    def bin_duration(self, i: int) -> float:
        return min(self.bin_width, self.t_end - i * self.bin_width)

    def mean_delays(self) -> list[float]:
        sums = [0.0] * self.n_bins
        counts = [0] * self.n_bins
        for t, d in self.delay_samples:
            b = self.bin_of(t)
            sums[b] += d
            counts[b] += 1
        return [s / c if c else 0.0 for s, c in zip(sums, counts)]

    def mean_delay(self, after: float = 0.0) -> float:
        samples = [d for t, d in self.delay_samples if t > after]
        return sum(samples) / len(samples) if samples else math.nan

    def mean_load_bps(self) -> float:
        return sum(self.load_bits) / self.t_end

    def rows(self) -> list[tuple[float, float, float, float, float]]:
        delays = self.mean_delays()
        out = []
        for i in range(self.n_bins):
            width = self.bin_duration(i)
            out.append((i * self.bin_width, self.sent_pkts[i] / width, self.received_pkts[i] / width,
                        delays[i], self.load_bits[i] / width))
        return out


def export_csv(series: MetricsSeries, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t, sent, received, delay, load in series.rows():
            writer.writerow([f"{t:.3f}", f"{sent:.6f}", f"{received:.6f}", f"{delay:.9f}",
                             f"{load:.3f}"])
    return path
