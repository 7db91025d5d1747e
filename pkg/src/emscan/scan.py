"""Scan planning and execution: serpentine raster, hop schedule, pipeline.

A scan visits an az/el grid in boustrophedon order (elevation rows bottom
to top, azimuth direction alternating per row) so the rotor never makes a
long flyback.  At each pixel the radio hops across the band plan, also in
alternating order, and per-hop powers are integrated into one pixel value.

Execution is split into an acquisition stage (rotor moves + captures) and
a processing stage (power estimation + integration) connected by a bounded
queue, so processing can lag acquisition by at most ``pipeline_depth``
pixels without ever changing the result.
"""

from __future__ import annotations

import csv
import math
import queue
import threading
from dataclasses import dataclass, replace

import numpy as np

from .geometry import AngularPose
from .heatmap import Heatmap, axis_centers_deg
from .protocol import RotorClient, RotorError
from .sdr import CaptureBackend, CaptureError, CaptureRequest, capture_power, dbfs_to_dbm

DEFAULT_SETTLE_S = 0.5
MIN_SETTLE_S = 0.5


@dataclass(frozen=True)
class ScanPlan:
    """Grid, band plan, and dwell policy for one scan.

    Grid pixels are placed at the endpoints-inclusive linspace over each
    range; a single-pixel axis sits at the range midpoint.  ``settle_s``
    below the 0.5 s mechanical settle floor is refused unless
    ``unsafe_settle`` is set (bench use with the rotor unpowered).
    """

    az_range_deg: tuple[float, float]
    el_range_deg: tuple[float, float]
    az_pixels: int
    el_pixels: int
    hops: tuple[CaptureRequest, ...]
    settle_s: float = DEFAULT_SETTLE_S
    unsafe_settle: bool = False

    def __post_init__(self) -> None:
        for name, (lo, hi) in (
            ("az", self.az_range_deg),
            ("el", self.el_range_deg),
        ):
            if not lo < hi:
                raise ValueError(f"{name} range must satisfy min < max")
        if self.az_pixels < 1 or self.el_pixels < 1:
            raise ValueError("pixel counts must be >= 1")
        if not self.hops:
            raise ValueError("a scan needs at least one hop")
        if self.settle_s < 0:
            raise ValueError("settle time cannot be negative")
        if self.settle_s < MIN_SETTLE_S and not self.unsafe_settle:
            raise ValueError(
                f"settle {self.settle_s:g} s is below the {MIN_SETTLE_S:g} s "
                f"mechanical floor; set unsafe_settle to override on a bench"
            )

    def az_values_deg(self) -> list[float]:
        return axis_centers_deg(self.az_range_deg, self.az_pixels)

    def el_values_deg(self) -> list[float]:
        return axis_centers_deg(self.el_range_deg, self.el_pixels)

    def pose_at(self, i_az: int, i_el: int) -> AngularPose:
        return AngularPose(
            az_deg=self.az_values_deg()[i_az],
            el_deg=self.el_values_deg()[i_el],
        )

    def pixel_count(self) -> int:
        return self.az_pixels * self.el_pixels

    def dwell_s(self) -> float:
        """Time spent on one pixel: settle floor or total capture time."""
        return max(self.settle_s, sum(h.duration_s for h in self.hops))

    def band_label(self) -> str:
        lo = min(h.band_hz()[0] for h in self.hops)
        hi = max(h.band_hz()[1] for h in self.hops)
        return f"{lo / 1e6:g}-{hi / 1e6:g} MHz"


def build_hop_plan(
    band_hz: tuple[float, float],
    hop_bandwidth_hz: float,
    hop_duration_s: float,
) -> tuple[CaptureRequest, ...]:
    """Partition a band into contiguous equal-width hops.

    The band width must be an integer multiple of the hop bandwidth; the
    error message suggests the nearest widths that would tile.
    """
    lo, hi = band_hz
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < lo < hi")
    if hop_bandwidth_hz <= 0:
        raise ValueError("hop bandwidth must be positive")
    width = hi - lo
    ratio = width / hop_bandwidth_hz
    count = round(ratio)
    if count < 1 or abs(ratio - count) > 1e-6:
        below = max(1, math.floor(ratio))
        above = math.ceil(ratio) if ratio > 1 else 1
        options = sorted({below, above if above > 0 else 1})
        hints = ", ".join(
            f"{width / n / 1e6:g} MHz ({n} hop{'s' if n != 1 else ''})"
            for n in options
        )
        raise ValueError(
            f"band width {width / 1e6:g} MHz is not an integer multiple of "
            f"hop bandwidth {hop_bandwidth_hz / 1e6:g} MHz; "
            f"nearest tiling hop bandwidths: {hints}"
        )
    return tuple(
        CaptureRequest(
            center_frequency_hz=lo + (i + 0.5) * hop_bandwidth_hz,
            bandwidth_hz=hop_bandwidth_hz,
            duration_s=hop_duration_s,
        )
        for i in range(count)
    )


def pixel_order(plan: ScanPlan) -> list[tuple[int, int]]:
    """Serpentine visit order as (i_az, i_el) pairs.

    Elevation rows ascend; even rows sweep azimuth ascending, odd rows
    descending, so consecutive pixels are always grid neighbors.
    """
    order: list[tuple[int, int]] = []
    for i_el in range(plan.el_pixels):
        cols = range(plan.az_pixels)
        if i_el % 2 == 1:
            cols = reversed(cols)
        order.extend((i_az, i_el) for i_az in cols)
    return order


def hop_order(plan: ScanPlan, pixel_seq: int) -> list[int]:
    """Hop visit order at the ``pixel_seq``-th visited pixel.

    Ascending on even pixels, descending on odd, so the tuner also sweeps
    back and forth instead of retuning across the whole band each pixel.
    """
    hops = list(range(len(plan.hops)))
    return hops if pixel_seq % 2 == 0 else hops[::-1]


def estimate_duration_s(plan: ScanPlan) -> float:
    """Scan duration: pixels times the per-pixel dwell."""
    return plan.pixel_count() * plan.dwell_s()


def integrate_hops(per_hop_dbm: list[float] | tuple[float, ...]) -> float:
    """Total power across hops: linear-milliwatt sum of the inputs.

    Result is at least the largest input and at most that plus
    10*log10(number of hops).
    """
    if len(per_hop_dbm) == 0:
        raise ValueError("cannot integrate zero hops")
    return 10.0 * math.log10(sum(10.0 ** (p / 10.0) for p in per_hop_dbm))


def derive_capture_seed(run_seed: int, pixel_seq: int, hop_index: int) -> int:
    """Stable per-capture seed from the run seed and schedule position."""
    ss = np.random.SeedSequence([run_seed, pixel_seq, hop_index])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PixelRecord:
    """One visited pixel, in acquisition order."""

    seq: int
    i_az: int
    i_el: int
    az_deg: float
    el_deg: float
    t_offset_s: float
    per_hop_dbm: tuple[float, ...]
    integrated_dbm: float
    valid: bool = True


@dataclass
class ScanResult:
    heatmap: Heatmap
    records: list[PixelRecord]
    invalid_pixels: int
    complete: bool
    duration_s: float


def execute_scan(
    plan: ScanPlan,
    client: RotorClient,
    backend: CaptureBackend,
    sink=None,
    *,
    seed: int | None = None,
    pipeline_depth: int = 1,
    sleep_fn=None,
) -> ScanResult:
    """Run a plan against a rotor client and a capture backend.

    ``sink`` (if given) receives each PixelRecord as processing finishes.
    ``seed`` makes every capture deterministic via per-capture derived
    seeds; the result is then independent of ``pipeline_depth``.
    ``sleep_fn`` (e.g. ``time.sleep``) paces real hardware; simulation
    keeps a virtual clock instead.  A rotor failure aborts the scan and
    returns the pixels acquired so far with ``complete`` False; a capture
    failure marks that pixel invalid and continues.
    """
    if pipeline_depth < 1:
        raise ValueError("pipeline depth must be >= 1")
    # Surface travel violations before touching the hardware.
    for az in plan.az_range_deg:
        _check_travel(client, az, plan.el_range_deg[0])
    for el in plan.el_range_deg:
        _check_travel(client, plan.az_range_deg[0], el)

    if not client.homed:
        client.home()

    n_hops = len(plan.hops)
    work: queue.Queue = queue.Queue(maxsize=pipeline_depth)
    records: list[PixelRecord] = []
    failures: list[BaseException] = []

    def process() -> None:
        while True:
            item = work.get()
            if item is None:
                return
            seq, i_az, i_el, pose, captures, t_offset = item
            try:
                if captures is None:
                    per_hop = (math.nan,) * n_hops
                    integrated = math.nan
                    valid = False
                else:
                    levels = [math.nan] * n_hops
                    for hop_index, cap in captures:
                        levels[hop_index] = dbfs_to_dbm(
                            capture_power(cap), backend.calibration_offset_db
                        )
                    per_hop = tuple(levels)
                    integrated = integrate_hops(levels)
                    valid = True
                record = PixelRecord(
                    seq=seq,
                    i_az=i_az,
                    i_el=i_el,
                    az_deg=pose.az_deg,
                    el_deg=pose.el_deg,
                    t_offset_s=t_offset,
                    per_hop_dbm=per_hop,
                    integrated_dbm=integrated,
                    valid=valid,
                )
                records.append(record)
                if sink is not None:
                    sink(record)
            except BaseException as exc:  # propagate to the caller
                failures.append(exc)
                return

    worker = threading.Thread(target=process, name="scan-process", daemon=True)
    worker.start()

    def enqueue(item) -> bool:
        # Never block forever on a queue whose consumer has died.
        while True:
            try:
                work.put(item, timeout=0.05)
                return True
            except queue.Full:
                if failures or not worker.is_alive():
                    return False

    clock_s = 0.0
    complete = True
    try:
        for seq, (i_az, i_el) in enumerate(pixel_order(plan)):
            pose = plan.pose_at(i_az, i_el)
            try:
                client.move_to(pose, settle_s=plan.settle_s)
            except RotorError:
                complete = False
                break
            if sleep_fn is not None:
                sleep_fn(plan.settle_s)
            backend.notify_pose(pose)
            captures: list[tuple[int, object]] | None = []
            for hop_index in hop_order(plan, seq):
                request = plan.hops[hop_index]
                if seed is not None:
                    request = replace(
                        request, seed=derive_capture_seed(seed, seq, hop_index)
                    )
                try:
                    captures.append((hop_index, backend.capture(request)))
                except CaptureError:
                    captures = None
                    break
            if failures or not enqueue((seq, i_az, i_el, pose, captures, clock_s)):
                break
            clock_s += plan.dwell_s()
    finally:
        enqueue(None)
        worker.join()
    if failures:
        raise failures[0]

    grid = np.full((plan.el_pixels, plan.az_pixels), np.nan)
    invalid = np.ones((plan.el_pixels, plan.az_pixels), dtype=bool)
    invalid_pixels = 0
    for record in records:
        if record.valid:
            grid[record.i_el, record.i_az] = record.integrated_dbm
            invalid[record.i_el, record.i_az] = False
        else:
            invalid_pixels += 1
    if len(records) < plan.pixel_count():
        complete = False
    heatmap = Heatmap(
        values=grid,
        az_range_deg=plan.az_range_deg,
        el_range_deg=plan.el_range_deg,
        band=plan.band_label(),
        invalid=invalid,
    )
    return ScanResult(
        heatmap=heatmap,
        records=records,
        invalid_pixels=invalid_pixels,
        complete=complete,
        duration_s=clock_s,
    )


def _check_travel(client: RotorClient, az_deg: float, el_deg: float) -> None:
    from . import rotor as _rotor

    _rotor.angle_to_steps(client.config, _rotor.Axis.AZ, az_deg)
    _rotor.angle_to_steps(client.config, _rotor.Axis.EL, el_deg)


# ---------------------------------------------------------------------------
# Pixel log files
# ---------------------------------------------------------------------------


def write_pixel_log(records: list[PixelRecord], n_hops: int, path: str) -> None:
    """CSV of every visited pixel in acquisition order (floats via repr).

    Header: i_az,i_el,az_deg,el_deg,t_offset_s,hop0_dbm,...,integrated_dbm.
    Invalid pixels carry nan in every power column.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["i_az", "i_el", "az_deg", "el_deg", "t_offset_s"]
        header += [f"hop{i}_dbm" for i in range(n_hops)]
        header += ["integrated_dbm"]
        writer.writerow(header)
        for r in records:
            row = [
                r.i_az,
                r.i_el,
                repr(r.az_deg),
                repr(r.el_deg),
                repr(r.t_offset_s),
            ]
            row += [repr(v) for v in r.per_hop_dbm]
            row += [repr(r.integrated_dbm)]
            writer.writerow(row)


def read_pixel_log(path: str) -> list[PixelRecord]:
    """Read back a pixel log written by :func:`write_pixel_log`."""
    records: list[PixelRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        hop_cols = [i for i, name in enumerate(header) if name.startswith("hop")]
        for seq, row in enumerate(reader):
            integrated = float(row[hop_cols[-1] + 1])
            records.append(
                PixelRecord(
                    seq=seq,
                    i_az=int(row[0]),
                    i_el=int(row[1]),
                    az_deg=float(row[2]),
                    el_deg=float(row[3]),
                    t_offset_s=float(row[4]),
                    per_hop_dbm=tuple(float(row[i]) for i in hop_cols),
                    integrated_dbm=integrated,
                    valid=not math.isnan(integrated),
                )
            )
    return records
