from __future__ import annotations

import math
from pathlib import Path

from ..dsp.features import DspConfig
from ..errors import AlignmentError, MismatchError

MAX_SLACK_FRAMES = 2


def read_alignment_tsv(path) -> list[tuple[str, float, float]]:
    """Parse ``phone<TAB>start_sec<TAB>end_sec`` lines (blank lines ignored)."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise AlignmentError(f"{path}:{lineno}: expected 3 tab-separated fields")
        try:
            rows.append((parts[0], float(parts[1]), float(parts[2])))
        except ValueError:
            raise AlignmentError(f"{path}:{lineno}: bad time value") from None
    return rows


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def intervals_to_durations(
    intervals: list[tuple[str, float, float]], cfg: DspConfig, mel_frames: int, tol: float = 1e-6
) -> tuple[list[str], list[int]]:
    """Convert contiguous phone intervals in seconds to frame counts.

    Boundaries are rounded cumulatively so per-phone rounding never
    drifts; the last phone then absorbs a difference of up to two frames
    against ``mel_frames``.
    """
    if not intervals:
        raise AlignmentError("empty alignment")
    frames_per_sec = cfg.sample_rate / cfg.hop
    prev_end = None
    for ph, start, end in intervals:
        if end < start:
            raise AlignmentError(f"phone {ph!r}: end {end} precedes start {start}")
        if prev_end is not None and abs(start - prev_end) > tol:
            kind = "overlaps" if start < prev_end else "leaves a gap after"
            raise AlignmentError(f"phone {ph!r} at {start} {kind} the previous phone ending at {prev_end}")
        prev_end = end
    bounds = [_round_half_up(intervals[0][1] * frames_per_sec)]
    bounds += [_round_half_up(end * frames_per_sec) for _, _, end in intervals]
    durations = [b - a for a, b in zip(bounds, bounds[1:])]
    diff = mel_frames - sum(durations)
    if abs(diff) > MAX_SLACK_FRAMES:
        raise MismatchError(f"alignment covers {sum(durations)} frames, mel has {mel_frames}")
    durations[-1] += diff
    if any(d < 1 for d in durations):
        bad = [intervals[i][0] for i, d in enumerate(durations) if d < 1]
        raise AlignmentError(f"phones {bad} round to zero frames")
    return [ph for ph, _, _ in intervals], durations


def ingest_alignment(path, cfg: DspConfig, mel_frames: int) -> list[int]:
    _, durations = intervals_to_durations(read_alignment_tsv(path), cfg, mel_frames)
    return durations
