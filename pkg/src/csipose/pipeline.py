"""Raw CSI streams -> network-ready two-receiver amplitude/phase images.

Per receiver: pick the reference antenna (largest total amplitude
variance), strip the slowly-varying static component from each
subcarrier's amplitude series with a sliding mean, and detrend each
frame's unwrapped phase across subcarriers. Windows of 20 consecutive
CSI samples (the 5 samples co-timed with a pose frame plus the 15
preceding) become one 30x20x4 image paired with that pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from csipose import recordings
from csipose.errors import ShapeError, SyncDriftError
from csipose.skeleton import NUM_JOINTS

IMAGE_SUBCARRIERS = 30
IMAGE_WINDOW = 20
IMAGE_CHANNELS = 4  # [amp_rx1, phase_rx1, amp_rx2, phase_rx2]


@dataclass
class CsiImage:
    """Network input: subcarriers x time window x 4 channels."""

    data: np.ndarray
    end_timestamp: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (IMAGE_SUBCARRIERS, IMAGE_WINDOW, IMAGE_CHANNELS):
            raise ShapeError(
                f"CSI image must be {IMAGE_SUBCARRIERS}x{IMAGE_WINDOW}x{IMAGE_CHANNELS},"
                f" got {self.data.shape}"
            )


@dataclass
class PipelineConfig:
    window_len: int = 20
    stride: int = 5  # CSI samples between emitted images, multiple of 5
    static_window: int = 150  # sliding-mean length for static removal, samples
    remove_static: bool = True
    sanitize: bool = True
    amp_norm: float | None = None  # override the per-recording median amplitude

    def __post_init__(self):
        if not self.window_len >= self.stride >= 1:
            raise ValueError(
                f"window length ({self.window_len}) must be >= stride ({self.stride}) >= 1"
            )
        if self.stride % 5 != 0:
            raise ValueError(f"stride must be a multiple of 5 CSI samples, got {self.stride}")
        if self.static_window < 2:
            raise ValueError("static-removal window must span at least 2 samples")


def select_reference_antenna(values: np.ndarray) -> int:
    """Antenna with the largest amplitude variance summed over subcarriers.

    ``values`` is (frames, antennas, subcarriers) complex. Ties break to
    the lowest index.
    """
    values = np.asarray(values)
    if values.ndim != 3:
        raise ShapeError(f"expected (frames, antennas, subcarriers), got {values.shape}")
    if values.shape[0] == 0:
        raise ValueError("empty CSI stream")
    if values.shape[0] < 2:
        raise ValueError("need at least 2 frames to estimate variance")
    variance = np.abs(values).var(axis=0).sum(axis=1)  # (antennas,)
    return int(np.argmax(variance))


def remove_static_component(series: np.ndarray, window: int = 150) -> np.ndarray:
    """Subtract a centered sliding mean (truncated at the boundaries).

    Works on a 1-D series or column-wise on (time, subcarriers).
    """
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    if n < 2:
        raise ValueError(f"series of length {n} is too short to split static/dynamic")
    left = window // 2
    right = window - 1 - left
    csum = np.cumsum(series, axis=0)
    csum = np.concatenate([np.zeros((1,) + series.shape[1:]), csum], axis=0)
    idx = np.arange(n)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right, n - 1) + 1
    counts = (hi - lo).reshape((n,) + (1,) * (series.ndim - 1))
    means = (csum[hi] - csum[lo]) / counts
    return series - means


def sanitize_phase(phases: np.ndarray) -> np.ndarray:
    """Remove per-frame linear subcarrier trend and mean, re-wrap to (-pi, pi].

    ``phases`` holds unwrapped values, one row per frame (or a single
    frame as a 1-D vector). Linear detrending kills the timing/frequency
    offset ramp; the residual is the structure the network consumes.
    """
    phases = np.asarray(phases, dtype=np.float64)
    single = phases.ndim == 1
    mat = phases[None, :] if single else phases
    n = mat.shape[1]
    k = np.arange(n, dtype=np.float64)
    design = np.stack([np.ones(n), k])  # (2, n)
    # least-squares coefficients for every frame at once
    pinv = np.linalg.pinv(design.T)  # (2, n)
    coeffs = mat @ pinv.T  # (frames, 2)
    resid = mat - coeffs @ design
    out = wrap_phase(resid)
    return out[0] if single else out


def wrap_phase(x: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    w = np.mod(x, 2.0 * np.pi)
    return np.where(w > np.pi, w - 2.0 * np.pi, w)


def _receiver_channels(stream, config: PipelineConfig):
    """(amplitude, phase) arrays of shape (frames, subcarriers) for one receiver."""
    ref = select_reference_antenna(stream.values)
    picked = stream.values[:, ref, :]
    amp_raw = np.abs(picked)
    if config.remove_static:
        amp = np.abs(remove_static_component(amp_raw, config.static_window))
    else:
        amp = amp_raw
    phase = np.unwrap(np.angle(picked), axis=1)
    if config.sanitize:
        phase = sanitize_phase(phase)
    else:
        phase = wrap_phase(phase)
    return amp, phase, amp_raw, ref


def build_csi_images(streams, pose_timestamps, poses, config: PipelineConfig | None = None):
    """Window synchronized streams into (CsiImage, pose) pairs.

    Returns ``(pairs, info)`` where pairs is a time-ordered list of
    ``(CsiImage, pose (17, 3))`` and info counts drops. Each emitted
    window covers the 5 CSI samples co-timed with its pose plus the 15
    preceding samples; poses lacking that history are dropped.
    """
    config = config or PipelineConfig()
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[1:] != (NUM_JOINTS, 3):
        raise ShapeError(f"poses must be (n, {NUM_JOINTS}, 3), got {poses.shape}")
    if len(streams) != 2:
        raise ValueError(f"need both receiver streams, got {len(streams)}")

    sync = recordings.synchronize(streams, pose_timestamps)
    if len(sync.pose_indices) == 0:
        raise SyncDriftError("no pose aligns with a 5-sample CSI group")

    channels = [_receiver_channels(s, config) for s in streams]
    raw_amps = np.concatenate([c[2].reshape(-1) for c in channels])
    norm = config.amp_norm if config.amp_norm is not None else float(np.median(raw_amps))
    if norm <= 0:
        norm = 1.0

    history = config.window_len - 5
    pose_step = config.stride // 5
    pairs = []
    no_history = 0
    emitted_rank = 0
    for k, p in enumerate(sync.pose_indices):
        starts = sync.csi_indices[k, :, 0]
        if np.any(starts < history):
            no_history += 1
            continue
        if emitted_rank % pose_step != 0:
            emitted_rank += 1
            continue
        emitted_rank += 1
        data = np.empty((IMAGE_SUBCARRIERS, config.window_len, IMAGE_CHANNELS))
        for r, (amp, phase, _, _) in enumerate(channels):
            j0 = int(starts[r])
            window = slice(j0 - history, j0 + 5)
            data[:, :, 2 * r] = (amp[window] / norm).T
            data[:, :, 2 * r + 1] = phase[window].T
        end_ts = float(streams[0].timestamps[int(starts[0]) + 4])
        pairs.append((CsiImage(data, end_ts), poses[p]))

    info = {
        "dropped_unmatched": int(sync.dropped),
        "dropped_no_history": no_history,
        "reference_antennas": [c[3] for c in channels],
        "amplitude_norm": norm,
        "pairs": len(pairs),
    }
    return pairs, info
