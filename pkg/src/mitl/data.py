"""Trial containers, the on-disk trial-set format, preprocessing and a
synthetic motor-imagery generator.

A trial set on disk is a directory holding::

    manifest.json   subject/session ids, sampling rate, shapes, class names
    data.f32le      float32 little-endian payload, trial-major, then channel,
                    then sample
    labels.csv      ``trial_index,label`` rows; trials without a row are
                    unlabeled
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .exceptions import FormatError, InvalidBand, OutOfBounds

__all__ = [
    "UNLABELED",
    "Trial",
    "TrialSet",
    "SynthParams",
    "load_trialset",
    "save_trialset",
    "bandpass",
    "epoch",
    "synth_generate",
]

UNLABELED = 0
DEFAULT_CLASS_NAMES = {-1: "left_hand", 1: "right_hand"}


@dataclass(frozen=True)
class Trial:
    data: np.ndarray
    label: int = UNLABELED

    @property
    def is_labeled(self):
        return self.label != UNLABELED


@dataclass
class TrialSet:
    """Ordered trials of one subject/session.

    Trials are held as one ``(n_trials, channels, samples)`` array ``X``;
    ``y`` holds -1/+1 for labeled trials and ``UNLABELED`` (0) otherwise.
    ``alignment`` is filled in by :func:`mitl.alignment.domain_align`.
    """

    X: np.ndarray
    y: np.ndarray
    subject_id: str = "S01"
    session_id: str = "0"
    fs_hz: float = 250.0
    class_names: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_NAMES))
    alignment: object = None

    def __post_init__(self):
        self.X = np.asarray(self.X)
        self.y = np.asarray(self.y, dtype=int).reshape(-1)
        if self.X.ndim != 3:
            raise ValueError(f"X must be (n_trials, channels, samples), got {self.X.shape}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y disagree on the number of trials")
        if self.X.shape[1] < 2 or self.X.shape[2] < 2:
            raise ValueError("trials need at least 2 channels and 2 samples")
        if not np.all(np.isin(self.y, (-1, 0, 1))):
            raise ValueError("labels must be -1, +1 or UNLABELED")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("trial data must be finite")
        if self.fs_hz <= 0:
            raise ValueError("fs_hz must be positive")

    @classmethod
    def from_trials(cls, trials, **kwargs):
        X = np.stack([t.data for t in trials])
        y = np.array([t.label for t in trials], dtype=int)
        return cls(X, y, **kwargs)

    @property
    def trials(self):
        return [Trial(x, int(lab)) for x, lab in zip(self.X, self.y)]

    @property
    def n_trials(self):
        return self.X.shape[0]

    @property
    def n_channels(self):
        return self.X.shape[1]

    @property
    def n_samples(self):
        return self.X.shape[2]

    @property
    def labeled_mask(self):
        return self.y != UNLABELED

    @property
    def n_labeled(self):
        return int(self.labeled_mask.sum())

    @property
    def n_unlabeled(self):
        return self.n_trials - self.n_labeled

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return replace(self, X=self.X[indices], y=self.y[indices], alignment=None)

    def __len__(self):
        return self.n_trials


# ---------------------------------------------------------------------------
# on-disk format

_MANIFEST_KEYS = ("subject_id", "session_id", "fs_hz", "channels", "samples",
                  "n_trials", "class_names")


def save_trialset(trialset, path):
    """Write ``trialset`` to directory ``path`` (created if missing).

    The payload is written as float32; a set loaded from disk re-saves to
    identical bytes.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    n, c, t = trialset.X.shape
    fs = trialset.fs_hz
    if float(fs).is_integer():
        fs = int(fs)
    manifest = {
        "subject_id": str(trialset.subject_id),
        "session_id": str(trialset.session_id),
        "fs_hz": fs,
        "channels": c,
        "samples": t,
        "n_trials": n,
        "class_names": {str(k): str(trialset.class_names[k]) for k in (-1, 1)},
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    np.ascontiguousarray(trialset.X, dtype="<f4").tofile(path / "data.f32le")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["trial_index", "label"])
    for i, lab in enumerate(trialset.y):
        if lab != UNLABELED:
            writer.writerow([i, int(lab)])
    (path / "labels.csv").write_text(buf.getvalue(), encoding="utf-8")


def load_trialset(path):
    """Read a trial set directory written by :func:`save_trialset`."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest in {path}: {exc}") from exc
    missing = [k for k in _MANIFEST_KEYS if k not in manifest]
    if missing:
        raise FormatError(f"manifest lacks keys {missing}")
    try:
        n = int(manifest["n_trials"])
        c = int(manifest["channels"])
        t = int(manifest["samples"])
        fs = float(manifest["fs_hz"])
        names = {int(k): str(v) for k, v in manifest["class_names"].items()}
    except (TypeError, ValueError) as exc:
        raise FormatError(f"malformed manifest field: {exc}") from exc
    if set(names) != {-1, 1}:
        raise FormatError("class_names must map exactly '-1' and '1'")
    if min(n, c, t) < 0 or fs <= 0:
        raise FormatError("manifest sizes must be non-negative and fs_hz positive")

    data_path = path / "data.f32le"
    if not data_path.exists():
        raise FormatError(f"missing payload {data_path}")
    payload = np.fromfile(data_path, dtype="<f4")
    if payload.size != n * c * t or data_path.stat().st_size != 4 * n * c * t:
        raise FormatError(
            f"payload holds {payload.size} floats, manifest declares {n}*{c}*{t}={n * c * t}")
    X = payload.reshape(n, c, t)

    y = np.full(n, UNLABELED, dtype=int)
    labels_path = path / "labels.csv"
    if labels_path.exists():
        with labels_path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["trial_index", "label"]:
                raise FormatError("labels.csv header must be 'trial_index,label'")
            for row in reader:
                if not row:
                    continue
                try:
                    idx, lab = int(row[0]), int(row[1])
                except (IndexError, ValueError) as exc:
                    raise FormatError(f"bad labels row {row!r}") from exc
                if lab not in (-1, 1):
                    raise FormatError(f"label {lab} outside {{-1, 1}}")
                if not 0 <= idx < n:
                    raise FormatError(f"trial index {idx} out of range")
                y[idx] = lab

    try:
        return TrialSet(X, y, subject_id=str(manifest["subject_id"]),
                        session_id=str(manifest["session_id"]), fs_hz=fs,
                        class_names=names)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# ---------------------------------------------------------------------------
# preprocessing

def design_bandpass(low_hz, high_hz, fs_hz, order=4):
    """Butterworth band-pass as second-order sections (bilinear transform)."""
    if not 0 < low_hz < high_hz < fs_hz / 2:
        raise InvalidBand(f"need 0 < low < high < fs/2, got [{low_hz}, {high_hz}] at fs={fs_hz}")
    return signal.butter(order, [low_hz, high_hz], btype="bandpass", fs=fs_hz, output="sos")


def bandpass(trials, low_hz=8.0, high_hz=30.0, fs_hz=250.0, order=4):
    """Causal Butterworth band-pass along the last axis, zero initial state."""
    sos = design_bandpass(low_hz, high_hz, fs_hz, order)
    return signal.sosfilt(sos, np.asarray(trials, dtype=float), axis=-1)


def _round_half_away(x):
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def epoch(recording, fs_hz, onsets, t_start_s=0.5, t_end_s=3.5):
    """Cut ``[onset + t_start, onset + t_end)`` windows out of a recording.

    Returns an ``(n_onsets, channels, samples)`` array.
    """
    recording = np.asarray(recording)
    if recording.ndim != 2:
        raise ValueError("recording must be (channels, samples)")
    total = recording.shape[1]
    start = _round_half_away(t_start_s * fs_hz)
    stop = _round_half_away(t_end_s * fs_hz)
    if stop <= start:
        raise ValueError("t_end_s must exceed t_start_s")
    out = []
    for onset in onsets:
        a = int(onset) + start
        b = int(onset) + stop
        if a < 0 or b > total:
            raise OutOfBounds(f"window [{a}, {b}) exceeds recording of {total} samples")
        out.append(recording[:, a:b])
    return np.stack(out) if out else np.empty((0, recording.shape[0], stop - start))


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class SynthParams:
    """Parameters of the synthetic two-class generator.

    Class ``k`` has latent covariance ``A D_k A^T`` where ``A`` is a shared
    random orthogonal matrix; ``D_+`` and ``D_-`` differ by the variance ratio
    ``contrast`` on two designated components (swapped between the classes)
    and average to the identity. Subject ``s`` mixes the latent sources through
    ``I + mix_scale * G_s``; additive white noise has scale ``noise_scale``.
    Each extra session multiplies the subject mixing by
    ``I + session_scale * G_{s,j}``.

    The default trial length is short on purpose: with few samples per trial
    the covariance estimates stay noisy and a target-only pipeline is far from
    ceiling, which leaves room for transfer to matter.
    """

    n_subjects: int = 5
    n_trials_per_class: int = 60
    channels: int = 8
    samples: int = 12
    fs_hz: float = 250.0
    contrast: float = 6.0
    mix_scale: float = 0.4
    noise_scale: float = 0.5
    n_sessions: int = 1
    session_scale: float = 0.0

    def __post_init__(self):
        for name in ("n_subjects", "n_trials_per_class", "n_sessions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.channels < 2 or self.samples < 2:
            raise ValueError("need channels >= 2 and samples >= 2")
        if self.fs_hz <= 0 or self.contrast <= 0:
            raise ValueError("fs_hz and contrast must be positive")
        if min(self.mix_scale, self.noise_scale, self.session_scale) < 0:
            raise ValueError("scales must be non-negative")


def _invertible_perturbation(rng, c, scale, min_eig=0.05):
    """``I + scale * G`` with ``G`` a symmetrized Gaussian (Wigner, semicircle
    radius 2), redrawn until the result is safely positive definite."""
    while True:
        H = rng.standard_normal((c, c))
        M = np.eye(c) + scale * (H + H.T) / np.sqrt(2 * c)
        if np.linalg.eigvalsh(M)[0] > min_eig:
            return M


def class_covariances(params, rng):
    """Latent class covariances ``{-1: A D_- A^T, +1: A D_+ A^T}``."""
    c = params.channels
    A, _ = np.linalg.qr(rng.standard_normal((c, c)))
    # variance ratio `contrast` on components 0 and 1, class average = identity
    hi = 2 * params.contrast / (1 + params.contrast)
    lo = 2 / (1 + params.contrast)
    d_pos = np.ones(c)
    d_neg = np.ones(c)
    d_pos[:2] = hi, lo
    d_neg[:2] = lo, hi
    return A, {1: (A * d_pos) @ A.T, -1: (A * d_neg) @ A.T}


def synth_generate(params, seed=0):
    """Generate one :class:`TrialSet` per (subject, session).

    Trials are ``M_s Sigma_k^{1/2} Z + noise_scale * E`` with standard-normal
    ``Z`` and ``E``. Class order within a set is shuffled. Output is
    bit-identical for equal ``(params, seed)``.
    """
    rng = np.random.default_rng(seed)
    c, t = params.channels, params.samples
    _, covs = class_covariances(params, rng)
    roots = {k: _sqrt_psd(S) for k, S in covs.items()}

    sets = []
    for s in range(params.n_subjects):
        M_subject = _invertible_perturbation(rng, c, params.mix_scale)
        for j in range(params.n_sessions):
            M = M_subject
            if j > 0:
                M = M_subject @ _invertible_perturbation(rng, c, params.session_scale)
            y = np.repeat([-1, 1], params.n_trials_per_class)
            y = y[rng.permutation(y.size)]
            X = np.empty((y.size, c, t))
            for n, k in enumerate(y):
                Z = rng.standard_normal((c, t))
                E = rng.standard_normal((c, t))
                X[n] = M @ roots[k] @ Z + params.noise_scale * E
            sets.append(TrialSet(X, y, subject_id=f"S{s + 1:02d}", session_id=str(j),
                                 fs_hz=params.fs_hz))
    return sets


def _sqrt_psd(S):
    vals, vecs = np.linalg.eigh((S + S.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T
