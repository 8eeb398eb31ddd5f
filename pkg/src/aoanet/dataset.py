"""Synthetic covariance-feature datasets.

Build order, mirroring how the real captures were enriched:

1. raw single-source frames per (scenario, base angle, capture);
2. raw frames are assigned to train/val/test *before* augmentation, so
   every descendant stays in its parent's split;
3. each raw frame is phase-shifted to neighbouring angles and copied at
   every AWGN level;
4. two-source records superimpose two noiseless (shifted) frames from
   different scenarios of the same split with a random carrier phase,
   then add noise at one level (cycled over the level set).

Noise is added in the covariance domain (``awgn_covariances``), which has
the same distribution as adding it to the IQ samples but skips drawing
``M x N`` Gaussian samples for every noisy copy.

Records go to a JSON-lines file; a manifest keeps the generation config,
split/class counts and the feature scaler fitted on the training split.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .array import ArrayConfig
from .augment import PHASE_SHIFTS, carrier_phase, in_fov, phase_shift, phase_shift_vector, superimpose
from .covariance import CovarianceStack, FeatureScaler, awgn_covariances, scatter_matrices, serialize_features
from .errors import ConfigurationError, DataError
from .nn.labels import encode_label
from .signals import DEFAULT_SAMPLE_RATE, BASEBAND_KINDS, SourceSpec, signal_power, synthesize_frame

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MANIFEST_VERSION = 1


@dataclass
class DatasetConfig:
    seed: int = 0
    num_scenarios: int = 5
    scenario_kinds: tuple = ("complex_tone", "linear_chirp", "random_qpsk", "linear_chirp", "random_qpsk")
    base_angles: tuple = tuple(float(a) for a in range(-70, 71, 10))
    captures_per_angle: int = 22
    phase_shifts: tuple = PHASE_SHIFTS
    snr_levels: tuple = (0.0, 5.0, 10.0)  # empty: one noiseless copy, no AWGN augmentation
    two_source_ratio: float = 1.0
    min_separation: float = 10.0
    pair_scenarios: tuple | None = None  # scenario indices allowed in pairs; None = all
    split_fractions: tuple = (0.6, 0.3, 0.1)
    frame_length: int = 2**15
    window_length: int = 2**12
    window_count: int = 8
    num_elements: int = 4
    spacing_factor: float = 0.2
    sample_rate: float = DEFAULT_SAMPLE_RATE
    fov: tuple = (-74.0, 74.0)
    normalization: str = "per_block"

    def __post_init__(self):
        self.scenario_kinds = tuple(self.scenario_kinds)
        self.base_angles = tuple(float(a) for a in self.base_angles)
        self.phase_shifts = tuple(float(p) for p in self.phase_shifts)
        self.snr_levels = tuple(float(s) for s in self.snr_levels)
        self.split_fractions = tuple(float(f) for f in self.split_fractions)
        self.fov = tuple(float(f) for f in self.fov)
        if self.pair_scenarios is not None:
            self.pair_scenarios = tuple(int(s) for s in self.pair_scenarios)
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must be three values summing to 1: {self.split_fractions}")
        if len(self.scenario_kinds) < self.num_scenarios:
            raise ConfigurationError("need one baseband kind per scenario")
        for k in self.scenario_kinds:
            if k not in BASEBAND_KINDS:
                raise ConfigurationError(f"unknown baseband kind {k!r}")
        if self.frame_length < self.window_length * self.window_count:
            raise ConfigurationError("frame shorter than the covariance windows")
        if self.captures_per_angle < 1 or self.num_scenarios < 1:
            raise ConfigurationError("need at least one scenario and one capture per angle")
        if self.normalization != "per_block":
            raise ConfigurationError("only per_block normalization is implemented")

    @property
    def array(self) -> ArrayConfig:
        return ArrayConfig(self.num_elements, self.spacing_factor)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigurationError(f"unknown dataset config keys: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class RawFrame:
    scenario: int
    angle: float
    capture: int
    split: str

    @property
    def id(self) -> str:
        return f"s{self.scenario}-a{self.angle:+.0f}-c{self.capture}"


def _seq(cfg: DatasetConfig, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(cfg.seed) & 0xFFFFFFFF, *[int(k) & 0xFFFFFFFF for k in keys]])


def raw_source(cfg: DatasetConfig, raw: RawFrame) -> SourceSpec:
    """The source behind a raw capture; nuisance parameters drawn per capture."""
    kind = cfg.scenario_kinds[raw.scenario]
    a_idx = cfg.base_angles.index(raw.angle)
    rng = np.random.default_rng(_seq(cfg, 1, raw.scenario, a_idx, raw.capture))
    fs = cfg.sample_rate
    if kind == "complex_tone":
        params = {"freq_offset": float(rng.uniform(-0.1, 0.1) * fs)}
    elif kind == "linear_chirp":
        params = {"sweep": float(rng.uniform(0.04, 0.25) * fs)}
    else:
        params = {"symbol_rate": float(fs / rng.choice([4, 8, 16]))}
    return SourceSpec(raw.angle, kind, 1.0, params, int(rng.integers(2**31)))


def raw_frame(cfg: DatasetConfig, raw: RawFrame):
    return synthesize_frame([raw_source(cfg, raw)], cfg.array, cfg.frame_length, None, 0, cfg.sample_rate)


def shifted_frame(cfg: DatasetConfig, raw: RawFrame, phi: float):
    frame = raw_frame(cfg, raw)
    return phase_shift(frame, raw.angle, phi, cfg.array, cfg.fov)


def _noisy_stack(cfg: DatasetConfig, scatter, power: float, snr, seed_seq) -> CovarianceStack:
    """Window covariances of a clean frame (given by its scatters) after AWGN at ``snr``.

    Noise is drawn in the covariance domain, which matches adding white noise
    to the IQ samples in distribution (see ``awgn_covariances``). ``power`` is
    the clean frame's mean sample power, the reference for ``snr``.
    """
    if snr is None:
        return CovarianceStack(scatter / cfg.window_length, cfg.window_length)
    return awgn_covariances(scatter, cfg.window_length, power / 10.0 ** (snr / 10.0), seed_seq)


def _shift_scatter(cfg: DatasetConfig, scatter, theta: float, phi: float):
    """Scatters of the frame phase-shifted from ``theta`` by ``phi`` (``D P D^H``)."""
    d = phase_shift_vector(theta, phi, cfg.array)
    return d[None, :, None] * scatter * np.conj(d)[None, None, :]


def assign_splits(cfg: DatasetConfig) -> list[RawFrame]:
    keys = [(s, a, c) for s in range(cfg.num_scenarios) for a in cfg.base_angles
            for c in range(cfg.captures_per_angle)]
    order = np.random.default_rng(_seq(cfg, 2)).permutation(len(keys))
    n_train = int(round(cfg.split_fractions[0] * len(keys)))
    n_val = int(round(cfg.split_fractions[1] * len(keys)))
    split_of = np.empty(len(keys), dtype=object)
    split_of[order[:n_train]] = "train"
    split_of[order[n_train:n_train + n_val]] = "val"
    split_of[order[n_train + n_val:]] = "test"
    return [RawFrame(s, a, c, split_of[i]) for i, (s, a, c) in enumerate(keys)]


def _shift_tag(phi: float) -> str:
    return "raw" if phi == 0 else f"phase:{phi:+g}"


def _noise_levels(cfg: DatasetConfig):
    return cfg.snr_levels or (None,)


def _awgn_tag(snr) -> str:
    return "awgn:none" if snr is None else f"awgn:{snr:g}dB"


def single_source_records(cfg: DatasetConfig, raw: RawFrame) -> list[dict]:
    """All phase-shifted, noisy descendants of one raw capture."""
    base = raw_frame(cfg, raw)
    # a phase shift is a unit-modulus per-element factor: it maps the window
    # scatters to D P D^H and leaves the sample power unchanged
    scatter = scatter_matrices(base, cfg.window_length, cfg.window_count)
    power = signal_power(base)
    a_idx = cfg.base_angles.index(raw.angle)
    out = []
    for k, phi in enumerate((0.0, *cfg.phase_shifts)):
        theta = raw.angle + phi
        if not in_fov(theta, cfg.fov):
            continue
        shifted = _shift_scatter(cfg, scatter, raw.angle, phi)
        label = encode_label(theta).tolist()
        for i, snr in enumerate(_noise_levels(cfg)):
            seed_seq = _seq(cfg, 3, raw.scenario, a_idx, raw.capture, k, i)
            stack = _noisy_stack(cfg, shifted, power, snr, seed_seq)
            out.append({
                "features": serialize_features(stack).tolist(),
                "label": label,
                "meta": {"id": f"{raw.id}-p{k}-n{i}", "split": raw.split, "parents": [raw.id],
                         "scenario": f"scenario{raw.scenario}", "scenarios": [raw.scenario],
                         "aug": f"{_shift_tag(phi)};{_awgn_tag(snr)}", "snr_db": snr,
                         "seed": int(seed_seq.generate_state(1)[0]), "angles": [theta]},
            })
    return out


def _pair_plan(cfg: DatasetConfig, raws: list[RawFrame], count: int, split_index: int):
    """Deterministically draw ``count`` (raw_a, phi_a, raw_b, phi_b) pairs."""
    allowed = set(range(cfg.num_scenarios)) if cfg.pair_scenarios is None else set(cfg.pair_scenarios)
    pool = [(r, phi) for r in raws if r.scenario in allowed
            for phi in (0.0, *cfg.phase_shifts) if in_fov(r.angle + phi, cfg.fov)]
    if count and len({r.scenario for r, _ in pool}) < 2:
        raise ConfigurationError("two-source records need at least two scenarios in every split")
    rng = np.random.default_rng(_seq(cfg, 4, split_index))
    plan = []
    attempts = 0
    while len(plan) < count:
        attempts += 1
        if attempts > 1000 * max(count, 1):
            raise ConfigurationError("cannot satisfy pairing constraints; lower min_separation")
        i, j = rng.integers(len(pool), size=2)
        (ra, pa), (rb, pb) = pool[i], pool[j]
        if ra.scenario == rb.scenario:
            continue
        if abs((ra.angle + pa) - (rb.angle + pb)) < cfg.min_separation:
            continue
        plan.append((ra, pa, rb, pb))
    return plan


def two_source_record(cfg: DatasetConfig, index: int, split_index: int, pair) -> dict:
    ra, pa, rb, pb = pair
    fa = shifted_frame(cfg, ra, pa)
    fb = shifted_frame(cfg, rb, pb)
    dphi = carrier_phase(_seq(cfg, 5, split_index, index))
    mixed = superimpose(fa, fb, delta_phi=dphi)
    levels = _noise_levels(cfg)
    snr = levels[index % len(levels)]
    seed_seq = _seq(cfg, 6, split_index, index)
    scatter = scatter_matrices(mixed, cfg.window_length, cfg.window_count)
    stack = _noisy_stack(cfg, scatter, signal_power(mixed), snr, seed_seq)
    ta, tb = ra.angle + pa, rb.angle + pb
    return {
        "features": serialize_features(stack).tolist(),
        "label": encode_label(ta, tb).tolist(),
        "meta": {"id": f"pair-{SPLITS[split_index]}-{index}", "split": ra.split, "parents": [ra.id, rb.id],
                 "scenario": f"scenario{ra.scenario}+scenario{rb.scenario}",
                 "scenarios": [ra.scenario, rb.scenario],
                 "aug": f"{_shift_tag(pa)}|{_shift_tag(pb)};superpose:dphi={dphi:.4f};{_awgn_tag(snr)}",
                 "snr_db": snr, "seed": int(seed_seq.generate_state(1)[0]), "angles": sorted([ta, tb])},
    }


def _single_job(args):
    cfg, raw = args
    return single_source_records(cfg, raw)


def _pair_job(args):
    cfg, index, split_index, pair = args
    return [two_source_record(cfg, index, split_index, pair)]


def _run(jobs, fn, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            yield from ex.map(fn, jobs, chunksize=8)
    else:
        yield from map(fn, jobs)


def _dump(record) -> str:
    return json.dumps(record, separators=(",", ":"), ensure_ascii=True)


@dataclass
class DatasetManifest:
    records: str
    scaler: FeatureScaler
    config: DatasetConfig
    split_counts: dict = field(default_factory=dict)
    class_counts: dict = field(default_factory=dict)
    path: Path | None = None

    def to_dict(self):
        return {"version": MANIFEST_VERSION, "records": self.records, "scaler": self.scaler.to_dict(),
                "splits": {"fractions": list(self.config.split_fractions), "counts": self.split_counts},
                "class_counts": self.class_counts, "normalization": self.config.normalization,
                "feature_dim": self.config.window_count * self.config.num_elements ** 2,
                "generation": self.config.to_dict()}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        self.path = Path(path)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, ValueError) as e:
            raise DataError(f"cannot read manifest {path}: {e}") from e
        if d.get("version") != MANIFEST_VERSION:
            raise DataError(f"{path}: unsupported manifest version {d.get('version')}")
        gen = dict(d["generation"])
        gen = {k: tuple(v) if isinstance(v, list) else v for k, v in gen.items()}
        return cls(d["records"], FeatureScaler.from_dict(d["scaler"]), DatasetConfig.from_dict(gen),
                   d["splits"]["counts"], d["class_counts"], path)

    @property
    def records_path(self) -> Path:
        base = self.path.parent if self.path else Path(".")
        return base / self.records


def build_dataset(cfg: DatasetConfig, out_dir, workers: int = 1) -> DatasetManifest:
    """Generate records and manifest under ``out_dir``; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raws = assign_splits(cfg)
    records_name = "records.jsonl"
    split_counts = {s: {"single": 0, "two": 0} for s in SPLITS}
    train_features = []
    with open(out_dir / records_name, "w") as fh:
        singles = [r for r in raws]
        for recs in _run([(cfg, r) for r in singles], _single_job, workers):
            for rec in recs:
                fh.write(_dump(rec) + "\n")
                split_counts[rec["meta"]["split"]]["single"] += 1
                if rec["meta"]["split"] == "train":
                    train_features.append(rec["features"])
        for si, split in enumerate(SPLITS):
            members = [r for r in raws if r.split == split]
            count = int(round(cfg.two_source_ratio * split_counts[split]["single"]))
            if not members or count == 0:
                continue
            plan = _pair_plan(cfg, members, count, si)
            jobs = [(cfg, i, si, pair) for i, pair in enumerate(plan)]
            for recs in _run(jobs, _pair_job, workers):
                for rec in recs:
                    fh.write(_dump(rec) + "\n")
                    split_counts[split]["two"] += 1
                    if split == "train":
                        train_features.append(rec["features"])
        log.info("dataset split counts: %s", split_counts)
    if not train_features:
        raise ConfigurationError("training split is empty")
    scaler = FeatureScaler.fit(np.asarray(train_features))
    class_counts = {"single": sum(c["single"] for c in split_counts.values()),
                    "two": sum(c["two"] for c in split_counts.values())}
    manifest = DatasetManifest(records_name, scaler, cfg, split_counts, class_counts)
    manifest.save(out_dir / "manifest.json")
    return manifest


@dataclass
class Dataset:
    """In-memory view of a built dataset."""

    features: np.ndarray
    labels: np.ndarray
    snr_db: np.ndarray
    splits: np.ndarray
    meta: list
    scaler: FeatureScaler

    def select(self, split: str, scaled: bool = True):
        mask = self.splits == split
        X = self.features[mask]
        return (self.scaler.transform(X) if scaled else X), self.labels[mask]

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits == split)


def read_records(path):
    path = Path(path)
    try:
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        yield json.loads(line)
                    except ValueError as e:
                        raise DataError(f"{path}:{line_no}: malformed record") from e
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def load_dataset(manifest_path) -> Dataset:
    manifest = DatasetManifest.load(manifest_path)
    feats, labels, snrs, splits, meta = [], [], [], [], []
    for rec in read_records(manifest.records_path):
        feats.append(rec["features"])
        labels.append(rec["label"])
        m = rec.get("meta", {})
        snr = m.get("snr_db")
        snrs.append(np.nan if snr is None else snr)
        splits.append(m.get("split", "test"))
        meta.append(m)
    if not feats:
        raise DataError(f"{manifest.records_path}: no records")
    return Dataset(np.asarray(feats, dtype=float), np.asarray(labels, dtype=float), np.asarray(snrs, dtype=float),
                   np.asarray(splits), meta, manifest.scaler)


@dataclass
class EvalSet:
    """Held-out records regenerated at one SNR, with raw covariances kept for MUSIC."""

    features: np.ndarray  # (n, 128) unscaled
    labels: np.ndarray  # (n, 3)
    covariances: np.ndarray  # (n, M, M) window-averaged
    snr_db: float
    ids: list


def snr_eval_set(cfg: DatasetConfig, snr_db: float, split: str = "test", pair_ratio: float | None = None,
                 limit: int | None = None) -> EvalSet:
    """Rebuild ``split``'s single- and two-source records with noise at ``snr_db``.

    Sources, shifts and pairings are the builder's; only the noise draw is
    new (seeded from the SNR), so the set covers the full FOV sweep of the
    held-out raw captures. ``limit`` caps each class.
    """
    si = SPLITS.index(split)
    raws = [r for r in assign_splits(cfg) if r.split == split]
    snr_key = int(round(float(snr_db) * 1000)) & 0xFFFFFFFF
    feats, labels, covs, ids = [], [], [], []

    def add(frame, label, rid, seed_seq):
        scatter = scatter_matrices(frame, cfg.window_length, cfg.window_count)
        stack = _noisy_stack(cfg, scatter, signal_power(frame), snr_db, seed_seq)
        feats.append(serialize_features(stack))
        covs.append(stack.mean())
        labels.append(label)
        ids.append(rid)

    singles = [(r, k, phi) for r in raws for k, phi in enumerate((0.0, *cfg.phase_shifts))
               if in_fov(r.angle + phi, cfg.fov)]
    for n, (r, k, phi) in enumerate(singles[:limit]):
        a_idx = cfg.base_angles.index(r.angle)
        add(shifted_frame(cfg, r, phi), encode_label(r.angle + phi), f"{r.id}-p{k}",
            _seq(cfg, 7, snr_key, r.scenario, a_idx, r.capture, k))
    ratio = cfg.two_source_ratio if pair_ratio is None else pair_ratio
    count = int(round(ratio * len(singles[:limit])))
    for i, (ra, pa, rb, pb) in enumerate(_pair_plan(cfg, raws, count, si) if count else []):
        dphi = carrier_phase(_seq(cfg, 5, si, i))
        mixed = superimpose(shifted_frame(cfg, ra, pa), shifted_frame(cfg, rb, pb), delta_phi=dphi)
        add(mixed, encode_label(ra.angle + pa, rb.angle + pb), f"pair-{split}-{i}", _seq(cfg, 8, snr_key, si, i))
    return EvalSet(np.asarray(feats), np.asarray(labels), np.asarray(covs), float(snr_db), ids)
