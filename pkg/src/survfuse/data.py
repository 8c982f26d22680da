"""Synthetic multimodal survival cohorts: generation, binning, persistence.

A cohort is a list of patients, each carrying two token matrices (one per
modality), an observed time, an event flag (1 = event observed, 0 = censored)
and, once the cohort has been binned, a discrete time-bin label in
``[1, n_bins]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DataError, SchemaError

COHORT_SCHEMA_VERSION = 1


@dataclass(eq=False)
class PatientRecord:
    id: str
    tokens_m1: np.ndarray  # (I1, C0)
    tokens_m2: np.ndarray  # (I2, C0)
    time: float
    event: int  # 1 = event observed, 0 = censored
    bin: Optional[int] = None  # assigned by assign_time_bins

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.time == other.time
            and self.event == other.event
            and self.bin == other.bin
            and np.array_equal(self.tokens_m1, other.tokens_m1)
            and np.array_equal(self.tokens_m2, other.tokens_m2)
        )


@dataclass(eq=False)
class Cohort:
    patients: list[PatientRecord]
    n_bins: Optional[int] = None
    bin_edges: Optional[np.ndarray] = None  # ascending, length n_bins - 1

    def __len__(self):
        return len(self.patients)

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        edges_a = [] if self.bin_edges is None else list(self.bin_edges)
        edges_b = [] if other.bin_edges is None else list(other.bin_edges)
        return (
            self.n_bins == other.n_bins
            and edges_a == edges_b
            and self.patients == other.patients
        )

    @property
    def token_dim(self) -> int:
        if not self.patients:
            raise DataError("empty cohort has no token dimension")
        return self.patients[0].tokens_m1.shape[1]

    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.patients], dtype=np.float64)

    def events(self) -> np.ndarray:
        return np.array([p.event for p in self.patients], dtype=np.int64)

    def bins(self) -> np.ndarray:
        if any(p.bin is None for p in self.patients):
            raise DataError("cohort has not been binned")
        return np.array([p.bin for p in self.patients], dtype=np.int64)


@dataclass
class SynthConfig:
    """Knobs for the synthetic cohort generator.

    The planted risk for a patient is

        r = w_shared * mean(z_s) + w_spec1 * mean(z_1) + w_spec2 * mean(z_2)
            + w_interact * mean(z_1 * z_2)

    with ``z_s, z_1, z_2`` standard-normal latents.  Event times are
    exponential with rate ``exp(r)``; censoring times are uniform on
    ``(0, censor_horizon)``.  ``censor_horizon = inf`` disables censoring.
    """

    n_patients: int = 500
    k_shared: int = 2
    k_spec: int = 2
    i1: int = 4
    i2: int = 4
    c0: int = 16
    w_shared: float = 1.0
    w_spec1: float = 0.5
    w_spec2: float = 0.5
    w_interact: float = 1.0
    noise_sigma: float = 0.5
    censor_horizon: float = 4.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_patients", "k_shared", "k_spec", "i1", "i2", "c0"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.censor_horizon > 0:
            raise ConfigurationError(
                f"censor_horizon must be positive (inf allowed), got {self.censor_horizon}"
            )


def simulate_latent_risks(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Planted risks, observed times and event flags for ``cfg``.

    Diagnostic companion to :func:`generate_synthetic_cohort`: it replays the
    same draws and exposes the true risk, which the cohort itself does not
    store.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    _draw_mixing_maps(cfg, rng)  # keep the rng stream aligned with generation
    risks, times, events, _, _ = _simulate_patients(cfg, rng)
    return risks, times, events


def _draw_mixing_maps(cfg: SynthConfig, rng: np.random.Generator):
    map1 = rng.standard_normal((cfg.k_shared + cfg.k_spec, cfg.c0))
    map2 = rng.standard_normal((cfg.k_shared + cfg.k_spec, cfg.c0))
    return map1, map2


def _simulate_patients(cfg: SynthConfig, rng: np.random.Generator):
    n = cfg.n_patients
    z_s = rng.standard_normal((n, cfg.k_shared))
    z_1 = rng.standard_normal((n, cfg.k_spec))
    z_2 = rng.standard_normal((n, cfg.k_spec))
    risks = (
        cfg.w_shared * z_s.mean(axis=1)
        + cfg.w_spec1 * z_1.mean(axis=1)
        + cfg.w_spec2 * z_2.mean(axis=1)
        + cfg.w_interact * (z_1 * z_2).mean(axis=1)
    )
    event_times = rng.exponential(scale=np.exp(-risks))
    if math.isinf(cfg.censor_horizon):
        times = event_times
        events = np.ones(n, dtype=np.int64)
    else:
        censor_times = rng.uniform(0.0, cfg.censor_horizon, size=n)
        times = np.minimum(event_times, censor_times)
        events = (event_times <= censor_times).astype(np.int64)
    return risks, times, events, (z_s, z_1, z_2), rng


def generate_synthetic_cohort(cfg: SynthConfig) -> Cohort:
    """Generate a cohort with planted shared/specific/interaction risk structure.

    Pure function of ``cfg.seed``: identical configs yield byte-identical
    cohorts.  Modality tokens are fixed random linear maps of the latents plus
    per-token Gaussian noise.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    map1, map2 = _draw_mixing_maps(cfg, rng)
    _, times, events, (z_s, z_1, z_2), rng = _simulate_patients(cfg, rng)

    patients = []
    for i in range(cfg.n_patients):
        latent1 = np.concatenate([z_s[i], z_1[i]])
        latent2 = np.concatenate([z_s[i], z_2[i]])
        base1 = latent1 @ map1
        base2 = latent2 @ map2
        tok1 = base1[None, :] + cfg.noise_sigma * rng.standard_normal((cfg.i1, cfg.c0))
        tok2 = base2[None, :] + cfg.noise_sigma * rng.standard_normal((cfg.i2, cfg.c0))
        patients.append(
            PatientRecord(
                id=f"p{i:05d}",
                tokens_m1=tok1,
                tokens_m2=tok2,
                time=float(times[i]),
                event=int(events[i]),
            )
        )
    return Cohort(patients=patients)


def assign_time_bins(cohort: Cohort, n_bins: int) -> Cohort:
    """Return a copy of ``cohort`` with quantile-based discrete time bins.

    Bin edges are the ``j/n_bins`` quantiles (linear interpolation, numpy's
    default) of the *uncensored* event times, ``j = 1..n_bins-1``.  A patient
    lands in ``bin = 1 + #(edges < time)``, clamped to ``[1, n_bins]``, so
    censored patients beyond the last edge fall in the final bin.
    """
    if n_bins < 1:
        raise ConfigurationError(f"n_bins must be >= 1, got {n_bins}")
    uncensored = np.array([p.time for p in cohort.patients if p.event == 1])
    if uncensored.size == 0:
        raise DataError("binning requires at least one uncensored patient")
    if np.unique(uncensored).size < n_bins:
        raise DataError(
            f"binning into {n_bins} bins requires at least {n_bins} distinct "
            f"uncensored times, found {np.unique(uncensored).size}"
        )
    levels = np.arange(1, n_bins) / n_bins
    edges = np.quantile(uncensored, levels)  # linear-interpolation quantiles
    patients = []
    for p in cohort.patients:
        b = 1 + int(np.sum(edges < p.time))
        b = min(max(b, 1), n_bins)
        patients.append(replace(p, bin=b))
    return Cohort(patients=patients, n_bins=n_bins, bin_edges=edges)


# ---------------------------------------------------------------------------
# persistence


def save_cohort(cohort: Cohort, path) -> None:
    doc = {
        "schema": COHORT_SCHEMA_VERSION,
        "n_bins": cohort.n_bins,
        "bin_edges": [] if cohort.bin_edges is None else [float(e) for e in cohort.bin_edges],
        "patients": [
            {
                "id": p.id,
                "time": p.time,
                "event": p.event,
                "bin": p.bin,
                "m1_tokens": p.tokens_m1.tolist(),
                "m2_tokens": p.tokens_m2.tolist(),
            }
            for p in cohort.patients
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


_PATIENT_FIELDS = ("id", "time", "event", "bin", "m1_tokens", "m2_tokens")


def load_cohort(path) -> Cohort:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level document must be an object")
    if doc.get("schema") != COHORT_SCHEMA_VERSION:
        raise SchemaError(f"unsupported or missing 'schema' field: {doc.get('schema')!r}")
    for key in ("n_bins", "bin_edges", "patients"):
        if key not in doc:
            raise SchemaError(f"missing top-level field '{key}'")
    patients = []
    for idx, raw in enumerate(doc["patients"]):
        for fname in _PATIENT_FIELDS:
            if fname not in raw:
                raise SchemaError(f"patient {idx}: missing field '{fname}'")
        if raw["event"] not in (0, 1):
            raise SchemaError(f"patient {idx}: field 'event' must be 0 or 1, got {raw['event']!r}")
        if not raw["time"] > 0:
            raise SchemaError(f"patient {idx}: field 'time' must be positive, got {raw['time']!r}")
        patients.append(
            PatientRecord(
                id=raw["id"],
                tokens_m1=np.array(raw["m1_tokens"], dtype=np.float64),
                tokens_m2=np.array(raw["m2_tokens"], dtype=np.float64),
                time=float(raw["time"]),
                event=int(raw["event"]),
                bin=raw["bin"],
            )
        )
    edges = np.array(doc["bin_edges"], dtype=np.float64) if doc["bin_edges"] else None
    return Cohort(patients=patients, n_bins=doc["n_bins"], bin_edges=edges)
