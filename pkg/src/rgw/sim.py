"""Seeded Monte Carlo: population trajectories, lineage-chain estimates,
and the typed pure-birth (Yule) process.

Replica r draws every variate from a counter-based stream keyed by
(seed, r), so estimates are reproducible bit-for-bit independent of batch
sizes or worker scheduling.  Reductions run in replica order.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PopulationCapExceeded
from .model import ModelParams
from .rng import ScalarStream, derive_keys, uniforms

_SALT_SPINE = 0x53
_SALT_POP = 0x61
_SALT_YULE = 0x79

_SPINE_BATCH = 1 << 18
_POP_CELL_BUDGET = 1.5e7


def worker_count() -> int:
    """Worker bound from RGW_THREADS (default 1); results never depend on it."""
    raw = os.environ.get("RGW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SimConfig:
    """Replication plan: seed, replica count, population cap, optional
    default horizon used when an operation's n/t argument is omitted."""

    seed: int
    replicas: int
    population_cap: int = 10**6
    horizon: float | int | None = None

    def __post_init__(self):
        if self.replicas < 1:
            raise DomainError(f"replicas must be >= 1, got {self.replicas}")
        if self.population_cap < 1:
            raise DomainError(f"population_cap must be >= 1, got {self.population_cap}")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    replicas_used: int
    capped_fraction: float

    def to_dict(self, seed: int | None = None) -> dict:
        out = {
            "mean": self.mean,
            "std_error": self.std_error,
            "replicas_used": self.replicas_used,
            "capped_fraction": self.capped_fraction,
        }
        if seed is not None:
            out["seed"] = seed
        return out


def _estimate_from_samples(samples: np.ndarray, capped: np.ndarray | None = None) -> Estimate:
    n_total = len(samples)
    if capped is not None and capped.any():
        samples = samples[~capped]
        capped_fraction = float(np.count_nonzero(capped)) / n_total
    else:
        capped_fraction = 0.0
    if len(samples) == 0:
        raise PopulationCapExceeded("all replicas hit the population cap")
    se = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
    return Estimate(float(samples.mean()), se, len(samples), capped_fraction)


def _law_tables(params: ModelParams):
    law = params.law
    support = np.array(law.support, dtype=np.int64)
    cum = np.cumsum([law.mass(int(k)) for k in support])
    cum[-1] = 1.0
    pos = np.array(law.positive_support, dtype=np.int64)
    return support, cum, pos


def _sample_law(support, cum, u):
    idx = np.searchsorted(cum, u, side="right")
    return support[np.minimum(idx, len(support) - 1)]


def _resolve_horizon(value, config: SimConfig, name: str):
    if value is None:
        value = config.horizon
    if value is None:
        raise DomainError(f"{name} not given and config.horizon unset")
    return value


# ---------------------------------------------------------------------------
# lineage-chain estimator
# ---------------------------------------------------------------------------

def simulate_spine(params: ModelParams, n: int | None, config: SimConfig,
                   initial: str | int = "law") -> Estimate:
    """Unbiased estimate of E[Z(n)] by averaging the lineage products
    zeta_1 * ... * zeta_n; O(n) work per replica."""
    n = int(_resolve_horizon(n, config, "n"))
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    law, q = params.law, params.q
    support, cum, pos = _law_tables(params)
    s = len(pos)
    if initial != "law":
        ell = int(initial)
        if ell not in law.masses:
            raise DomainError(f"{ell} is not a support point")

    samples = np.empty(config.replicas)
    for lo in range(0, config.replicas, _SPINE_BATCH):
        hi = min(lo + _SPINE_BATCH, config.replicas)
        reps = np.arange(lo, hi, dtype=np.uint64)
        keys = derive_keys(config.seed, _SALT_SPINE, reps)
        b = hi - lo
        counts = np.zeros((b, s))
        u = uniforms(keys, 0)
        if initial == "law":
            vals = _sample_law(support, cum, u)
        else:
            vals = np.full(b, ell, dtype=np.int64)
        prod = vals.astype(float)
        ppos = np.searchsorted(pos, vals)
        hit = vals > 0
        counts[np.nonzero(hit)[0], ppos[hit]] = 1.0
        for i in range(1, n):
            alive = prod > 0
            if not alive.any():
                break
            u = uniforms(keys, i)
            repeat = u < q
            cumc = counts.cumsum(axis=1) / i
            idx_rep = np.minimum((u[:, None] / q >= cumc).sum(axis=1), s - 1)
            val_rep = pos[idx_rep]
            u_fresh = np.clip((u - q) / (1.0 - q), 0.0, np.nextafter(1.0, 0.0))
            val_fresh = _sample_law(support, cum, u_fresh)
            vals = np.where(repeat, val_rep, val_fresh)
            vals = np.where(alive, vals, 0)
            prod = prod * vals
            hit = vals > 0
            rows = np.nonzero(hit)[0]
            counts[rows, np.searchsorted(pos, vals[hit])] += 1.0
        samples[lo:hi] = prod
    return _estimate_from_samples(samples)


# ---------------------------------------------------------------------------
# population simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationResult:
    """Per-replica trajectories Z(0..n); NaN marks generations past a cap hit."""

    z: np.ndarray        # (replicas, n+1) float
    capped: np.ndarray   # (replicas,) bool
    seed: int

    def estimate(self, gen: int | None = None) -> Estimate:
        gen = self.z.shape[1] - 1 if gen is None else gen
        return _estimate_from_samples(self.z[:, gen], self.capped)

    def to_csv(self, fh) -> None:
        fh.write("replica,generation,Z\n")
        for r in range(self.z.shape[0]):
            for g in range(self.z.shape[1]):
                v = self.z[r, g]
                if math.isnan(v):
                    break
                fh.write(f"{r},{g},{v:.12g}\n")


def _population_batch(params, n, config, initial, lo, hi, support, cum):
    law, q = params.law, params.q
    b = hi - lo
    keys = derive_keys(config.seed, _SALT_POP, np.arange(lo, hi, dtype=np.uint64))
    z = np.zeros((b, n + 1))
    z[:, 0] = 1.0
    capped = np.zeros(b, dtype=bool)
    cap_gen = np.full(b, n + 2, dtype=np.int64)
    base = np.zeros(b, dtype=np.uint64)
    rep = np.arange(b, dtype=np.int64)
    hist = np.empty((b, 0), dtype=np.int32)
    for g in range(n):
        rows = len(rep)
        if rows == 0:
            break
        counts_per_rep = np.bincount(rep, minlength=b)
        starts = np.concatenate(([0], np.cumsum(counts_per_rep)[:-1]))
        local = (np.arange(rows) - starts[rep]).astype(np.uint64)
        ctr = base[rep] + np.uint64(2) * local
        if g == 0:
            if initial == "law":
                cnt = _sample_law(support, cum, uniforms(keys[rep], ctr + np.uint64(1)))
            else:
                cnt = np.full(rows, int(initial), dtype=np.int64)
        else:
            u_anc = uniforms(keys[rep], ctr)
            u_ch = uniforms(keys[rep], ctr + np.uint64(1))
            anc_idx = np.minimum((u_anc * g).astype(np.int64), g - 1)
            anc_val = hist[np.arange(rows), anc_idx].astype(np.int64)
            u_fresh = np.clip((u_ch - q) / (1.0 - q), 0.0, np.nextafter(1.0, 0.0))
            cnt = np.where(u_ch < q, anc_val, _sample_law(support, cum, u_fresh))
        with np.errstate(over="ignore"):
            base += np.uint64(2) * counts_per_rep.astype(np.uint64)
        z_next = np.bincount(rep, weights=cnt.astype(float), minlength=b)
        z[:, g + 1] = z_next
        newly = (~capped) & (z_next > config.population_cap)
        capped |= newly
        cap_gen[newly] = g + 1
        keep = ~capped[rep] & (cnt > 0)
        rep = np.repeat(rep[keep], cnt[keep])
        hist = np.repeat(
            np.column_stack([hist[keep], cnt[keep].astype(np.int32)]), cnt[keep], axis=0
        )
    for r in np.nonzero(capped)[0]:
        z[r, cap_gen[r] + 1:] = np.nan
    return z, capped


def simulate_rgw(params: ModelParams, n: int | None, config: SimConfig,
                 initial: str | int = "law") -> PopulationResult:
    """Simulate the full reinforced branching population for n generations.

    Each individual keeps the complete vector of its ancestors' offspring
    counts (rows shared structurally through np.repeat), so the uniform
    ancestor lookup is a single gather.  Replicas hitting the population
    cap are flagged and excluded from estimates rather than silently kept.
    """
    n = int(_resolve_horizon(n, config, "n"))
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    law = params.law
    if initial != "law" and int(initial) not in law.masses:
        raise DomainError(f"{initial} is not a support point")
    support, cum, _ = _law_tables(params)

    from .analytic import malthusian_rate

    est_final = min(config.population_cap, 4.0 * malthusian_rate(params).m ** n + 4.0)
    batch = int(_POP_CELL_BUDGET / ((n + 1) * est_final))
    batch = max(16, min(config.replicas, batch))
    spans = [(lo, min(lo + batch, config.replicas)) for lo in range(0, config.replicas, batch)]

    z = np.empty((config.replicas, n + 1))
    capped = np.empty(config.replicas, dtype=bool)

    def run(span):
        lo, hi = span
        z[lo:hi], capped[lo:hi] = _population_batch(
            params, n, config, initial, lo, hi, support, cum
        )

    workers = worker_count()
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return PopulationResult(z=z, capped=capped, seed=config.seed)


# ---------------------------------------------------------------------------
# typed pure-birth (Yule) process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class YuleResult:
    """Type counts at the horizon, one row per replica (columns follow
    the law's sorted support)."""

    counts: np.ndarray   # (replicas, |support|) int64
    support: tuple[int, ...]
    capped: np.ndarray
    seed: int

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_csv(self, fh) -> None:
        fh.write("replica," + ",".join(f"Y_{j}" for j in self.support) + "\n")
        for r in range(self.counts.shape[0]):
            fh.write(f"{r}," + ",".join(str(v) for v in self.counts[r]) + "\n")


def simulate_yule(params: ModelParams, t: float | None, config: SimConfig,
                  initial: str | int = "law") -> YuleResult:
    """Event-driven unit-rate pure-birth process with type inheritance.

    With k individuals alive the next birth arrives after Exponential(k);
    the parent is uniform and the child copies its type with probability q,
    otherwise draws a fresh type from the law.  Exponential jumps keep the
    marginal law of the population size exactly geometric.
    """
    t = float(_resolve_horizon(t, config, "t"))
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t!r}")
    law, q = params.law, params.q
    support = law.support
    s = len(support)
    col = {j: i for i, j in enumerate(support)}
    probs = [law.mass(j) for j in support]
    cum = list(np.cumsum(probs))
    cum[-1] = 1.0
    if initial != "law" and int(initial) not in law.masses:
        raise DomainError(f"{initial} is not a support point")

    counts = np.zeros((config.replicas, s), dtype=np.int64)
    capped = np.zeros(config.replicas, dtype=bool)
    for r in range(config.replicas):
        stream = ScalarStream(config.seed, _SALT_YULE, r)
        row = [0] * s
        if initial == "law":
            u = stream.u01()
            idx = 0
            while u > cum[idx]:
                idx += 1
            row[idx] = 1
        else:
            row[col[int(initial)]] = 1
        k = 1
        now = 0.0
        while True:
            now += stream.exponential(k)
            if now > t:
                break
            u = stream.u01() * k
            parent = 0
            acc = row[0]
            while u > acc and parent < s - 1:
                parent += 1
                acc += row[parent]
            u2 = stream.u01()
            if u2 < q:
                child = parent
            else:
                u3 = (u2 - q) / (1.0 - q)
                child = 0
                while u3 > cum[child] and child < s - 1:
                    child += 1
            row[child] += 1
            k += 1
            if k >= config.population_cap:
                capped[r] = True
                break
        counts[r] = row
    return YuleResult(counts=counts, support=support, capped=capped, seed=config.seed)


def estimate_yule_functional(params: ModelParams, ell: int, c: float, t: float,
                             config: SimConfig) -> Estimate:
    """Monte Carlo estimate of E_ell[ prod_j (c j)^{Y_j(t)} ].

    Replicas containing a type-0 individual contribute exactly 0
    (convention 0^0 = 1 applies only to absent types).
    """
    if c <= 0:
        raise DomainError(f"weight factor must be positive, got {c!r}")
    if c * params.law.kstar > 1.0 + 1e-12:
        warnings.warn(
            f"c*k* = {c * params.law.kstar:.4g} > 1: heavy-tailed product, "
            "standard errors may converge slowly",
            stacklevel=2,
        )
    res = simulate_yule(params, t, config, initial=ell)
    base = c * np.array(res.support, dtype=float)
    vals = np.prod(base[None, :] ** res.counts, axis=1)
    return _estimate_from_samples(vals, res.capped)
