"""Two-stage training: supervised learning on small labeled instances, then
curriculum self-improvement on progressively larger ones using the model's
own search (beam + re-construction) as the label source."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from .decoder import masked_scores, decoder_forward
from .encoder import encode_batch
from .errors import TrainingAbortError
from .heuristics import brute_force_batch, nearest_neighbor, two_opt
from .inference import beam_search, greedy_rollout_batch, prc_batch
from .model import ModelParams
from .numeric import Adam, Tensor
from .tsp import TspInstance, Tour, normalize_coords


@dataclass
class TrainConfig:
    """Hyperparameters for both stages. Defaults are full-scale settings;
    desk_train_config() is the CPU-sized preset used in tests."""

    k_m: int = 100
    n_max: int = 1000
    n_e1: int = 50
    n_e2: int = 50
    batch_size: int = 64
    lr1: float = 1e-4
    lr1_decay: float = 0.97
    lr2: float = 1e-5
    t_max: int = 5
    eps_gap: float = 1e-3
    t_imp: int = 3
    beam_width: int = 16
    prc_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.k_m >= self.n_max:
            raise ValueError("k_m must be smaller than n_max")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.eps_gap <= 0:
            raise ValueError("eps_gap must be positive")


def desk_train_config(**overrides) -> TrainConfig:
    base = dict(
        k_m=20,
        n_max=100,
        n_e1=4,
        n_e2=40,
        batch_size=64,
        prc_iterations=60,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


@dataclass(frozen=True)
class StepTarget:
    """One supervised decoding step inside a partial-solution window.

    Indices are local to the window's node list (the window is re-encoded as
    its own normalized sub-instance, exactly like an improvement-pass
    segment)."""

    prev: int
    dest: int
    candidates: np.ndarray
    target_pos: int


@dataclass(frozen=True)
class PartialSample:
    """A window of a label tour plus the supervised steps it induces.

    ``nodes`` lists the window's global node ids in supervision order; steps
    index into that list."""

    start: int
    length: int
    direction: int
    nodes: np.ndarray
    steps: tuple[StepTarget, ...]


@dataclass(frozen=True)
class TrainSample:
    inst: TspInstance
    label: Tour
    sample: PartialSample


@dataclass
class LabeledBatch:
    items: list[TrainSample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def step_count(self) -> int:
        return sum(len(s.sample.steps) for s in self.items)


def sample_partial_solution(
    inst: TspInstance, label: Tour, k_m: int, rng: np.random.Generator
) -> PartialSample:
    """Pick a random window of the label cycle and derive per-step targets.

    The window's first and last nodes act as previous/destination; interior
    nodes are supervised in label order. Candidate queries run on the window
    itself (it will be re-encoded as a standalone sub-instance); steps whose
    target is outside the nearest-candidate window are skipped.
    """
    n = label.n
    direction = int(rng.integers(0, 2))
    seq = label.order if direction == 0 else label.order[::-1]
    start = int(rng.integers(0, n))
    j = int(rng.integers(3, n))
    window = seq[(start + np.arange(j + 1)) % n]
    sub = inst.coords[window]
    diff = sub[:, None, :] - sub[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    steps: list[StepTarget] = []
    available = np.zeros(j + 1, dtype=bool)
    available[1:j] = True
    prev = 0
    dest = j
    for t in range(1, j):
        k = min(k_m, int(available.sum()))
        row = dist[prev].copy()
        row[~available] = np.inf
        cand = np.argsort(row, kind="stable")[:k]
        hit = np.nonzero(cand == t)[0]
        if hit.size:
            steps.append(StepTarget(prev, dest, cand.astype(np.int64), int(hit[0])))
        available[t] = False
        prev = t
    return PartialSample(start, j, direction, window, tuple(steps))


def make_batch(
    pairs: list[tuple[TspInstance, Tour]], k_m: int, rng: np.random.Generator
) -> LabeledBatch:
    items = [
        TrainSample(inst, label, sample_partial_solution(inst, label, k_m, rng))
        for inst, label in pairs
    ]
    return LabeledBatch(items)


def batch_loss(batch: LabeledBatch, params: ModelParams) -> Tensor:
    """Mean cross-entropy over every supervised step in the batch.

    Each window is renormalized and encoded as its own sub-instance (the
    same presentation segment re-solves use at inference). Windows are
    grouped by size for the encoder; steps are grouped by candidate count so
    each group runs as one stacked decoder call.
    """
    groups: dict[int, list[TrainSample]] = {}
    for s in batch.items:
        groups.setdefault(len(s.sample.nodes), []).append(s)
    term_sum: Tensor | None = None
    total_steps = 0
    for size, samples in sorted(groups.items()):
        norm = np.stack(
            [normalize_coords(s.inst.coords[s.sample.nodes]) for s in samples]
        )
        e = encode_batch(norm, params)
        h = params.config.hidden_dim
        e_flat = nm.reshape(e, (len(samples) * size, h))
        by_k: dict[int, list[tuple[int, StepTarget]]] = {}
        for gi, s in enumerate(samples):
            for st in s.sample.steps:
                by_k.setdefault(len(st.candidates), []).append((gi, st))
        for k, entries in sorted(by_k.items()):
            sel = np.empty((len(entries), k + 2), dtype=np.int64)
            targets = np.empty(len(entries), dtype=np.int64)
            a = np.empty((len(entries), 1, k + 2, k + 2))
            for row, (gi, st) in enumerate(entries):
                local = np.concatenate(([st.prev], st.candidates, [st.dest]))
                sel[row] = gi * size + local
                targets[row] = st.target_pos + 1
                pts = norm[gi][local]
                diff = pts[:, None, :] - pts[None, :, :]
                a[row, 0] = np.sqrt((diff * diff).sum(axis=-1))
            d = nm.gather_rows(e_flat, sel)
            refined = decoder_forward(d, nm.constant(a), params)
            losses = nm.nll_rows(masked_scores(refined, params), targets)
            term = nm.sum_all(losses)
            term_sum = term if term_sum is None else nm.add(term_sum, term)
            total_steps += len(entries)
    if term_sum is None:
        raise ValueError("batch contains no supervised steps")
    return nm.scale(term_sum, 1.0 / total_steps)


def sl_train_step(batch: LabeledBatch, params: ModelParams, optimizer: Adam) -> float:
    """One supervised update; returns the pre-update loss."""
    k_m_bound = max(s.inst.n for s in batch.items)
    loss = batch_loss(batch, params)
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingAbortError(
            f"non-finite loss {value} on batch of {len(batch)} samples "
            f"(max n={k_m_bound})"
        )
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return value


def curriculum_scale(epoch: int, cfg: TrainConfig) -> int:
    """Training-instance size for a second-stage epoch: linear ramp from k_m
    to n_max using integer division."""
    if not (1 <= epoch <= cfg.n_e2):
        raise ValueError(f"epoch must be in 1..{cfg.n_e2}")
    return cfg.k_m + (epoch * (cfg.n_max - cfg.k_m)) // cfg.n_e2


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def label_tour(inst: TspInstance) -> Tour:
    """Ground-truth label at desk scale: exact for n <= 10, nearest-neighbor
    plus 2-opt for n <= 20."""
    from .heuristics import brute_force_optimal

    if inst.n <= 10:
        return brute_force_optimal(inst)
    if inst.n <= 20:
        return two_opt(inst, nearest_neighbor(inst), max_iters=1000)
    raise ValueError("desk-scale labels cover n <= 20 only")


def build_labeled_dataset(
    count: int, n: int, seed: int, chunk: int = 64
) -> list[tuple[TspInstance, Tour]]:
    """Uniform instances with desk-scale labels, generated in bulk."""
    rng = np.random.default_rng(seed)
    coords = rng.random((count, n, 2))
    out: list[tuple[TspInstance, Tour]] = []
    if n <= 10:
        for lo in range(0, count, chunk):
            block = coords[lo : lo + chunk]
            orders, lengths = brute_force_batch(block)
            for i in range(block.shape[0]):
                inst = TspInstance(block[i], name=f"train{n}-{seed}-{lo + i}")
                out.append((inst, Tour(orders[i], float(lengths[i]), inst.metric_mode)))
    else:
        for i in range(count):
            inst = TspInstance(coords[i], name=f"train{n}-{seed}-{i}")
            out.append((inst, label_tour(inst)))
    return out


def generate_uniform_instances(count: int, n: int, rng: np.random.Generator) -> list[TspInstance]:
    coords = rng.random((count, n, 2))
    return [TspInstance(coords[i], name=f"sil{n}-{i}") for i in range(count)]


# ---------------------------------------------------------------------------
# Stage 1: supervised learning
# ---------------------------------------------------------------------------


class TrainLog:
    """Line-oriented JSON training log; records are also kept in memory."""

    def __init__(self, path=None):
        self.path = path
        self.records: list[dict] = []

    def write(self, **record):
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")


def train_stage1(
    params: ModelParams,
    cfg: TrainConfig,
    data_s: list[tuple[TspInstance, Tour]],
    log: TrainLog | None = None,
) -> list[dict]:
    """Supervised stage over the labeled small-scale dataset."""
    if any(inst.n > cfg.k_m for inst, _ in data_s):
        raise ValueError("stage-1 instances must satisfy n <= k_m")
    log = log or TrainLog()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(params.named(), cfg.lr1)
    for epoch in range(1, cfg.n_e1 + 1):
        opt.lr = cfg.lr1 * (cfg.lr1_decay ** (epoch - 1))
        perm = rng.permutation(len(data_s))
        losses = []
        t0 = time.perf_counter()
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            batch = make_batch([data_s[i] for i in idx], cfg.k_m, rng)
            losses.append(sl_train_step(batch, params, opt))
        log.write(
            stage=1,
            epoch=epoch,
            scale=max(inst.n for inst, _ in data_s),
            loss=float(np.mean(losses)),
            lr=opt.lr,
            seconds=round(time.perf_counter() - t0, 3),
        )
    return log.records


# ---------------------------------------------------------------------------
# Stage 2: curriculum self-improvement
# ---------------------------------------------------------------------------


def _search_labels(
    instances: list[TspInstance],
    params32: ModelParams,
    cfg: TrainConfig,
    seed: int,
) -> tuple[float, float, list[Tour]]:
    """Greedy baseline plus improved pseudo-labels via beam search and
    re-construction. The improvement pass starts from the better of the
    greedy and beam tours, so pseudo-labels are never worse than greedy."""
    greedy = greedy_rollout_batch(instances, params32, cfg.k_m)
    beamed = [beam_search(inst, params32, cfg.beam_width, cfg.k_m) for inst in instances]
    best = [b if b.length < g.length else g for g, b in zip(greedy, beamed)]
    improved = prc_batch(instances, best, params32, cfg.prc_iterations, seed, cfg.k_m)
    len_g = float(np.mean([t.length for t in greedy]))
    len_i = float(np.mean([t.length for t in improved]))
    return len_g, len_i, improved


def sil_epoch(
    epoch: int,
    params: ModelParams,
    cfg: TrainConfig,
    data_s: list[tuple[TspInstance, Tour]],
    optimizer: Adam,
    rng: np.random.Generator,
    log: TrainLog | None = None,
) -> dict:
    """One self-improvement epoch at the curriculum's current scale.

    The inner loop trains on pseudo-labels mixed with labeled small-scale
    samples and stops when the iteration cap is hit, the greedy/improved gap
    closes below eps_gap, or improvement stalls for t_imp iterations.
    """
    log = log or TrainLog()
    scale = curriculum_scale(epoch, cfg)
    data2 = generate_uniform_instances(cfg.batch_size, scale, rng)
    params32 = params.cast(np.float32)
    seed0 = int(rng.integers(0, 2**31 - 1))
    len_g, len_i, solutions = _search_labels(data2, params32, cfg, seed0)
    t1 = 0
    t2 = 0
    losses = []
    while t1 < cfg.t_max and (len_g / len_i - 1.0) > cfg.eps_gap and t2 < cfg.t_imp:
        idx = rng.integers(0, len(data_s), size=cfg.batch_size)
        pairs = [(data2[i], solutions[i]) for i in range(len(data2))]
        pairs += [data_s[i] for i in idx]
        batch = make_batch(pairs, cfg.k_m, rng)
        losses.append(sl_train_step(batch, params, optimizer))
        params32 = params.cast(np.float32)
        seed_t = int(rng.integers(0, 2**31 - 1))
        len_g, len_tmp, sol_tmp = _search_labels(data2, params32, cfg, seed_t)
        if len_tmp < len_i:
            t2 = 0
            len_i = len_tmp
            solutions = sol_tmp
        else:
            t2 += 1
        t1 += 1
    record = dict(
        stage=2,
        epoch=epoch,
        scale=scale,
        len_G=len_g,
        len_I=len_i,
        loss=float(np.mean(losses)) if losses else None,
        inner_iters=t1,
    )
    log.write(**record)
    return record


def train_stage2(
    params: ModelParams,
    cfg: TrainConfig,
    data_s: list[tuple[TspInstance, Tour]],
    log: TrainLog | None = None,
    checkpoint_dir=None,
) -> list[dict]:
    """Curriculum self-improvement stage; optionally checkpoints per epoch."""
    from .checkpoint import save_checkpoint

    log = log or TrainLog()
    rng = np.random.default_rng(cfg.seed + 1)
    opt = Adam(params.named(), cfg.lr2)
    records = []
    for epoch in range(1, cfg.n_e2 + 1):
        records.append(sil_epoch(epoch, params, cfg, data_s, opt, rng, log))
        if checkpoint_dir is not None:
            save_checkpoint(params, f"{checkpoint_dir}/stage2-epoch{epoch:03d}.geld")
    return records
