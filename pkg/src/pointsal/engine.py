"""The active-learning loop: train, score, select, query, propagate, repeat.

One round trains a snapshot ensemble on the current labels, evaluates it on
the test split, and (budget permitting) queries a fixed number of new points
per image, whose answers are spread over their superpixels. A run ends with
a final training round on the complete label set, so the last metric entry
reflects the full budget.

Every random draw is keyed by (master seed, purpose, round), which makes
runs bit-replayable and lets suspended runs resume without saved RNG state.
A run either answers queries from the ground-truth masks inline or suspends
with pending queries for an external annotator (the HTTP service).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import make_pseudo_labels, pgd_attack
from .config import ExperimentConfig, apply_flat
from .data import DatasetManifest
from .ensemble import (
    Trajectory,
    ensemble_predict,
    save_trajectory,
    train_constant_lr,
    train_den,
    train_with_snapshots,
)
from .gridnet import EPS_CLAMP, GridNet, single_thread_blas
from .labels import SOURCE_QUERIED, SOURCE_SEED, SparseLabels
from .metrics import evaluate_maps
from .oracle import LabelAnswer, LabelQuery, append_records, gt_answer, initial_points
from .sampling import (attach_descriptors, candidate_set, greedy_cover,
                       point_descriptor, select_batch, similarity_phi)
from .seeding import derive_int, rng_for
from .superpixels import propagate, segment
from .uncertainty import bvsb, uncertainty_map

log = logging.getLogger(__name__)

STRATEGIES = (
    "adversarial",       # full pipeline: attack uncertainty + cover + phi filter
    "adversarial_den",   # deep ensemble replaces the trajectory ensemble
    "adversarial_topk",  # attack uncertainty, plain top-k (no diversity stage)
    "adversarial_nosp",  # no superpixel propagation
    "adversarial_constlr",  # trajectory snapshots under a constant rate
    "random",            # uniform random unlabeled points
    "entropy",           # top-k by prediction entropy
)

STATUS_READY = "ready"
STATUS_AWAITING = "awaiting_labels"
STATUS_COMPLETE = "complete"


class ExperimentLockError(RuntimeError):
    pass


@dataclass
class ExperimentState:
    """The resumable unit of one AL run."""

    strategy: str
    master_seed: int
    target_budget: int
    config_flat: dict
    data_dir: str
    round: int = 0
    budget_spent: int = 0
    seeded: bool = False
    status: str = STATUS_READY
    labels: dict[str, SparseLabels] = field(default_factory=dict)
    metric_history: list[dict] = field(default_factory=list)
    pending_queries: list[LabelQuery] = field(default_factory=list)
    pending_answers: dict[str, LabelAnswer] = field(default_factory=dict)
    pending_metrics: dict | None = None
    full_sup_max_f: float | None = None
    trajectory_refs: list[str] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "strategy": self.strategy,
            "master_seed": self.master_seed,
            "target_budget": self.target_budget,
            "config_flat": {k: v for k, v in sorted(self.config_flat.items())},
            "data_dir": self.data_dir,
            "round": self.round,
            "budget_spent": self.budget_spent,
            "seeded": self.seeded,
            "status": self.status,
            "labels": {k: v.to_dict() for k, v in sorted(self.labels.items())},
            "metric_history": self.metric_history,
            "pending_queries": [q.to_dict() for q in self.pending_queries],
            "pending_answers": {k: a.to_dict()
                                for k, a in sorted(self.pending_answers.items())},
            "pending_metrics": self.pending_metrics,
            "full_sup_max_f": self.full_sup_max_f,
            "trajectory_refs": self.trajectory_refs,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "ExperimentState":
        return cls(
            strategy=p["strategy"],
            master_seed=p["master_seed"],
            target_budget=p["target_budget"],
            config_flat=p["config_flat"],
            data_dir=p["data_dir"],
            round=p["round"],
            budget_spent=p["budget_spent"],
            seeded=p["seeded"],
            status=p["status"],
            labels={k: SparseLabels.from_dict(v) for k, v in p["labels"].items()},
            metric_history=p["metric_history"],
            pending_queries=[LabelQuery.from_dict(q) for q in p["pending_queries"]],
            pending_answers={k: LabelAnswer.from_dict(a)
                             for k, a in p["pending_answers"].items()},
            pending_metrics=p["pending_metrics"],
            full_sup_max_f=p["full_sup_max_f"],
            trajectory_refs=p["trajectory_refs"],
        )

    def __eq__(self, other):
        return isinstance(other, ExperimentState) and \
            self.to_payload() == other.to_payload()


def save_state(state: ExperimentState, path):
    payload = state.to_payload()
    blob = json.dumps(payload, sort_keys=True)
    digest = hashlib.sha256(blob.encode()).hexdigest()
    Path(path).write_text(json.dumps({"format": 1, "sha256": digest,
                                      "payload": payload}, sort_keys=True))


def load_state(path) -> ExperimentState:
    doc = json.loads(Path(path).read_text())
    blob = json.dumps(doc["payload"], sort_keys=True)
    if hashlib.sha256(blob.encode()).hexdigest() != doc["sha256"]:
        raise ValueError(f"{path}: state checksum mismatch (corrupt file)")
    return ExperimentState.from_payload(doc["payload"])


def config_from_state(state: ExperimentState) -> ExperimentConfig:
    cfg = ExperimentConfig()
    apply_flat(cfg, {k: str(v) for k, v in state.config_flat.items()})
    return cfg.validate()


class Experiment:
    """One writer over one experiment directory."""

    def __init__(self, exp_dir, state: ExperimentState, cfg: ExperimentConfig):
        self.exp_dir = Path(exp_dir)
        self.state = state
        self.cfg = cfg
        self._locked = False
        self._train_manifest: DatasetManifest | None = None
        self._test_manifest: DatasetManifest | None = None
        self._images: dict[str, np.ndarray] = {}
        self._masks: dict[str, np.ndarray] = {}
        self._partitions = {}
        self._last_ensemble: list[GridNet] | None = None

    # -- construction --------------------------------------------------------

    @classmethod
    def create(cls, exp_dir, data_dir, cfg: ExperimentConfig, strategy: str,
               seed: int, oracle: str = "gt",
               target_budget: int | None = None) -> "Experiment":
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}; one of {STRATEGIES}")
        if oracle not in ("gt", "external"):
            raise ValueError(f"oracle must be 'gt' or 'external', got {oracle!r}")
        cfg.validate()
        exp_dir = Path(exp_dir)
        exp_dir.mkdir(parents=True, exist_ok=True)
        if (exp_dir / "state.json").exists():
            raise FileExistsError(f"{exp_dir} already holds an experiment")
        target = cfg.al.target_budget if target_budget is None else target_budget
        if target > cfg.al.max_budget:
            raise ValueError(f"target budget {target} exceeds al.max_budget "
                             f"{cfg.al.max_budget}")
        state = ExperimentState(
            strategy=strategy, master_seed=seed, target_budget=target,
            config_flat=cfg.to_flat(), data_dir=str(data_dir),
        )
        exp = cls(exp_dir, state, cfg)
        exp._acquire_lock()
        exp._init_labels()
        seed_queries = exp._seed_queries()
        if oracle == "gt":
            answers = [gt_answer(exp._mask(q.image_id), q) for q in seed_queries]
            append_records(exp.exp_dir / "queries.jsonl", seed_queries)
            append_records(exp.exp_dir / "answers.jsonl", answers)
            exp._commit(seed_queries, answers)
        else:
            state.pending_queries = seed_queries
            state.status = STATUS_AWAITING
            append_records(exp.exp_dir / "queries.jsonl", seed_queries)
        exp.save()
        return exp

    @classmethod
    def open(cls, exp_dir) -> "Experiment":
        exp_dir = Path(exp_dir)
        state = load_state(exp_dir / "state.json")
        return cls(exp_dir, state, config_from_state(state))

    def save(self):
        save_state(self.state, self.exp_dir / "state.json")

    def close(self):
        self._release_lock()

    # -- locking -------------------------------------------------------------

    @property
    def _lock_path(self):
        return self.exp_dir / ".lock"

    def _acquire_lock(self):
        if self._locked:
            return
        try:
            fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ExperimentLockError(
                f"{self.exp_dir} is locked by another writer "
                f"(pid {self._lock_path.read_text().strip() or '?'})"
            ) from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._locked = True

    def _release_lock(self):
        if self._locked:
            self._lock_path.unlink(missing_ok=True)
            self._locked = False

    # -- data access ---------------------------------------------------------

    @property
    def train_manifest(self) -> DatasetManifest:
        if self._train_manifest is None:
            self._train_manifest = DatasetManifest.load(
                Path(self.state.data_dir) / "manifest_train.tsv")
        return self._train_manifest

    @property
    def test_manifest(self) -> DatasetManifest:
        if self._test_manifest is None:
            self._test_manifest = DatasetManifest.load(
                Path(self.state.data_dir) / "manifest_test.tsv")
        return self._test_manifest

    def _image(self, image_id: str) -> np.ndarray:
        if image_id not in self._images:
            manifest = self.train_manifest
            self._images[image_id] = manifest.load_image(manifest.entry_by_id(image_id))
        return self._images[image_id]

    def _mask(self, image_id: str) -> np.ndarray:
        if image_id not in self._masks:
            manifest = self.train_manifest
            self._masks[image_id] = manifest.load_mask(manifest.entry_by_id(image_id))
        return self._masks[image_id]

    def _partition(self, image_id: str):
        if image_id not in self._partitions:
            sp = self.cfg.superpixel
            self._partitions[image_id] = segment(
                self._image(image_id), sp.count, sp.compactness, sp.iterations,
                seed=self.state.master_seed,
            )
        return self._partitions[image_id]

    # -- initialization ------------------------------------------------------

    def _init_labels(self):
        for entry in self.train_manifest.entries:
            image = self.train_manifest.load_image(entry)
            self._images[entry.image_id] = image
            h, w = image.shape[:2]
            self.state.labels[entry.image_id] = SparseLabels(entry.image_id, h, w)

    def _seed_queries(self) -> list[LabelQuery]:
        queries = []
        n = self.cfg.al.initial_points
        for entry in self.train_manifest.entries:
            h, w = self._image(entry.image_id).shape[:2]
            for i, (r, c) in enumerate(
                initial_points(entry.image_id, self.state.master_seed, n, h, w)
            ):
                queries.append(LabelQuery(
                    query_id=f"r0_{entry.image_id}_{i}", image_id=entry.image_id,
                    row=r, col=c, round=0,
                    superpixel_id=int(self._partition(entry.image_id).labels[r, c]),
                ))
        return queries

    # -- the round -----------------------------------------------------------

    def advance(self) -> str:
        """Run one round: train + evaluate, then either query, suspend, or
        complete. Returns the resulting status."""
        st = self.state
        if st.status == STATUS_COMPLETE:
            log.info("experiment already complete; advance is a no-op")
            return st.status
        if st.status == STATUS_AWAITING:
            raise RuntimeError("cannot advance: waiting for label answers")
        self._acquire_lock()

        round_no = st.round + 1
        ensemble, updates, traj = self._train_for_round(round_no)
        self._last_ensemble = ensemble
        metrics = self.evaluate(ensemble)
        entry = {
            "round": round_no,
            "budget": st.budget_spent,
            "maxF": metrics["maxF"],
            "avgF": metrics["avgF"],
            "mae": metrics["mae"],
            "updates": updates,
            "full_sup_ratio": (metrics["maxF"] / st.full_sup_max_f
                               if st.full_sup_max_f else None),
        }

        if st.budget_spent >= st.target_budget:
            st.metric_history.append(entry)
            st.round = round_no
            st.status = STATUS_COMPLETE
            traj_dir = self.exp_dir / "final_trajectory"
            save_trajectory(traj or _as_trajectory(ensemble, updates), traj_dir)
            st.trajectory_refs.append("final_trajectory")
            self.save()
            self._release_lock()
            return st.status

        queries = self._select_queries(ensemble, round_no)
        append_records(self.exp_dir / "queries.jsonl", queries)
        st.pending_metrics = entry
        if self.cfg.al.save_round_checkpoints:
            ref = f"round_{round_no:02d}_trajectory"
            save_trajectory(traj or _as_trajectory(ensemble, updates),
                            self.exp_dir / ref)
            st.trajectory_refs.append(ref)

        oracle_mode = getattr(self, "_oracle_mode", "gt")
        if oracle_mode == "gt":
            answers = [gt_answer(self._mask(q.image_id), q) for q in queries]
            append_records(self.exp_dir / "answers.jsonl", answers)
            self._commit(queries, answers)
            self.save()
            return st.status
        st.pending_queries = queries
        st.status = STATUS_AWAITING
        self.save()
        return st.status

    def run(self, oracle: str = "gt") -> ExperimentState:
        """Advance rounds until suspension or completion."""
        self._oracle_mode = oracle
        while self.state.status == STATUS_READY:
            status = self.advance()
            log.info("round %d done: status=%s budget=%d", self.state.round,
                     status, self.state.budget_spent)
        if self.state.status == STATUS_COMPLETE:
            self._release_lock()
        return self.state

    # -- oracle plumbing -----------------------------------------------------

    def pending_queries(self) -> list[LabelQuery]:
        return list(self.state.pending_queries)

    def submit_answer(self, answer: LabelAnswer) -> int:
        """Record one external answer; returns the number still pending.

        Answers are durably appended before the state updates. Exactly-once:
        unknown or already-answered query ids are rejected.
        """
        st = self.state
        pending_ids = {q.query_id for q in st.pending_queries}
        if answer.query_id not in pending_ids:
            raise KeyError(f"unknown query id {answer.query_id!r}")
        if answer.query_id in st.pending_answers:
            raise ValueError(f"query {answer.query_id!r} already answered")
        self._acquire_lock()
        append_records(self.exp_dir / "answers.jsonl", [answer])
        st.pending_answers[answer.query_id] = answer
        self.save()
        return len(st.pending_queries) - len(st.pending_answers)

    def commit_pending(self) -> str:
        """Apply a fully answered batch and return to the ready state."""
        st = self.state
        if st.status != STATUS_AWAITING:
            raise RuntimeError("no suspended round to commit")
        missing = [q.query_id for q in st.pending_queries
                   if q.query_id not in st.pending_answers]
        if missing:
            raise RuntimeError(f"{len(missing)} queries still unanswered")
        answers = [st.pending_answers[q.query_id] for q in st.pending_queries]
        self._commit(st.pending_queries, answers)
        self.save()
        return st.status

    def _commit(self, queries: list[LabelQuery], answers: list[LabelAnswer]):
        """Fold answered queries into the label sets (with propagation), then
        advance the budget/round accounting."""
        st = self.state
        strategy_propagates = st.strategy != "adversarial_nosp"
        for query, answer in zip(queries, answers):
            labels = st.labels[query.image_id]
            source = SOURCE_QUERIED if st.seeded else SOURCE_SEED
            labels.add_point(query.row, query.col, answer.cls, source, query.round)
            if strategy_propagates:
                part = self._partition(query.image_id)
                for r, c, cls, src in propagate(
                    (query.row, query.col, answer.cls), part
                ):
                    labels.add_propagated(r, c, cls, query.round, src)
            labels.validate()

        per_image = len(queries) // max(1, len(st.labels))
        if not st.seeded:
            st.seeded = True
            st.budget_spent = per_image
        else:
            st.budget_spent += per_image
            if st.budget_spent > self.cfg.al.max_budget:
                raise RuntimeError("budget accounting exceeded al.max_budget")
            st.metric_history.append(st.pending_metrics)
            st.pending_metrics = None
            st.round += 1
        st.pending_queries = []
        st.pending_answers = {}
        st.status = STATUS_READY

    # -- training ------------------------------------------------------------

    def _dataset(self):
        items = []
        for entry in self.train_manifest.entries:
            mask, classes = self.state.labels[entry.image_id].as_arrays()
            items.append((self._image(entry.image_id), mask, classes))
        return items

    def _train_for_round(self, round_no: int):
        st = self.state
        dataset = self._dataset()
        shuffle_rng = rng_for(st.master_seed, "shuffle", round_no)
        if st.strategy == "adversarial_den":
            member_seeds = [derive_int(st.master_seed, "den-member", k)
                            for k in range(self.cfg.ensemble.den_size)]
            den = train_den(member_seeds, dataset, self.cfg.ccls.iterations,
                            self.cfg.ccls.constant_lr, self.cfg.arch,
                            dataset[0][0].shape[2], self.cfg.ccls.momentum)
            return den.members, den.update_count, None

        live_ckpt = self.exp_dir / "live_model.ckpt"
        if self.cfg.al.fine_tune and live_ckpt.exists():
            from .gridnet import load_checkpoint
            model = load_checkpoint(live_ckpt)
        else:
            model = GridNet.create(self.cfg.arch, dataset[0][0].shape[2],
                                   seed=derive_int(st.master_seed, "init"))
        if st.strategy == "adversarial_constlr":
            traj = train_constant_lr(model, dataset, self.cfg.ccls, shuffle_rng)
        else:
            traj = train_with_snapshots(model, dataset, self.cfg.ccls, shuffle_rng)
        if self.cfg.al.fine_tune:
            from .gridnet import save_checkpoint
            save_checkpoint(model, live_ckpt)
        return traj.snapshots, traj.update_count, traj

    def evaluate(self, ensemble: list[GridNet]) -> dict:
        self._load_test_split()
        preds = []
        with single_thread_blas():
            for image in self._test_images:
                preds.append(ensemble_predict(ensemble, image))
        return evaluate_maps(preds, self._test_masks)

    def _load_test_split(self):
        if not hasattr(self, "_test_images"):
            self._test_images = [self.test_manifest.load_image(e)
                                 for e in self.test_manifest.entries]
            self._test_masks = [self.test_manifest.load_mask(e)
                                for e in self.test_manifest.entries]

    # -- selection -----------------------------------------------------------

    def _select_queries(self, ensemble: list[GridNet],
                        round_no: int) -> list[LabelQuery]:
        st = self.state
        k = min(self.cfg.al.points_per_round, st.target_budget - st.budget_spent)
        queries = []
        log_rows = []
        with single_thread_blas():
            for entry in self.train_manifest.entries:
                picks = self._select_for_image(entry.image_id, ensemble, k, round_no)
                for i, (r, c, score, phi) in enumerate(picks):
                    queries.append(LabelQuery(
                        query_id=f"r{round_no}_{entry.image_id}_{i}",
                        image_id=entry.image_id, row=r, col=c, round=round_no,
                        superpixel_id=int(self._partition(entry.image_id).labels[r, c]),
                    ))
                    log_rows.append(f"{round_no}\t{entry.image_id}\t{r}\t{c}"
                                    f"\t{score!r}\t{phi!r}")
        with open(self.exp_dir / "selections.tsv", "a") as fh:
            fh.write("\n".join(log_rows) + "\n")
        return queries

    def _select_for_image(self, image_id: str, ensemble: list[GridNet], k: int,
                          round_no: int) -> list[tuple[int, int, float, float]]:
        st = self.state
        image = self._image(image_id)
        labels = st.labels[image_id]
        point_mask = labels.point_mask()
        clean = ensemble_predict(ensemble, image)

        if st.strategy == "random":
            rng = rng_for(st.master_seed, "random-select", round_no, image_id)
            h, w = clean.shape
            open_flat = np.flatnonzero(~point_mask.ravel())
            picks = rng.choice(open_flat, size=min(k, open_flat.size), replace=False)
            return [(int(ix // w), int(ix % w), 0.0, 0.0) for ix in picks]

        if st.strategy == "entropy":
            p = np.clip(clean, EPS_CLAMP, 1 - EPS_CLAMP)
            scores = -(p * np.log(p) + (1 - p) * np.log(1 - p))
            scores[point_mask] = -np.inf
            h, w = scores.shape
            flat = scores.ravel()
            # seeded tie-break: a near-constant map must not degenerate into
            # querying the first pixels in scan order every round
            tiebreak = rng_for(st.master_seed, "entropy-ties", round_no,
                               image_id).permutation(flat.size)
            order = np.lexsort((tiebreak, -flat))[:k]
            return [(int(ix // w), int(ix % w), float(flat[ix]), 0.0)
                    for ix in order]

        # adversarial family
        adv_image = pgd_attack(ensemble, image, make_pseudo_labels(clean),
                               self.cfg.attack)
        adv = ensemble_predict(ensemble, adv_image)
        umap = uncertainty_map(clean, adv, self.cfg.al.margin_threshold,
                               source_round=round_no)
        umap.scores[point_mask] = 0.0

        candidates = candidate_set(umap, self.cfg.sampling.k_percent,
                                   self.cfg.sampling.per_image_cap)
        picks: list[tuple[int, int, float, float]] = []
        if candidates:
            if st.strategy == "adversarial_topk":
                picks = [(p.row, p.col, p.score, 0.0) for p in candidates[:k]]
            else:
                attach_descriptors(candidates, image, clean)
                cover = greedy_cover(candidates,
                                     m=self.cfg.sampling.cover_ratio * k,
                                     seed_index=0)
                labeled_desc = [point_descriptor(e.row, e.col, image, clean)
                                for e in labels.point_entries()]
                chosen = select_batch(cover, labeled_desc, k)
                picks = [(p.row, p.col, p.score,
                          similarity_phi(p, labeled_desc)) for p in chosen]

        if len(picks) < k:
            # all-SR map (or a cover smaller than k): fall back to the open
            # pixels nearest the decision boundary, ties broken by a seeded
            # shuffle so a constant prediction map still spreads queries
            log.warning("round %d %s: %d/%d picks from candidates; "
                        "falling back to min-margin", round_no, image_id,
                        len(picks), k)
            taken = point_mask.copy()
            for r, c, _, _ in picks:
                taken[r, c] = True
            margins = bvsb(clean)
            margins[taken] = np.inf
            h, w = margins.shape
            flat = margins.ravel()
            tiebreak = rng_for(st.master_seed, "fallback-ties", round_no,
                               image_id).permutation(flat.size)
            order = np.lexsort((tiebreak, flat))
            for ix in order[:k - len(picks)]:
                picks.append((int(ix // w), int(ix % w), 0.0, 0.0))
        return picks


def _as_trajectory(models: list[GridNet], updates: int) -> Trajectory:
    """Wrap a bare model list (e.g. ensemble members) for checkpointing."""
    return Trajectory(models, updates, [], list(range(1, len(models) + 1)))


# ---------------------------------------------------------------------------
# module-level drivers


def run_experiment(exp_dir, data_dir, cfg: ExperimentConfig, strategy: str,
                   seed: int, target_budget: int | None = None) -> ExperimentState:
    """One complete ground-truth-oracle run."""
    exp = Experiment.create(exp_dir, data_dir, cfg, strategy, seed,
                            oracle="gt", target_budget=target_budget)
    try:
        if cfg.al.full_sup_baseline:
            _, metrics = train_fully_supervised(data_dir, cfg, seed)
            exp.state.full_sup_max_f = metrics["maxF"]
        return exp.run(oracle="gt")
    finally:
        exp.close()


def train_fully_supervised(data_dir, cfg: ExperimentConfig, seed: int,
                           arch: str | None = None):
    """Train the same way with every pixel labeled; the ratio denominator."""
    train = DatasetManifest.load(Path(data_dir) / "manifest_train.tsv")
    test = DatasetManifest.load(Path(data_dir) / "manifest_test.tsv")
    dataset = []
    for entry in train.entries:
        image = train.load_image(entry)
        mask = train.load_mask(entry)
        dataset.append((image, np.ones(mask.shape, dtype=bool),
                        mask.astype(np.float64)))
    model = GridNet.create(arch or cfg.arch, dataset[0][0].shape[2],
                           seed=derive_int(seed, "init"))
    traj = train_with_snapshots(model, dataset, cfg.ccls,
                                rng_for(seed, "fullsup-shuffle"))
    preds, masks = [], []
    with single_thread_blas():
        for entry in test.entries:
            preds.append(ensemble_predict(traj.snapshots, test.load_image(entry)))
            masks.append(test.load_mask(entry))
    return traj, evaluate_maps(preds, masks)


def ablate(out_dir, data_dir, cfg: ExperimentConfig, strategies: list[str],
           seeds: list[int], target_budget: int | None = None) -> list[dict]:
    """Per-(strategy, seed) final metrics plus per-strategy means; TSV report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for strategy in strategies:
        for seed in seeds:
            exp_dir = out_dir / f"{strategy}_s{seed}"
            state = run_experiment(exp_dir, data_dir, cfg, strategy, seed,
                                   target_budget)
            final = state.metric_history[-1]
            rows.append({"strategy": strategy, "seed": seed,
                         "maxF": final["maxF"], "avgF": final["avgF"],
                         "mae": final["mae"], "updates": final["updates"]})
    lines = ["strategy\tseed\tmaxF\tavgF\tmae\tupdates"]
    for r in rows:
        lines.append(f"{r['strategy']}\t{r['seed']}\t{r['maxF']!r}"
                     f"\t{r['avgF']!r}\t{r['mae']!r}\t{r['updates']}")
    for strategy in strategies:
        vals = [r["maxF"] for r in rows if r["strategy"] == strategy]
        lines.append(f"# {strategy}: mean maxF {np.mean(vals)!r} "
                     f"spread {np.max(vals) - np.min(vals)!r}")
    (out_dir / "ablation.tsv").write_text("\n".join(lines) + "\n")
    return rows


def budget_sweep(out_dir, data_dir, cfg: ExperimentConfig, budgets: list[int],
                 seeds: list[int], strategy: str = "adversarial") -> list[dict]:
    """maxF at each budget, harvested from one max-budget run per seed.

    Because rounds never look ahead, the metric entry at budget b inside a
    longer run is identical to the final entry of a run targeted at b.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    top = max(budgets)
    rows = []
    for seed in seeds:
        exp_dir = out_dir / f"sweep_{strategy}_s{seed}"
        state = run_experiment(exp_dir, data_dir, cfg, strategy, seed,
                               target_budget=top)
        by_budget = {entry["budget"]: entry for entry in state.metric_history}
        for b in budgets:
            if b not in by_budget:
                raise ValueError(f"budget {b} not visited by the sweep run "
                                 f"(budgets seen: {sorted(by_budget)})")
            rows.append({"seed": seed, "budget": b,
                         "maxF": by_budget[b]["maxF"],
                         "avgF": by_budget[b]["avgF"],
                         "mae": by_budget[b]["mae"]})
    lines = ["seed\tbudget\tmaxF\tavgF\tmae"]
    for r in rows:
        lines.append(f"{r['seed']}\t{r['budget']}\t{r['maxF']!r}"
                     f"\t{r['avgF']!r}\t{r['mae']!r}")
    (out_dir / "budget_sweep.tsv").write_text("\n".join(lines) + "\n")
    return rows
