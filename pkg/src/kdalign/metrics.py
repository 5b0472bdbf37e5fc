"""Evaluation suite: retrieval recall@k and MRR@k, multiple-choice VQA by
cosine similarity, language-purity clustering, and the full per-language
report with PCA coordinates for external plotting."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.cluster import KMeans

from .errors import BadConfig, BadK, EmptyInput
from .tensormath import normalize_rows, pairwise_cosine

RECALL_KS = (1, 5, 10)


@dataclass
class RetrievalTask:
    queries: np.ndarray   # Q x D
    gallery: np.ndarray   # G x D
    gold: np.ndarray      # Q gold gallery indices
    direction: str = "I2T"


def gold_ranks(task: RetrievalTask) -> np.ndarray:
    """1-based rank of each query's gold item; ties resolved toward the lower
    gallery index."""
    sims = pairwise_cosine(task.queries, task.gallery)
    gold = np.asarray(task.gold)
    g_score = sims[np.arange(len(gold)), gold]
    higher = (sims > g_score[:, None]).sum(axis=1)
    tie_lower = ((sims == g_score[:, None])
                 & (np.arange(sims.shape[1])[None, :] < gold[:, None])).sum(axis=1)
    return 1 + higher + tie_lower


def _check_k(k, gallery_size):
    if not 1 <= k <= gallery_size:
        raise BadK(f"k={k} outside [1, {gallery_size}]")


def recall_at_k(task: RetrievalTask, k: int) -> float:
    _check_k(k, task.gallery.shape[0])
    return float(np.mean(gold_ranks(task) <= k))


def mrr_at_k(task: RetrievalTask, k: int) -> float:
    _check_k(k, task.gallery.shape[0])
    r = gold_ranks(task)
    return float(np.mean(np.where(r <= k, 1.0 / r, 0.0)))


@dataclass
class VQAInstance:
    image: np.ndarray        # D
    candidates: np.ndarray   # C x D, embeddings of question+answer texts
    gold: int


def vqa_accuracy(instances) -> float:
    """Fraction of instances where the most image-similar candidate is the
    gold one; ties pick the lowest index."""
    instances = list(instances)
    if not instances:
        raise EmptyInput("vqa_accuracy: no instances")
    hits = 0
    for inst in instances:
        sims = pairwise_cosine(inst.image[None, :], inst.candidates)[0]
        hits += int(np.argmax(sims) == inst.gold)
    return hits / len(instances)


def purity(embeddings, labels, n_clusters, seed=0) -> float:
    """Cluster L2-normalized embeddings with seeded k-means and report the
    mean majority-label fraction. Lower means languages are better mixed."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise EmptyInput("purity: empty embedding matrix")
    if labels.shape[0] != embeddings.shape[0]:
        raise BadConfig("purity: labels length must match rows")
    if n_clusters < 1:
        raise BadConfig("purity: n_clusters must be >= 1")
    X = normalize_rows(embeddings)
    km = KMeans(n_clusters=n_clusters, init="k-means++", n_init=1,
                max_iter=100, random_state=seed)
    assign = km.fit_predict(X)
    total = 0
    for c in range(n_clusters):
        members = labels[assign == c]
        if members.size:
            _, counts = np.unique(members, return_counts=True)
            total += counts.max()
    return total / embeddings.shape[0]


def pca_2d(X):
    """Top-2 principal-component coordinates of the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    return Xc @ Vt[:2].T


@dataclass
class EvalReport:
    split: str
    anchor_language: str
    per_language: dict          # lang -> {metric: value}, plus "count"
    aggregates: dict            # "en" and "mul" rows
    purity: float
    purity_untrained: float = None
    pca: list = field(default_factory=list)  # rows (id, language, x, y)

    def to_dict(self):
        return {
            "split": self.split,
            "anchor_language": self.anchor_language,
            "per_language": self.per_language,
            "aggregates": self.aggregates,
            "purity": self.purity,
        }

    def metric_names(self):
        first = next(iter(self.per_language.values()))
        return [k for k in first if k != "count"]

    def write(self, out_dir, name="report"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{name}.json", "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        cols = self.metric_names()
        with open(out / f"{name}.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["language", "count"] + cols)
            for lang, row in self.per_language.items():
                w.writerow([lang, row["count"]] + [repr(row[c]) for c in cols])
            for agg, row in self.aggregates.items():
                w.writerow([agg, row["count"]] + [repr(row[c]) for c in cols])
            w.writerow(["purity", "", repr(self.purity)] + [""] * (len(cols) - 1))
        with open(out / f"{name}_pca.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "language", "x", "y"])
            for rid, lang, x, y in self.pca:
                w.writerow([rid, lang, repr(x), repr(y)])

    @staticmethod
    def load_json(path):
        with open(path) as f:
            return json.load(f)


def _retrieval_metrics(text_emb, image_emb):
    """Both retrieval directions at k in {1, 5, 10} plus MRR, for one
    language's text embeddings against the shared image gallery."""
    n = text_emb.shape[0]
    gold = np.arange(n)
    out = {}
    i2t = RetrievalTask(image_emb, text_emb, gold, "I2T")
    t2i = RetrievalTask(text_emb, image_emb, gold, "T2I")
    for tag, task in (("i2t", i2t), ("t2i", t2i)):
        for k in RECALL_KS:
            kk = min(k, n)
            out[f"{tag}_r{k}"] = recall_at_k(task, kk)
            out[f"{tag}_mrr{k}"] = mrr_at_k(task, kk)
    return out


def _vqa_instances(text_emb, image_emb, n_candidates, rng):
    n = text_emb.shape[0]
    instances = []
    for i in range(n):
        distract = rng.choice(np.delete(np.arange(n), i),
                              size=n_candidates - 1, replace=False)
        order = np.concatenate(([i], distract))
        order = order[rng.permutation(n_candidates)]
        gold = int(np.where(order == i)[0][0])
        instances.append(VQAInstance(image_emb[i], text_emb[order], gold))
    return instances


def evaluate_embeddings(embed_fn, ds, split, seed=0, n_candidates=4,
                        purity_subsample=2048):
    """Full metric suite. `embed_fn(lang, ids)` returns the text embeddings
    under evaluation for one language on the given sample ids."""
    ids = ds.splits[split]
    if ids.size == 0:
        raise EmptyInput(f"split '{split}' is empty")
    image_emb = ds.image[ids]
    rng = np.random.default_rng([seed, 7])

    per_language = {}
    all_emb, all_labels, pca_rows = [], [], []
    for lang in ds.languages:
        Z = embed_fn(lang, ids)
        row = _retrieval_metrics(Z, image_emb)
        row["vqa_acc"] = vqa_accuracy(
            _vqa_instances(Z, image_emb, min(n_candidates, ids.size), rng))
        row["count"] = int(ids.size)
        per_language[lang] = row
        all_emb.append(Z)
        all_labels.extend([lang] * ids.size)

    stacked = np.vstack(all_emb)
    labels = np.asarray(all_labels)
    if stacked.shape[0] > purity_subsample:
        sub = np.random.default_rng([seed, 11]).choice(
            stacked.shape[0], size=purity_subsample, replace=False)
    else:
        sub = np.arange(stacked.shape[0])
    pur = purity(stacked[sub], labels[sub], n_clusters=len(ds.languages), seed=seed)

    coords = pca_2d(stacked)
    for j, (lang, Z) in enumerate(zip(ds.languages, all_emb)):
        for local, rid in enumerate(ids):
            x, y = coords[j * ids.size + local]
            pca_rows.append((int(rid), lang, float(x), float(y)))

    metric_keys = [k for k in per_language[ds.languages[0]] if k != "count"]
    anchor = ds.anchor_language
    others = ds.non_anchor_languages()

    def weighted(langs):
        w = np.array([per_language[l]["count"] for l in langs], dtype=np.float64)
        row = {k: float(np.average([per_language[l][k] for l in langs], weights=w))
               for k in metric_keys}
        row["count"] = int(w.sum())
        return row

    aggregates = {"en": weighted([anchor])}
    if others:
        aggregates["mul"] = weighted(others)

    return EvalReport(split=split, anchor_language=anchor,
                      per_language=per_language, aggregates=aggregates,
                      purity=pur, pca=pca_rows)


def multilingual_i2t_r1(embed_fn, ds, split):
    """Mean I2T R@1 over non-anchor languages; the trainer's validation metric."""
    ids = ds.splits[split]
    image_emb = ds.image[ids]
    gold = np.arange(ids.size)
    vals = []
    for lang in ds.non_anchor_languages():
        Z = embed_fn(lang, ids)
        vals.append(recall_at_k(RetrievalTask(image_emb, Z, gold, "I2T"), 1))
    return float(np.mean(vals))
