"""Embedding file format (magic "MKDE"), dataset manifests, the synthetic
multilingual corpus generator, and the batch loader feeding the trainer.

The manifest is a JSON file sitting next to the embedding files it references;
see README for the schema.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (BadConfig, BadMagic, BadVersion, DimMismatch, DimOverflow,
                     MissingFile, RowCountMismatch, TruncatedFile)
from .tensormath import normalize_rows

MKDE_MAGIC = b"MKDE"
MKDE_VERSION = 1
DTYPE_CODES = {"f32": 0, "f64": 1}
DTYPE_NP = {0: "<f4", 1: "<f8"}
U32_MAX = 2**32 - 1


def write_embeddings(path, M, dtype="f64"):
    """Write a matrix as an MKDE file (little-endian, row-major)."""
    M = np.asarray(M)
    if M.ndim != 2:
        raise DimMismatch(f"write_embeddings: expected a matrix, got shape {M.shape}")
    if dtype not in DTYPE_CODES:
        raise BadConfig(f"dtype must be f32 or f64, got '{dtype}'")
    rows, dim = M.shape
    if rows > U32_MAX or dim > U32_MAX:
        raise DimOverflow(f"matrix {rows}x{dim} exceeds u32 header fields")
    code = DTYPE_CODES[dtype]
    with open(path, "wb") as f:
        f.write(MKDE_MAGIC)
        f.write(struct.pack("<IBII", MKDE_VERSION, code, rows, dim))
        f.write(np.ascontiguousarray(M, dtype=DTYPE_NP[code]).tobytes())


def read_embeddings(path):
    """Read an MKDE file back into a float64 (or float32) matrix."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    data = path.read_bytes()
    if len(data) < 17:
        raise TruncatedFile(f"{path}: header incomplete")
    if data[:4] != MKDE_MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:4]!r}")
    version, code, rows, dim = struct.unpack("<IBII", data[4:17])
    if version != MKDE_VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")
    if code not in DTYPE_NP:
        raise BadVersion(f"{path}: unknown dtype code {code}")
    itemsize = 4 if code == 0 else 8
    expected = 17 + rows * dim * itemsize
    if len(data) != expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes, got {len(data)}")
    M = np.frombuffer(data, dtype=DTYPE_NP[code], offset=17)
    return M.reshape(rows, dim).astype(np.float32 if code == 0 else np.float64)


@dataclass
class SyntheticSpec:
    n_concepts: int = 512
    n_languages: int = 4
    teacher_dim: int = 16
    base_dim: int = 32
    sigma_lang: float = 0.5
    sigma_sample: float = 0.02
    n_val: int = 64
    n_test: int = 128
    seed: int = 0

    def validate(self):
        for name in ("n_concepts", "n_languages", "teacher_dim", "base_dim"):
            if getattr(self, name) < 1:
                raise BadConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_languages < 2:
            raise BadConfig("need at least 2 languages (anchor + one other)")
        if self.sigma_lang < 0 or self.sigma_sample < 0:
            raise BadConfig("noise scales must be >= 0")
        if self.n_val + self.n_test >= self.n_concepts:
            raise BadConfig("n_val + n_test must leave a non-empty train split")


def _language_names(n):
    return ["en"] + [f"l{i}" for i in range(1, n)]


def generate_synthetic(spec: SyntheticSpec, out_dir):
    """Build an on-disk dataset: unit-norm Gaussian concepts as teacher text,
    noisy normalized copies as images, and per-language affine images of the
    concepts as student base features. Deterministic given the seed."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n, td, bd = spec.n_concepts, spec.teacher_dim, spec.base_dim

    concepts = normalize_rows(rng.standard_normal((n, td)))
    images = concepts + spec.sigma_sample * rng.standard_normal((n, td))
    images = normalize_rows(images)

    eye_pad = np.zeros((td, bd))
    eye_pad[:, :min(td, bd)] = np.eye(td, min(td, bd))

    langs = _language_names(spec.n_languages)
    files = {"student_base": {}, "teacher_text": {}}
    write_embeddings(out / "teacher_text.mkde", concepts, "f64")
    write_embeddings(out / "image.mkde", images, "f64")
    for lang in langs:
        A = eye_pad + spec.sigma_lang * rng.standard_normal((td, bd)) / np.sqrt(td)
        b = spec.sigma_lang * rng.standard_normal(bd)
        base = concepts @ A + b + spec.sigma_sample * rng.standard_normal((n, bd))
        fname = f"base_{lang}.mkde"
        write_embeddings(out / fname, base, "f64")
        files["student_base"][lang] = fname
        files["teacher_text"][lang] = "teacher_text.mkde"

    perm = rng.permutation(n)
    test_ids = np.sort(perm[:spec.n_test]).tolist()
    val_ids = np.sort(perm[spec.n_test:spec.n_test + spec.n_val]).tolist()
    train_ids = np.sort(perm[spec.n_test + spec.n_val:]).tolist()

    manifest = {
        "languages": langs,
        "anchor_language": "en",
        "anchor_source": "text",
        "n_samples": n,
        "teacher_dim": td,
        "base_dim": bd,
        "splits": {"train": train_ids, "val": val_ids, "test": test_ids},
        "files": {
            "student_base": files["student_base"],
            "teacher_text": files["teacher_text"],
            "image": "image.mkde",
        },
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


class Dataset:
    """A manifest plus its embedding matrices, validated and held in memory."""

    def __init__(self, manifest_path):
        manifest_path = Path(manifest_path)
        if not manifest_path.exists():
            raise MissingFile(str(manifest_path))
        with open(manifest_path) as f:
            m = json.load(f)
        root = manifest_path.parent
        self.manifest = m
        self.languages = list(m["languages"])
        self.anchor_language = m["anchor_language"]
        self.anchor_source = m.get("anchor_source", "text")
        self.n_samples = int(m["n_samples"])
        self.splits = {k: np.asarray(v, dtype=np.int64) for k, v in m["splits"].items()}

        if self.anchor_language not in self.languages:
            raise BadConfig(f"anchor language '{self.anchor_language}' not in languages")
        if self.anchor_source not in ("text", "image"):
            raise BadConfig(f"anchor_source must be text or image, got '{self.anchor_source}'")

        self.base = {lang: read_embeddings(root / path)
                     for lang, path in m["files"]["student_base"].items()}
        self.teacher_text = {lang: read_embeddings(root / path)
                             for lang, path in m["files"]["teacher_text"].items()}
        self.image = read_embeddings(root / m["files"]["image"])

        for name, M in [("image", self.image)] + \
                [(f"base[{k}]", v) for k, v in self.base.items()] + \
                [(f"teacher_text[{k}]", v) for k, v in self.teacher_text.items()]:
            if M.shape[0] != self.n_samples:
                raise RowCountMismatch(
                    f"{name}: {M.shape[0]} rows, manifest says {self.n_samples}")
        for split, ids in self.splits.items():
            if ids.size and (ids.min() < 0 or ids.max() >= self.n_samples):
                raise RowCountMismatch(f"split '{split}' has out-of-range ids")

        self.base_dim = self.base[self.anchor_language].shape[1]
        self.teacher_dim = self.image.shape[1]

    def anchor_embeddings(self):
        """Teacher embeddings the student is aligned against."""
        if self.anchor_source == "image":
            return self.image
        return self.teacher_text[self.anchor_language]

    def non_anchor_languages(self):
        return [l for l in self.languages if l != self.anchor_language]


def load_batches(ds: Dataset, split, batch_size, shuffle_seed, epoch=0):
    """Deterministic batch stream for one epoch: each sample is paired with one
    uniformly drawn non-anchor language."""
    if split not in ds.splits:
        raise BadConfig(f"unknown split '{split}'")
    if batch_size < 1:
        raise BadConfig("batch_size must be >= 1")
    ids = ds.splits[split]
    others = ds.non_anchor_languages()
    rng = np.random.default_rng([shuffle_seed, epoch])
    perm = ids[rng.permutation(ids.size)]
    lang_idx = rng.integers(0, len(others), size=ids.size)
    anchors = ds.anchor_embeddings()
    base_e = ds.base[ds.anchor_language]
    for start in range(0, ids.size, batch_size):
        sel = perm[start:start + batch_size]
        li = lang_idx[start:start + batch_size]
        X_m = np.stack([ds.base[others[j]][i] for i, j in zip(sel, li)])
        yield {
            "ids": sel,
            "langs": [others[j] for j in li],
            "X_m": X_m,
            "X_e": base_e[sel],
            "T": anchors[sel],
        }


def batches_per_epoch(ds: Dataset, split, batch_size):
    n = ds.splits[split].size
    return (n + batch_size - 1) // batch_size
