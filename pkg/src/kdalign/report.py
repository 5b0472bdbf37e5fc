"""Evaluate a checkpoint against a manifest, and compare saved reports."""

import csv

from .dataio import Dataset
from .errors import DimMismatch, SchemaMismatch
from .metrics import evaluate_embeddings
from .student import load_checkpoint, student_forward


def evaluate_checkpoint(checkpoint_path, manifest_path, split, seed=0,
                        teacher_as_student=False):
    """Produce an EvalReport for the student stored in a checkpoint, or for
    the teacher's own embeddings when teacher_as_student is set."""
    ds = Dataset(manifest_path)
    if teacher_as_student:
        def embed_fn(lang, ids):
            return ds.teacher_text[lang][ids]
    else:
        state = load_checkpoint(checkpoint_path)
        params = state["params"]
        if params.in_dim != ds.base_dim or params.out_dim != ds.teacher_dim:
            raise DimMismatch(
                f"checkpoint maps {params.in_dim}->{params.out_dim} but manifest "
                f"has base_dim {ds.base_dim}, teacher_dim {ds.teacher_dim}")

        def embed_fn(lang, ids):
            Z, _ = student_forward(params, ds.base[lang][ids])
            return Z
    return evaluate_embeddings(embed_fn, ds, split, seed=seed)


# Comparison columns: (label, aggregate row, metric key, higher_is_better)
COMPARE_COLUMNS = [
    ("en_i2t_r1", "en", "i2t_r1", True),
    ("en_t2i_r1", "en", "t2i_r1", True),
    ("en_vqa", "en", "vqa_acc", True),
    ("mul_i2t_r1", "mul", "i2t_r1", True),
    ("mul_t2i_r1", "mul", "t2i_r1", True),
    ("mul_vqa", "mul", "vqa_acc", True),
    ("purity", None, None, False),
]


def compare_reports(named_reports):
    """Build a comparison table across methods from report JSON dicts.
    Returns (text, csv_rows); the best value per column is starred."""
    if not named_reports:
        raise SchemaMismatch("no reports given")
    langs0 = set(named_reports[0][1]["per_language"])
    for name, rep in named_reports[1:]:
        if set(rep["per_language"]) != langs0:
            raise SchemaMismatch(
                f"report '{name}' covers languages {sorted(rep['per_language'])}, "
                f"expected {sorted(langs0)}")

    cols = [c for c in COMPARE_COLUMNS
            if c[1] is None or all(c[1] in r["aggregates"] for _, r in named_reports)]
    table = []
    for name, rep in named_reports:
        row = []
        for _, agg, key, _ in cols:
            if agg is None:
                row.append(rep["purity"])
            else:
                row.append(rep["aggregates"][agg][key])
        table.append((name, row))

    best = []
    for j, (_, _, _, hib) in enumerate(cols):
        vals = [row[j] for _, row in table]
        best.append(max(vals) if hib else min(vals))

    headers = ["method"] + [c[0] for c in cols]
    csv_rows = [headers]
    lines = []
    width = max(len("method"), *(len(n) for n, _ in table))
    lines.append("  ".join(["method".ljust(width)] + [h.rjust(12) for h in headers[1:]]))
    for name, row in table:
        cells, csv_cells = [], [name]
        for j, v in enumerate(row):
            mark = "*" if v == best[j] else " "
            cells.append(f"{v:.4f}{mark}".rjust(12))
            csv_cells.append(repr(v) + ("*" if v == best[j] else ""))
        lines.append("  ".join([name.ljust(width)] + cells))
        csv_rows.append(csv_cells)
    return "\n".join(lines) + "\n", csv_rows


def write_comparison_csv(csv_rows, path):
    with open(path, "w", newline="") as f:
        csv.writer(f).writerows(csv_rows)
