"""Built-in model catalog and benchmark stage shapes for budget lookup tables.

The catalog carries the nominal (marketing-size) parameter counts of twelve
public models plus, where known, architecture shapes for the exact-FLOPs
accounting and Together-AI style per-million-token prices.  The column list
covers the fourteen pipeline stages of the reference benchmarks; together
they define the budget lookup tables the ``tables`` CLI subcommand emits.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .costmodel import (
    DEFAULT_BASE,
    BaseConfig,
    ModelSpec,
    TaskShape,
    display_budget,
    normalized_budget,
)

# Architecture shapes (layers, hidden) used for exact-FLOPs checks when a
# model spec does not carry its own; keyed by nominal parameter count.
REPRESENTATIVE_ARCH: dict[float, tuple[int, int]] = {
    3e9: (28, 3072),
    8e9: (32, 4096),
    70e9: (80, 8192),
}

CATALOG: tuple[ModelSpec, ...] = (
    ModelSpec("Qwen2.5-72B", 72e9, price_per_mtok_in=1.20, price_per_mtok_out=1.20),
    ModelSpec("Qwen2.5-32B", 32e9, price_per_mtok_in=0.80, price_per_mtok_out=0.80),
    ModelSpec("Qwen2.5-7B", 7e9, price_per_mtok_in=0.30, price_per_mtok_out=0.30),
    ModelSpec(
        "LLaMA-3.1-70B",
        70e9,
        layers=80,
        hidden=8192,
        price_per_mtok_in=0.88,
        price_per_mtok_out=0.88,
    ),
    ModelSpec(
        "LLaMA-3.1-8B",
        8e9,
        layers=32,
        hidden=4096,
        price_per_mtok_in=0.18,
        price_per_mtok_out=0.18,
    ),
    ModelSpec(
        "LLaMA-3.2-3B",
        3e9,
        layers=28,
        hidden=3072,
        price_per_mtok_in=0.06,
        price_per_mtok_out=0.06,
    ),
    ModelSpec("Gemma-2-27B", 27e9),
    ModelSpec("Gemma-2-9B", 9e9),
    ModelSpec("Gemma-2-2B", 2e9),
    ModelSpec("Phi-3-medium", 14e9),
    ModelSpec("Phi-3-small", 7e9),
    ModelSpec("Phi-3-mini", 3.8e9),
)

# (column key, prompt_len, gen_len) in table column order.
TABLE_COLUMNS: tuple[tuple[str, TaskShape], ...] = (
    ("2wiki_r", TaskShape(2048, 128)),
    ("2wiki_qa", TaskShape(256, 64)),
    ("hot_r", TaskShape(2048, 128)),
    ("hot_qa", TaskShape(256, 64)),
    ("cwq_r", TaskShape(1024, 64)),
    ("cwq_qa", TaskShape(256, 64)),
    ("wqsp_r", TaskShape(1024, 64)),
    ("wqsp_qa", TaskShape(128, 64)),
    ("decomp", TaskShape(1024, 64)),
    ("toolsel", TaskShape(1024, 256)),
    ("parampred", TaskShape(1024, 2048)),
    ("code", TaskShape(1024, 1024)),
    ("static", TaskShape(1024, 512)),
    ("dynamic", TaskShape(1024, 256)),
)

TABLE_SAMPLE_COUNTS: tuple[int, ...] = (1, 5, 10, 45, 90)


def budget_table(
    samples: int,
    catalog: tuple[ModelSpec, ...] = CATALOG,
    base: BaseConfig = DEFAULT_BASE,
) -> list[list]:
    """Rows of [model name, rounded budget per column] for one sample count."""
    rows = []
    for model in catalog:
        row: list = [model.name]
        for _, shape in TABLE_COLUMNS:
            row.append(display_budget(normalized_budget(model, samples, shape, base)))
        rows.append(row)
    return rows


def write_budget_tables(
    outdir: str | Path,
    catalog: tuple[ModelSpec, ...] = CATALOG,
    base: BaseConfig = DEFAULT_BASE,
    sample_counts: tuple[int, ...] = TABLE_SAMPLE_COUNTS,
) -> list[Path]:
    """Write one budget CSV per sample count; returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    header = ["model"] + [key for key, _ in TABLE_COLUMNS]
    paths = []
    for s in sample_counts:
        path = outdir / f"budget_s{s}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(budget_table(s, catalog, base))
        paths.append(path)
    return paths
