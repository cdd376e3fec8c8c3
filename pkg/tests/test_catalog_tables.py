"""Budget lookup-table tests against the published reference tables.

The published WQSP-QA column is internally inconsistent (see the acceptance
suite for the full reconciliation), so the per-column test here pins the
thirteen reproducible columns at zero mismatches and freezes the observed
WQSP-QA divergence so any regression is caught.
"""

import csv
from pathlib import Path

from ttsbudget.catalog import (
    CATALOG,
    REPRESENTATIVE_ARCH,
    TABLE_COLUMNS,
    TABLE_SAMPLE_COUNTS,
    budget_table,
)

GOLDEN = Path(__file__).resolve().parent / "golden"

# (sample count, model) -> published WQSP-QA cell that Eq-style recomputation
# cannot reproduce; all other 795 cells match exactly.
KNOWN_DIVERGENT_CELLS = 45


def load_published(samples: int) -> dict[str, list[int]]:
    with (GOLDEN / f"budget_s{samples}_published.csv").open() as fh:
        reader = csv.reader(fh)
        next(reader)
        return {row[0]: [int(v) for v in row[1:]] for row in reader}


def test_catalog_has_twelve_models_and_fourteen_columns():
    assert len(CATALOG) == 12
    assert len(TABLE_COLUMNS) == 14
    assert TABLE_SAMPLE_COUNTS == (1, 5, 10, 45, 90)


def test_consistent_columns_reproduce_exactly():
    column_keys = [key for key, _ in TABLE_COLUMNS]
    mismatches = []
    for s in TABLE_SAMPLE_COUNTS:
        published = load_published(s)
        for row in budget_table(s):
            model, computed = row[0], row[1:]
            for key, got, want in zip(column_keys, computed, published[model]):
                if got != want:
                    mismatches.append((s, model, key, got, want))
    off_column = [m for m in mismatches if m[2] != "wqsp_qa"]
    assert off_column == [], f"unexpected mismatches outside wqsp_qa: {off_column}"
    assert len(mismatches) == KNOWN_DIVERGENT_CELLS


def test_spot_published_cells():
    s1 = {row[0]: row[1:] for row in budget_table(1)}
    keys = [key for key, _ in TABLE_COLUMNS]
    assert s1["Qwen2.5-72B"][keys.index("2wiki_r")] == 814
    assert s1["Gemma-2-2B"][keys.index("2wiki_r")] == 21
    assert s1["Phi-3-mini"][keys.index("2wiki_r")] == 41
    s90 = {row[0]: row[1:] for row in budget_table(90)}
    assert s90["Qwen2.5-72B"][keys.index("parampred")] == 69502
    s5 = {row[0]: row[1:] for row in budget_table(5)}
    assert s5["LLaMA-3.2-3B"][keys.index("code")] == 94


def test_representative_architectures_cover_llama_classes():
    by_params = {m.params: m for m in CATALOG}
    for params, (layers, hidden) in REPRESENTATIVE_ARCH.items():
        model = by_params[params]
        assert model.layers == layers and model.hidden == hidden


def test_price_catalog_matches_published_rates():
    prices = {m.name: m.price_per_mtok_in for m in CATALOG if m.has_prices}
    assert prices == {
        "Qwen2.5-72B": 1.20,
        "Qwen2.5-32B": 0.80,
        "Qwen2.5-7B": 0.30,
        "LLaMA-3.1-70B": 0.88,
        "LLaMA-3.1-8B": 0.18,
        "LLaMA-3.2-3B": 0.06,
    }
