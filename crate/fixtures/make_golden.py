#!/usr/bin/env python3
"""Regenerates the golden fixture corpus in fixtures/golden/.

The composition tables below fix how many pairs carry each relation set, so
the expected statistics can be counted by hand from this file alone.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent / "golden"

# (domain, relations, count) for the 200 ground-truth pairs.
GROUND_TRUTH = [
    ("www.gettyimages.com", ["Visible", "Meta"], 30),
    ("www.gettyimages.com", ["Visible", "Meta", "Action"], 5),
    ("www.gettyimages.com", ["Meta"], 2),
    ("www.gettyimages.com", ["Visible"], 13),
    ("www.dailymail.co.uk", ["Story"], 33),
    ("www.dailymail.co.uk", ["Action", "Story"], 6),
    ("www.dailymail.co.uk", ["Meta", "Story"], 2),
    ("www.dailymail.co.uk", ["Visible", "Story"], 7),
    ("www.dailymail.co.uk", ["Subjective", "Story"], 2),
    ("i.pinimg.com", ["Visible", "Subjective"], 8),
    ("i.pinimg.com", ["Subjective"], 5),
    ("i.pinimg.com", ["Subjective", "Story"], 1),
    ("i.pinimg.com", ["Visible", "Meta", "Subjective"], 4),
    ("i.pinimg.com", ["Visible"], 16),
    ("i.pinimg.com", ["Other-Text"], 4),
    ("i.pinimg.com", ["Other-Gibberish"], 2),
    ("www.flickr.com", ["Visible", "Meta", "Story"], 6),
    ("www.flickr.com", ["Visible", "Action"], 18),
    ("www.flickr.com", ["Visible", "Action", "Story"], 3),
    ("www.flickr.com", ["Visible"], 20),
    ("www.flickr.com", ["Action"], 6),
    ("www.flickr.com", ["Irrelevant"], 6),
    ("www.flickr.com", ["Other-Gibberish"], 1),
]

# Facet sets handed out to the 49 Meta pairs.
GT_FACETS = (
    [["When"]] * 9
    + [["How"]] * 23
    + [["Where"]] * 4
    + [["When", "How"]] * 3
    + [["When", "Where"]] * 4
    + [["How", "Where"]] * 5
    + [["When", "How", "Where"]] * 1
)

MODEL_OUTPUTS = [
    (["Visible"], 22),
    (["Visible", "Meta"], 4),
    (["Visible", "Subjective"], 3),
    (["Visible", "Action"], 3),
    (["Story"], 3),
    (["Meta"], 2),
    (["Irrelevant"], 3),
]
MODEL_FACETS = [["When"]] * 2 + [["How"]] * 3 + [["Where"]] * 1

SUBJECTS = [
    "a golden retriever", "two children", "an old fisherman", "a red bicycle",
    "a young woman", "a city bus", "a black cat", "three horses",
    "a street musician", "a wooden boat", "a lighthouse", "a group of hikers",
    "a chef", "a vintage car", "a small bakery",
]
PLACES = [
    "on a sandy beach", "in a busy market", "near the river", "under a cherry tree",
    "on a snowy hill", "at the train station", "in a quiet park", "by the harbor",
    "on a mountain trail", "in the old town", "outside a cafe", "in a wheat field",
    "on a rooftop", "at the county fair", "beside a stone wall",
]
ACTIONS = ["walking", "jumping", "running", "climbing", "waving", "dancing"]
WHEN = ["photographed in 1998", "at dawn in may", "during the 2012 floods"]
HOW = ["shot with a wide angle lens", "captured on film", "taken with a drone"]
WHERE = ["in lisbon", "outside oslo", "near cape town"]
STORY = [
    "was rescued by neighbours after the storm",
    "became a local celebrity last summer",
    "will be honoured at a ceremony next week",
]


def caption(rels, facets, k):
    s = SUBJECTS[k % len(SUBJECTS)]
    p = PLACES[(k // len(SUBJECTS) + k) % len(PLACES)]
    if rels == ["Irrelevant"]:
        return f"click here for {s} deals number {k}"
    if rels == ["Other-Text"]:
        return f"watermark text overlay code {k:04d}"
    if rels == ["Other-Gibberish"]:
        return f"xq zzv lorp {k} blick"
    parts = []
    if "Subjective" in rels:
        parts.append("a beautiful view of")
    parts.append(s)
    if "Action" in rels:
        parts.append(ACTIONS[k % len(ACTIONS)])
    parts.append(p)
    if "Story" in rels:
        parts.append(STORY[k % len(STORY)])
    for f in facets:
        table = {"When": WHEN, "How": HOW, "Where": WHERE}[f]
        parts.append(table[k % len(table)])
    return " ".join(parts)


def expand(rows, facet_pool, rng, with_domain):
    items = []
    for row in rows:
        if with_domain:
            domain, rels, n = row
        else:
            (rels, n), domain = row, "www.flickr.com"
        items.extend((domain, rels) for _ in range(n))
    rng.shuffle(items)
    facets = list(facet_pool)
    rng.shuffle(facets)
    out = []
    for domain, rels in items:
        f = facets.pop() if "Meta" in rels else []
        out.append((domain, rels, f))
    assert not facets
    return out


def write(prefix, items, tsv_name, offset, records):
    lines = []
    for i, (domain, rels, facets) in enumerate(items):
        k = offset + i
        lines.append(f"{caption(rels, facets, k)}\thttps://{domain}/photos/{k:04d}.jpg")
        records.append(
            {
                "pair_id": f"{prefix}:{i}",
                "annotator_id": "a1",
                "relations": rels,
                "facets": facets,
                "comment": None,
                "timestamp": 1_600_000_000 + k,
            }
        )
    (OUT / tsv_name).write_text("\n".join(lines) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = random.Random(7)
    gt = expand(GROUND_TRUTH, GT_FACETS, rng, True)
    model = expand(MODEL_OUTPUTS, MODEL_FACETS, rng, False)
    records = []
    write("eval", gt, "ground_truth.tsv", 0, records)
    write("model", model, "model_outputs.tsv", 500, records)
    order = {"Visible": 0, "Subjective": 1, "Action": 2, "Story": 3, "Meta": 4,
             "Irrelevant": 5, "Other-Text": 6, "Other-Gibberish": 7}
    with open(OUT / "annotations.jsonl", "w") as f:
        for r in records:
            r["relations"] = sorted(r["relations"], key=order.get)
            r["facets"] = sorted(r["facets"], key={"When": 0, "How": 1, "Where": 2}.get)
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
