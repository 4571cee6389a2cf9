"""Regenerate the bundled test fixtures. Run from this directory:

    python3 generate.py

Everything is seeded, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from zerotree.forest import ZeroShotForest
from zerotree.schema import DatasetSchema
from zerotree.text_format import parse_tree

HERE = Path(__file__).parent

TOY_SCHEMA = {
    "target": {"name": "condition", "labels": ["healthy", "sick"]},
    "features": [
        {"name": "age", "kind": "numeric", "unit": "years"},
        {"name": "blood pressure", "kind": "numeric", "unit": "mmHg"},
        {"name": "smoker", "kind": "nominal", "categories": ["yes", "no"]},
    ],
}

TOY_TREES = [
    """|- blood pressure (mmHg) <= 140.00
| |- class: healthy
|- blood pressure (mmHg) > 140.00
| |- class: sick""",
    """|- smoker == yes
| |- age (years) <= 50.00
| | |- class: healthy
| |- age (years) > 50.00
| | |- class: sick
|- smoker != yes
| |- class: healthy""",
]

XOR_SCHEMA = {
    "target": {"name": "state", "labels": ["off", "on"]},
    "features": [
        {"name": "signal a", "kind": "numeric"},
        {"name": "signal b", "kind": "numeric"},
        {"name": "noise c", "kind": "numeric"},
        {"name": "noise d", "kind": "numeric"},
        {"name": "noise e", "kind": "numeric"},
        {"name": "noise f", "kind": "numeric"},
    ],
}

XOR_TREES = [
    """|- signal a <= 0.55
| |- class: off
|- signal a > 0.55
| |- class: on""",
    """|- signal b <= 0.45
| |- class: off
|- signal b > 0.45
| |- class: on""",
]


def write_toy2class():
    rng = np.random.default_rng(424242)
    rows = []
    for _ in range(48):
        age = round(float(rng.uniform(20, 80)), 1)
        bp = round(float(rng.uniform(100, 180)), 1)
        smoker = "yes" if rng.random() < 0.4 else "no"
        sick = bp > 140 or (smoker == "yes" and age > 50)
        rows.append([age, bp, smoker, "sick" if sick else "healthy"])
    # a few holes so imputation has work to do; never in the target column
    for row_index, column in [(3, 0), (7, 1), (12, 2), (19, 0), (26, 1), (33, 2)]:
        rows[row_index][column] = ""
    with open(HERE / "toy2class.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["age", "blood pressure", "smoker", "condition"])
        writer.writerows(rows)
    (HERE / "toy2class.schema.json").write_text(json.dumps(TOY_SCHEMA, indent=2) + "\n")

    schema = DatasetSchema.from_dict(TOY_SCHEMA)
    forest = ZeroShotForest(trees=tuple(parse_tree(text, schema) for text in TOY_TREES))
    forest.save(HERE / "toy2class_forest.json")

    script = ["no tree here, sorry"] + [f"Decision tree:\n{text}\n" for text in TOY_TREES * 2]
    (HERE / "induce_script.json").write_text(json.dumps(script, indent=2) + "\n")


def write_xor_gate():
    rng = np.random.default_rng(99)
    rows = []
    for _ in range(120):
        values = [round(float(v), 3) for v in rng.uniform(0, 1, size=6)]
        on = (values[0] > 0.55) != (values[1] > 0.45)
        rows.append(values + ["on" if on else "off"])
    with open(HERE / "xor_gate.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["signal a", "signal b", "noise c", "noise d", "noise e", "noise f", "state"]
        )
        writer.writerows(rows)
    (HERE / "xor_gate.schema.json").write_text(json.dumps(XOR_SCHEMA, indent=2) + "\n")

    schema = DatasetSchema.from_dict(XOR_SCHEMA)
    forest = ZeroShotForest(trees=tuple(parse_tree(text, schema) for text in XOR_TREES))
    forest.save(HERE / "xor_gate_forest.json")


INDUCE_CONFIG = """\
mode = "induction"
seed = 7

[[datasets]]
name = "toy2class"
csv = "toy2class.csv"
schema = "toy2class.schema.json"
target_description = "the patient condition"

[[providers]]
kind = "script"
model = "scripted"
script_file = "induce_script.json"

[induction]
max_depth = 2
trees_per_cell = 2

[split]
fractions = [0.67]
repeats = 2
"""

EMBED_CONFIG = """\
mode = "embedding"
seed = 11

[[datasets]]
name = "toy2class"
csv = "toy2class.csv"
schema = "toy2class.schema.json"
forest = "toy2class_forest.json"

[split]
fractions = [0.67]
repeats = 5

[mlp]
hidden_sizes = [10]
l2_strengths = [0.01]
max_epochs = 150
folds = 3
"""


def main():
    write_toy2class()
    write_xor_gate()
    (HERE / "induce_config.toml").write_text(INDUCE_CONFIG)
    (HERE / "embed_config.toml").write_text(EMBED_CONFIG)
    print("fixtures written to", HERE)


if __name__ == "__main__":
    main()
