#!/usr/bin/env python3
"""Build data/adult.csv and data/compas.csv from the copies bundled in the
`responsibly` wheel (pip download --no-deps responsibly==0.1.2).

Adult: adult.data + adult.test concatenated (48,842 rows), header added,
whitespace trimmed, the trailing '.' on test-set labels removed. '?' cells
are kept verbatim.

COMPAS: compas-scores-two-years.csv (7,214 rows) unchanged except that the
second occurrences of the duplicated header names decile_score and
priors_count become decile_score.1 and priors_count.1.
"""
import csv
import io
import sys
import zipfile
from pathlib import Path

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def adult_rows(text):
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        cells[-1] = cells[-1].rstrip(".")
        yield cells


def main(wheel, out_dir):
    out_dir = Path(out_dir)
    with zipfile.ZipFile(wheel) as z:
        train = z.read("responsibly/dataset/adult/adult.data").decode()
        test = z.read("responsibly/dataset/adult/adult.test").decode()
        compas = z.read(
            "responsibly/dataset/compas/compas-scores-two-years.csv").decode()

    with open(out_dir / "adult.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ADULT_COLUMNS)
        n = 0
        for rows in (adult_rows(train), adult_rows(test)):
            for r in rows:
                assert len(r) == len(ADULT_COLUMNS), r
                w.writerow(r)
                n += 1
    print("adult.csv rows:", n)

    reader = csv.reader(io.StringIO(compas))
    header = next(reader)
    seen = set()
    renamed = []
    for name in header:
        renamed.append(name + ".1" if name in seen else name)
        seen.add(name)
    with open(out_dir / "compas.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(renamed)
        n = 0
        for r in reader:
            w.writerow(r)
            n += 1
    print("compas.csv rows:", n)


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit("usage: prepare_data.py RESPONSIBLY_WHEEL OUT_DIR")
    main(sys.argv[1], sys.argv[2])
