"""Build the bundled COMPAS table from the public two-year recidivism file.

Usage: python3 scripts/export_compas.py compas-scores-two-years.csv

Applies the customary row filters (screening within 30 days of arrest, known
recidivism, non-ordinary charge, a COMPAS score, African-American or
Caucasian) and keeps three features, race and the no-recidivism label.
"""
import argparse
import csv
from pathlib import Path

from fairpolicy.dataset import FeatureSchema, FeatureSpec, save_schema

SCHEMA = FeatureSchema(
    features=(
        FeatureSpec("priors_count", "count"),
        FeatureSpec("c_charge_degree", "binary", ("M", "F")),
        FeatureSpec("age_cat", "categorical", ("Less than 25", "25 - 45", "Greater than 45")),
    ),
    sensitive="race",
    sensitive_values=("African-American", "Caucasian"),
    proxy="no_recid",
)


def keep(row) -> bool:
    return (
        row["days_b_screening_arrest"] != ""
        and abs(int(row["days_b_screening_arrest"])) <= 30
        and row["is_recid"] != "-1"
        and row["c_charge_degree"] != "O"
        and row["score_text"] != "N/A"
        and row["race"] in SCHEMA.sensitive_values
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/fairpolicy/data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["priors_count", "c_charge_degree", "age_cat", "race", "no_recid"]
    n = 0
    with open(args.source, newline="") as fin, open(out / "compas.csv", "w", newline="") as fout:
        w = csv.writer(fout)
        w.writerow(cols)
        for row in csv.DictReader(fin):
            if keep(row):
                w.writerow([row["priors_count"], row["c_charge_degree"], row["age_cat"], row["race"],
                            1 - int(row["two_year_recid"])])
                n += 1
    save_schema(SCHEMA, out / "compas.json")
    print(f"wrote {n} rows to {out / 'compas.csv'}")


if __name__ == "__main__":
    main()
