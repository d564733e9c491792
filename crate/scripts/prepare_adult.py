#!/usr/bin/env python3
"""Convert the raw UCI `adult.data` file into the 8-feature CSV used by `cfx`.

Category groupings follow the widely used DiCE/Mahajan preprocessing, which
keeps all 32,561 rows of the training file ("?" becomes "Other/Unknown").

    python3 scripts/prepare_adult.py path/to/adult.data data/adult.csv
"""
import csv
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "educational-num", "marital-status",
    "occupation", "relationship", "race", "gender", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]

WORKCLASS = {
    "Without-pay": "Other/Unknown", "Never-worked": "Other/Unknown", "?": "Other/Unknown",
    "Federal-gov": "Government", "State-gov": "Government", "Local-gov": "Government",
    "Self-emp-not-inc": "Self-Employed", "Self-emp-inc": "Self-Employed",
}
OCCUPATION = {
    "Adm-clerical": "White-Collar", "Craft-repair": "Blue-Collar",
    "Exec-managerial": "White-Collar", "Farming-fishing": "Blue-Collar",
    "Handlers-cleaners": "Blue-Collar", "Machine-op-inspct": "Blue-Collar",
    "Other-service": "Service", "Priv-house-serv": "Service",
    "Prof-specialty": "Professional", "Protective-serv": "Service",
    "Tech-support": "Service", "Transport-moving": "Blue-Collar",
    "Unknown": "Other/Unknown", "Armed-Forces": "Other/Unknown", "?": "Other/Unknown",
}
MARITAL = {
    "Married-civ-spouse": "Married", "Married-AF-spouse": "Married",
    "Married-spouse-absent": "Married", "Never-married": "Single",
}
RACE = {"Black": "Other", "Asian-Pac-Islander": "Other", "Amer-Indian-Eskimo": "Other"}
EDUCATION = {
    "Assoc-voc": "Assoc", "Assoc-acdm": "Assoc", "11th": "School", "10th": "School",
    "7th-8th": "School", "9th": "School", "12th": "School", "5th-6th": "School",
    "1st-4th": "School", "Preschool": "School",
}

OUT = ["age", "hours_per_week", "workclass", "education", "marital_status",
       "occupation", "race", "gender", "income"]


def main(src, dst):
    rows = []
    with open(src, newline="") as fh:
        for line in fh:
            parts = [p.strip() for p in line.strip().split(", ")]
            if len(parts) != len(COLUMNS):
                continue
            r = dict(zip(COLUMNS, parts))
            rows.append({
                "age": int(r["age"]),
                "hours_per_week": int(r["hours-per-week"]),
                "workclass": WORKCLASS.get(r["workclass"], r["workclass"]),
                "education": EDUCATION.get(r["education"], r["education"]),
                "marital_status": MARITAL.get(r["marital-status"], r["marital-status"]),
                "occupation": OCCUPATION.get(r["occupation"], r["occupation"]),
                "race": RACE.get(r["race"], r["race"]),
                "gender": r["gender"],
                "income": r["income"].rstrip("."),
            })
    with open(dst, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=OUT, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
