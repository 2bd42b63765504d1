"""Write ``credit_standin.csv``, a synthetic substitute for the Taiwan credit
card default file with the same column names for the fields used here.

Payment amounts are zero-inflated log-normals in NT dollars; ``SEX`` follows
the original coding (1 = male, 2 = female). The file is deterministic.

    python3 data/make_standin_credit.py
"""
import csv
from pathlib import Path

import numpy as np

N_ROWS = 6000
SEED = 20090101


def main(path=Path(__file__).with_name("credit_standin.csv")):
    rng = np.random.default_rng(SEED)
    sex = rng.choice([1, 2], size=N_ROWS, p=[0.4, 0.6])
    male = sex == 1
    limit = np.round(np.exp(rng.normal(11.8 + 0.15 * male, 0.8)), -4).clip(10_000, 1_000_000)
    cols = {}
    for name, base in (("PAY_AMT1", 8.2), ("PAY_AMT2", 8.1)):
        amt = np.exp(rng.normal(base + 0.3 * male + 0.2 * (np.log(limit) - 11.8), 1.1))
        amt[rng.random(N_ROWS) < 0.17] = 0.0
        cols[name] = np.round(amt).astype(int)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ID", "LIMIT_BAL", "SEX", "PAY_AMT1", "PAY_AMT2"])
        for i in range(N_ROWS):
            w.writerow([i + 1, int(limit[i]), int(sex[i]), cols["PAY_AMT1"][i], cols["PAY_AMT2"][i]])


if __name__ == "__main__":
    main()
