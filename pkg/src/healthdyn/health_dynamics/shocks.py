"""Distribution of two-year health changes by age band and previous health."""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy import stats

DEFAULT_BANDS = ((50, 59), (60, 69), (70, 90))


def shock_moments(residual_panel: pd.DataFrame, value_col: str = "h", bands=DEFAULT_BANDS,
                  n_groups: int = 10, min_count: int = 30) -> pd.DataFrame:
    """Variance, skewness and kurtosis of ``dh = h_t - h_{t-2}``.

    Changes are taken between consecutive waves of the same person
    (``wave`` differing by one). Cells are age band (age at ``t``) by decile
    of ``h_{t-2}`` within the band. Kurtosis is Pearson's (3 for a normal).
    Cells with fewer than ``min_count`` changes are reported as NaN.
    """
    df = residual_panel[["person_id", "wave", "age", value_col]].dropna()
    df = df.sort_values(["person_id", "wave"])
    prev = df.groupby("person_id")[[value_col, "wave"]].shift(1)
    consecutive = (df["wave"] - prev["wave"]) == 1
    d = pd.DataFrame({"age": df["age"], "prev": prev[value_col],
                      "dh": df[value_col] - prev[value_col]})[consecutive.to_numpy()]
    rows = []
    for lo, hi in bands:
        band = d[(d["age"] >= lo) & (d["age"] <= hi)]
        label = f"{lo}-{hi}"
        if len(band) == 0:
            groups = np.zeros(0, dtype=int)
        else:
            ranks = band["prev"].rank(method="first").to_numpy()
            groups = np.minimum(((ranks - 1) * n_groups / len(band)).astype(int), n_groups - 1)
        for g in range(n_groups):
            x = band["dh"].to_numpy()[groups == g]
            if x.size < min_count:
                rows.append((label, g + 1, x.size, np.nan, np.nan, np.nan))
                continue
            var = float(np.var(x))
            if var == 0:
                rows.append((label, g + 1, x.size, 0.0, np.nan, np.nan))
                continue
            rows.append((label, g + 1, x.size, var, float(stats.skew(x)),
                         float(stats.kurtosis(x, fisher=False))))
    return pd.DataFrame(rows, columns=["band", "decile", "n", "variance", "skewness", "kurtosis"])
