"""Shared fixtures: deterministic surrogate CSVs with the documented schemas.

The real-data checks run against the documented Housing / LSAC files when the
environment points at them (PERFRIDGE_HOUSING_CSV, PERFRIDGE_LSAC_CSV).
Otherwise they run on surrogate corpora generated here: same column names,
same row counts, comparable correlation structure, and noise placed in the
regime each dataset's qualitative claims concern (Housing: strong linear
signal; LSAC: weak signal, heavy noise).
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
import pytest


def write_csv(path: Path, cols: dict) -> None:
    names = list(cols)
    n = len(next(iter(cols.values())))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(n):
            w.writerow(
                [cols[k][i] if isinstance(cols[k][i], str) else repr(float(cols[k][i])) for k in names]
            )


def make_housing_columns(n: int = 20640, seed: int = 77) -> dict:
    rng = np.random.default_rng(seed)
    f_inc = rng.standard_normal(n)
    f_loc = rng.standard_normal(n)
    f_size = rng.standard_normal(n)
    medinc = 3.9 + 1.9 * np.maximum(f_inc, -1.8) + 0.3 * f_loc + 0.4 * rng.standard_normal(n)
    houseage = np.clip(28 - 4 * f_loc + 12 * rng.standard_normal(n), 1, 52)
    averooms = 5.4 + 1.1 * f_size + 0.6 * f_inc + 0.8 * rng.standard_normal(n)
    avebedrms = 1.1 + 0.18 * f_size - 0.05 * f_inc + 0.12 * rng.standard_normal(n)
    population = np.exp(7 + 0.5 * f_loc + 0.45 * rng.standard_normal(n))
    aveoccup = 2.9 + 0.5 * f_loc - 0.2 * f_inc + 0.6 * rng.standard_normal(n)
    latitude = 35.6 + 2.1 * f_loc + 0.9 * rng.standard_normal(n)
    longitude = -119.6 - 2.0 * f_loc + 1.0 * rng.standard_normal(n)
    price = (
        2.1 + 0.85 * medinc / 2 + 0.02 * houseage / 10 + 0.12 * averooms / 2
        - 0.35 * avebedrms - 0.25 * (aveoccup - 2.9) + 0.15 * f_loc
        - 0.10 * np.abs(latitude - 35.6) + 0.55 * rng.standard_normal(n)
    )
    return {
        "MedInc": medinc,
        "HouseAge": houseage,
        "AveRooms": averooms,
        "AveBedrms": avebedrms,
        "Population": population,
        "AveOccup": aveoccup,
        "Latitude": latitude,
        "Longitude": longitude,
        "MedHouseVal": np.clip(price, 0.15, 5.2),
    }


def make_lsac_columns(n: int = 20427, seed: int = 101) -> dict:
    rng = np.random.default_rng(seed)
    ability = rng.standard_normal(n)
    ses = rng.standard_normal(n)
    cols: dict = {}
    cols["Unnamed: 0"] = np.arange(n).astype(float)
    sex = (rng.random(n) < 0.56).astype(float)
    cols["sex"] = sex
    cols["male"] = 1.0 - sex
    fulltime = (rng.random(n) < 0.88).astype(float)
    cols["fulltime"] = fulltime
    cols["parttime"] = 1.0 - fulltime
    dec1 = np.clip(np.round(5.5 + 2.1 * ability + 1.4 * rng.standard_normal(n)), 1, 10)
    cols["decile1b"] = dec1
    cols["decile1"] = dec1
    dec3 = np.clip(np.round(5.5 + 1.9 * ability + 1.5 * rng.standard_normal(n)), 1, 10)
    cols["decile3"] = dec3
    cols["lsat"] = 36.8 + 4.4 * ability + 1.6 * ses + 3.1 * rng.standard_normal(n)
    cols["zfygpa"] = 0.75 * ability + 0.08 * ses + 0.62 * rng.standard_normal(n)
    cols["zgpa"] = 0.68 * ability + 0.10 * ses + 0.70 * rng.standard_normal(n)
    cols["DOB_yr"] = np.clip(np.round(63.5 + 5.8 * rng.standard_normal(n)), 30, 78)
    cols["grad"] = (rng.random(n) < 0.91).astype(float)
    cols["bar1_yr"] = np.clip(np.round(94.4 + 1.9 * rng.standard_normal(n)), 90, 99)
    cols["bar2_yr"] = np.clip(cols["bar1_yr"] + (rng.random(n) < 0.2) * np.round(1 + rng.random(n)), 90, 99)
    cols["fam_inc"] = np.clip(np.round(3.3 + 0.85 * ses + 0.95 * rng.standard_normal(n)), 1, 5)
    cols["age"] = np.clip(np.round(29.5 + 5.4 * rng.standard_normal(n)), 21, 65)
    cols["cluster"] = np.clip(np.round(3.1 + 1.3 * rng.standard_normal(n)), 1, 6)
    cols["Dropout"] = (rng.random(n) < 0.11).astype(float)
    race_draw = rng.random(n)
    black = (race_draw < 0.06).astype(float)
    hisp = ((race_draw >= 0.06) & (race_draw < 0.11)).astype(float)
    asian = ((race_draw >= 0.11) & (race_draw < 0.155)).astype(float)
    other = ((race_draw >= 0.155) & (race_draw < 0.19)).astype(float)
    cols["black"], cols["hisp"], cols["asian"], cols["other"] = black, hisp, asian, other
    cols["race1"] = list(
        np.where(black == 1, "black", np.where(hisp == 1, "hisp",
                 np.where(asian == 1, "asian", np.where(other == 1, "other", "white"))))
    )
    tier = np.clip(np.round(3.4 + 0.8 * ses + 0.5 * ability + 1.0 * rng.standard_normal(n)), 1, 6)
    cols["tier"] = tier
    pass_bar = (0.6 * ability + 0.25 * ses + 0.9 * rng.standard_normal(n) > -1.0).astype(float)
    cols["pass_bar"] = pass_bar
    # per-sample noise about 3x the linear signal: the weak-signal regime
    gpa = (
        3.19 + 0.045 * ability + 0.015 * ses + 0.032 * (dec1 - 5.5) + 0.016 * (dec3 - 5.5)
        + 0.030 * (tier - 3.4) + 0.060 * pass_bar
        - 0.040 * black - 0.025 * hisp + 0.018 * sex + 0.55 * rng.standard_normal(n)
    )
    cols["gpa"] = np.clip(gpa, 1.0, 5.4)
    cols["ugpa"] = 0.82 * cols["gpa"] + 0.12 * ability + 0.20 * rng.standard_normal(n)
    cols["index6040"] = 610 + 72 * (0.8 * cols["gpa"] - 2.5) + 28 * ability + 18 * rng.standard_normal(n)
    cols["dnn_bar_pass_prediction"] = np.clip(
        0.62 + 0.30 * (cols["gpa"] - 3.2) + 0.05 * rng.standard_normal(n), 0, 1
    )
    return cols


@pytest.fixture(scope="session")
def housing_csv(tmp_path_factory) -> Path:
    env = os.environ.get("PERFRIDGE_HOUSING_CSV")
    if env:
        return Path(env)
    path = tmp_path_factory.mktemp("data") / "housing.csv"
    write_csv(path, make_housing_columns())
    return path


@pytest.fixture(scope="session")
def lsac_csv(tmp_path_factory) -> Path:
    env = os.environ.get("PERFRIDGE_LSAC_CSV")
    if env:
        return Path(env)
    path = tmp_path_factory.mktemp("data") / "lsac.csv"
    write_csv(path, make_lsac_columns())
    return path
