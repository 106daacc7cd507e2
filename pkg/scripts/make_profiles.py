"""Regenerate the bundled synthetic yearlong hourly profiles.

    python scripts/make_profiles.py

Writes src/dsse/data/profiles/load_multiplier.txt and pv_hinesburg_synthetic.txt.
Both are synthetic: the load multiplier has daily double-peak and seasonal
(summer cooling, winter heating) structure; the PV series is a clear-sky
model at 44.33 N with day-to-day cloudiness, zero at night.
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "dsse" / "data" / "profiles"
HOURS = 8760
LOAD_PEAK = 0.9
LATITUDE = 44.33


def load_multiplier(rng: np.random.Generator) -> np.ndarray:
    t = np.arange(HOURS)
    day = t // 24
    hour = t % 24
    seasonal = 0.72 + 0.16 * np.cos(2 * np.pi * (day - 200) / 365) ** 2
    summer = np.exp(-(((day - 200) / 40.0) ** 2))
    daily = (
        0.55
        + 0.22 * np.exp(-(((hour - 8) / 2.0) ** 2))
        + 0.35 * np.exp(-(((hour - 18.5) / 3.0) ** 2))
        + 0.18 * summer * np.exp(-(((hour - 15) / 3.5) ** 2))
    )
    weekend = np.where(day % 7 >= 5, 0.93, 1.0)
    noise = np.zeros(HOURS)
    for k in range(1, HOURS):
        noise[k] = 0.9 * noise[k - 1] + rng.normal(0, 0.012)
    series = seasonal * daily * weekend * (1 + noise)
    return series * LOAD_PEAK / series.max()


def pv(rng: np.random.Generator) -> np.ndarray:
    t = np.arange(HOURS) + 0.5
    day = t // 24
    hour = t % 24
    decl = np.deg2rad(23.44) * np.sin(2 * np.pi * (284 + day + 1) / 365)
    lat = np.deg2rad(LATITUDE)
    hour_angle = np.deg2rad(15.0 * (hour - 12.0))
    sin_el = np.sin(lat) * np.sin(decl) + np.cos(lat) * np.cos(decl) * np.cos(hour_angle)
    clear = np.clip(sin_el, 0, None) ** 1.15
    clearness = rng.beta(5.0, 1.6, size=365)
    hourly = np.clip(1 + rng.normal(0, 0.12, size=HOURS), 0.2, 1.2)
    series = clear * clearness[day.astype(int)] * hourly
    series[sin_el <= 0] = 0.0
    return series / series.max()


def main():
    rng = np.random.default_rng(20190501)
    OUT.mkdir(parents=True, exist_ok=True)
    header = "# synthetic hourly load multiplier, 8760 values, regenerate with scripts/make_profiles.py\n"
    (OUT / "load_multiplier.txt").write_text(
        header + "\n".join(f"{v:.6f}" for v in load_multiplier(rng)) + "\n"
    )
    header = "# synthetic hourly PV output normalized to peak 1, 8760 values, regenerate with scripts/make_profiles.py\n"
    (OUT / "pv_hinesburg_synthetic.txt").write_text(
        header + "\n".join(f"{v:.6f}" for v in pv(rng)) + "\n"
    )


if __name__ == "__main__":
    main()
