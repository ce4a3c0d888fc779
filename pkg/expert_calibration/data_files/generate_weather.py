"""
Generates a synthetic hourly weather and demand trace standing in for a year
of measured wind speed, irradiance and temperature. Seasonal drift in the
wind, the sun and the base shortage makes a chronological split of the year
exhibit a train/test distribution shift.
"""

import numpy as np
import pandas as pd

from expert_calibration.demand import ShortageParams
from expert_calibration.demand import synthesize_base_shortage
from expert_calibration.demand import WeatherRecord


def seasonal(day, days_per_year=365.0, phase=0.0):
    """
    A yearly cosine that is 1 on day ``phase`` and -1 half a year later.
    """
    return np.cos(2 * np.pi * (day - phase) / days_per_year)


def wind_speeds(days, hours, rng):
    """
    Weibull (shape 2) wind speeds whose scale is highest in winter, with
    some persistence from hour to hour.
    """
    scale = 6.5 + 1.5 * seasonal(days, phase=15.0)
    raw = scale * rng.weibull(2.0, days.shape[0])
    smooth = np.empty_like(raw)
    smooth[0] = raw[0]
    for i in range(1, raw.shape[0]):
        smooth[i] = 0.7 * smooth[i - 1] + 0.3 * raw[i]
    return np.maximum(smooth, 0.0)


def irradiance(days, hours, rng):
    """
    Clear sky irradiance in kW/m^2 peaking at noon and in summer, reduced by
    daily cloud cover.
    """
    peak = 0.65 - 0.3 * seasonal(days, phase=15.0)
    daylight = np.maximum(np.sin(np.pi * (hours - 6.0) / 12.0), 0.0)
    clouds = rng.uniform(0.4, 1.0, int(days.max()) + 1)[days.astype(int)]
    return peak * daylight * clouds


def temperatures(days, hours, rng):
    return (12.0 - 10.0 * seasonal(days, phase=15.0) +
            5.0 * np.sin(2 * np.pi * (hours - 9.0) / 24.0) +
            rng.normal(0.0, 1.5, days.shape[0]))


def generate_weather(days=365, seed=0, shortage=None, start='2020-01-01'):
    """
    Returns ``24 * days`` hourly :class:`WeatherRecord
    <expert_calibration.demand.WeatherRecord>` objects starting at midnight
    on ``start``. The mean base shortage grows by 30% over the year.

    >>> records = generate_weather(2, seed=1)
    >>> len(records)
    48
    """
    if days < 1:
        raise ValueError("days must be >= 1.")
    rng = np.random.default_rng(seed)
    shortage = ShortageParams() if shortage is None else shortage
    stamps = pd.date_range(start, periods=24 * days, freq='h')
    hours = np.asarray(stamps.hour, dtype=np.float64)
    day = np.arange(24 * days) // 24
    day = day.astype(np.float64)

    wind = wind_speeds(day, hours, rng)
    ghi = irradiance(day, hours, rng)
    temp = temperatures(day, hours, rng)
    base = synthesize_base_shortage(stamps, shortage, rng)
    base = base * (1.0 + 0.3 * day / 365.0)

    return [WeatherRecord(stamps[i], wind[i], ghi[i], temp[i], base[i])
            for i in range(24 * days)]
