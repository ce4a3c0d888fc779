"""
The demand module builds problem instances for the sustainable datacenter
demand response case study. A datacenter with on-site wind and solar
generation faces a power shortage ``max(P_s - P_r, 0)`` whenever its base
shortage exceeds the renewable output; the shortage is the context y_t that
the online optimizer tracks.

The module converts hourly weather records into contexts, normalizes them,
cuts them into daily episodes, augments the training episodes, and reads and
writes the weather and dataset files.
"""

import logging

import numpy as np
import pandas as pd

from expert_calibration.core import as_sequence
from expert_calibration.core import DataValidationError
from expert_calibration.core import ProblemInstance

logger = logging.getLogger(__name__)

WEATHER_COLUMNS = ['timestamp', 'wind_speed_mps', 'ghi_kw_m2', 'temp_c',
                   'base_shortage_mw']
DATASET_COLUMNS = ['episode_id', 'step', 'y']
TIMESTAMP_FORMAT = '%Y-%m-%dT%H:%M'
HOURS_PER_DAY = 24


class WeatherRecord(object):
    """
    One hour of weather and demand.

    :param timestamp: the start of the hour
    :param wind_speed: m/s
    :param ghi: global horizontal irradiance in kW/m^2
    :param temperature: degrees Celsius
    :param base_shortage: the base power shortage P_s in MW
    """

    def __init__(self, timestamp, wind_speed, ghi, temperature,
                 base_shortage):
        values = (wind_speed, ghi, temperature, base_shortage)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("Weather values must be finite.")
        if wind_speed < 0 or ghi < 0:
            raise ValueError("wind_speed and ghi must be non-negative.")
        self.timestamp = pd.Timestamp(timestamp)
        self.wind_speed = float(wind_speed)
        self.ghi = float(ghi)
        self.temperature = float(temperature)
        self.base_shortage = float(base_shortage)

    def __eq__(self, other):
        return (isinstance(other, WeatherRecord) and
                self.timestamp == other.timestamp and
                self.wind_speed == other.wind_speed and
                self.ghi == other.ghi and
                self.temperature == other.temperature and
                self.base_shortage == other.base_shortage)

    def __repr__(self):
        return "WeatherRecord(%s, v=%g, ghi=%g, temp=%g, P_s=%g)" % (
            self.timestamp.strftime(TIMESTAMP_FORMAT), self.wind_speed,
            self.ghi, self.temperature, self.base_shortage)


class RenewableParams(object):
    """
    Parameters of the wind turbines and the solar array.

    :param kappa_wind: wind conversion efficiency
    :param rho_air: air density in kg/m^3
    :param a_swept: total swept area of the turbines in m^2
    :param kappa_solar: solar conversion efficiency
    :param a_array: solar array area in m^2
    """

    def __init__(self, kappa_wind=0.30, rho_air=1.23, a_swept=500000.0,
                 kappa_solar=0.10, a_array=10000.0):
        if not (0 < kappa_wind <= 1 and 0 < kappa_solar <= 1):
            raise ValueError("Efficiencies must be in (0, 1].")
        if not (rho_air > 0 and a_swept > 0 and a_array > 0):
            raise ValueError("Air density and areas must be positive.")
        self.kappa_wind = float(kappa_wind)
        self.rho_air = float(rho_air)
        self.a_swept = float(a_swept)
        self.kappa_solar = float(kappa_solar)
        self.a_array = float(a_array)

    def to_dict(self):
        return dict(vars(self))

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class ShortageParams(object):
    """
    A diurnal model of the base power shortage used when the weather source
    has none: ``mean + amplitude cos(2 pi (hour - peak_hour) / 24)`` plus
    Gaussian noise, all in MW.
    """

    def __init__(self, mean_mw=60.0, amplitude_mw=25.0, peak_hour=18.0,
                 noise_std_mw=3.0):
        if mean_mw < 0 or amplitude_mw < 0 or noise_std_mw < 0:
            raise ValueError("Shortage parameters must be non-negative.")
        self.mean_mw = float(mean_mw)
        self.amplitude_mw = float(amplitude_mw)
        self.peak_hour = float(peak_hour)
        self.noise_std_mw = float(noise_std_mw)

    def to_dict(self):
        return dict(vars(self))

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class AugmentConfig(object):
    """
    Augmentation of the training episodes. Every synthetic episode is a raw
    training episode circularly shifted by up to ``max_shift`` hours, scaled
    by a factor drawn from ``U(1 - scale_range, 1 + scale_range)`` and
    jittered with ``N(0, jitter_std^2)`` noise (in normalized units).

    :param n_train: the total number of training episodes; None or a number
        not above the raw episode count disables augmentation
    """

    def __init__(self, n_train=None, scale_range=0.2, jitter_std=0.02,
                 max_shift=23):
        if n_train is not None and n_train < 0:
            raise ValueError("n_train must be non-negative.")
        if not 0 <= scale_range < 1:
            raise ValueError("scale_range must be in [0, 1).")
        if jitter_std < 0 or max_shift < 0:
            raise ValueError("jitter_std and max_shift must be "
                             "non-negative.")
        self.n_train = None if n_train is None else int(n_train)
        self.scale_range = float(scale_range)
        self.jitter_std = float(jitter_std)
        self.max_shift = int(max_shift)

    def to_dict(self):
        return dict(vars(self))

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def wind_power(params, v):
    """
    Returns the wind power ``kappa_wind rho_air a_swept v^3 / 2`` in W.

    >>> round(wind_power(RenewableParams(), 10.0) / 1e6, 2)
    92.25
    """
    if np.any(np.asarray(v) < 0):
        raise ValueError("Wind speed must be non-negative, got %r" % (v,))
    power = 0.5 * params.kappa_wind * params.rho_air * params.a_swept * \
        np.power(np.asarray(v, dtype=np.float64), 3.0)
    return float(power) if power.ndim == 0 else power


def solar_power(params, irradiance, temp):
    """
    Returns the solar power ``kappa_solar a_array I (1 - 0.05 (temp - 25))
    / 2`` in kW for an irradiance in kW/m^2, clamped below at 0 since the
    linear temperature derating turns negative above 45 degrees.

    >>> round(solar_power(RenewableParams(), 1.0, 25.0), 6)
    500.0
    """
    derate = 1.0 - 0.05 * (np.asarray(temp, dtype=np.float64) - 25.0)
    power = 0.5 * params.kappa_solar * params.a_array * \
        np.asarray(irradiance, dtype=np.float64) * derate
    power = np.maximum(power, 0.0)
    return float(power) if power.ndim == 0 else power


def _columns(records):
    return (np.array([r.wind_speed for r in records]),
            np.array([r.ghi for r in records]),
            np.array([r.temperature for r in records]),
            np.array([r.base_shortage for r in records]))


def renewable_mw(records, params):
    """
    Returns ``P_r = P_wind + P_solar`` in MW for every record.
    """
    wind, ghi, temp, _ = _columns(records)
    return wind_power(params, wind) / 1e6 + solar_power(params, ghi,
                                                        temp) / 1e3


def build_contexts(records, params, normalization=None):
    """
    Returns the contexts ``max(P_s - P_r, 0)`` in MW, divided by the
    normalization constant when one is given.

    :raises DataValidationError: if the typical base shortage and renewable
        output differ by more than a factor 1000, which indicates a unit
        mismatch
    """
    if len(records) == 0:
        raise ValueError("No weather records.")
    base = _columns(records)[3]
    renewable = renewable_mw(records, params)
    typical_base = np.median(base[base > 0]) if np.any(base > 0) else 0.0
    typical_ren = (np.median(renewable[renewable > 0])
                   if np.any(renewable > 0) else 0.0)
    if typical_base > 0 and typical_ren > 0:
        ratio = typical_base / typical_ren
        if ratio > 1e3 or ratio < 1e-3:
            raise DataValidationError(
                "base shortage (median %g MW) and renewable output (median "
                "%g MW) differ by more than 10^3; check units" %
                (typical_base, typical_ren))
    contexts = np.maximum(base - renewable, 0.0)
    if normalization is not None:
        if not normalization > 0:
            raise ValueError("normalization must be positive.")
        contexts = contexts / normalization
    return contexts


def context_scale(contexts, percentile=95.0):
    """
    Returns the normalization constant of a set of contexts, their 95th
    percentile.
    """
    scale = float(np.percentile(contexts, percentile))
    if not scale > 0:
        raise DataValidationError("the %gth percentile of the contexts is "
                                  "zero; cannot normalize" % percentile)
    return scale


def synthesize_base_shortage(timestamps, params, rng):
    """
    Samples the diurnal base shortage for a sequence of timestamps, clamped
    at 0.
    """
    hours = np.array([t.hour + t.minute / 60.0 for t in
                      pd.DatetimeIndex(timestamps)])
    shortage = params.mean_mw + params.amplitude_mw * np.cos(
        2 * np.pi * (hours - params.peak_hour) / 24.0)
    shortage = shortage + rng.normal(0.0, params.noise_std_mw, hours.shape)
    return np.maximum(shortage, 0.0)


def _fail(path, row, column, message):
    raise DataValidationError("%s: row %i, column %r: %s" % (path, row,
                                                             column, message))


def load_weather_csv(path):
    """
    Reads hourly weather records from a CSV file with the header
    ``timestamp,wind_speed_mps,ghi_kw_m2,temp_c,base_shortage_mw``.

    :raises DataValidationError: on a wrong header, a non-numeric or invalid
        cell (reporting its data row and column), or timestamps that are not
        strictly hourly
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != WEATHER_COLUMNS:
        raise DataValidationError("%s: expected header %s, got %s" %
                                  (path, ','.join(WEATHER_COLUMNS),
                                   ','.join(frame.columns)))
    if len(frame) == 0:
        raise DataValidationError("%s: no records" % path)
    stamps = pd.to_datetime(frame['timestamp'], errors='coerce')
    for row in np.flatnonzero(stamps.isna().to_numpy()):
        _fail(path, row + 1, 'timestamp', "unparseable timestamp %r" %
              frame['timestamp'].iloc[row])
    numeric = {}
    for column in WEATHER_COLUMNS[1:]:
        values = pd.to_numeric(frame[column], errors='coerce').to_numpy(
            dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.shape[0]:
            _fail(path, bad[0] + 1, column, "not a finite number: %r" %
                  frame[column].iloc[bad[0]])
        if column in ('wind_speed_mps', 'ghi_kw_m2'):
            negative = np.flatnonzero(values < 0)
            if negative.shape[0]:
                _fail(path, negative[0] + 1, column,
                      "negative value %r" % values[negative[0]])
        numeric[column] = values
    steps = stamps.diff().iloc[1:]
    off = np.flatnonzero((steps != pd.Timedelta(hours=1)).to_numpy())
    if off.shape[0]:
        _fail(path, off[0] + 2, 'timestamp', "timestamps must advance by "
              "exactly one hour")
    records = [WeatherRecord(stamps.iloc[i], numeric['wind_speed_mps'][i],
                             numeric['ghi_kw_m2'][i], numeric['temp_c'][i],
                             numeric['base_shortage_mw'][i])
               for i in range(len(frame))]
    logger.info("loaded %i weather records from %s", len(records), path)
    return records


def write_weather_csv(records, path):
    """
    Writes weather records in the format read by :func:`load_weather_csv`.
    """
    frame = pd.DataFrame({
        'timestamp': [r.timestamp.strftime(TIMESTAMP_FORMAT)
                      for r in records],
        'wind_speed_mps': [r.wind_speed for r in records],
        'ghi_kw_m2': [r.ghi for r in records],
        'temp_c': [r.temperature for r in records],
        'base_shortage_mw': [r.base_shortage for r in records]},
        columns=WEATHER_COLUMNS)
    frame.to_csv(path, index=False, lineterminator='\n')


def load_synthetic_weather(days=365, seed=0, shortage=None):
    """
    Generates a synthetic year of hourly weather. See
    :func:`generate_weather
    <expert_calibration.data_files.generate_weather.generate_weather>`.
    """
    from expert_calibration.data_files.generate_weather import \
        generate_weather
    return generate_weather(days, seed, shortage)


def _episodes(contexts, episode_len, prefix, x0):
    n = contexts.shape[0] // episode_len
    return [ProblemInstance(x0, contexts[i * episode_len:(i + 1) *
                                         episode_len],
                            id='%s-%03i' % (prefix, i))
            for i in range(n)]


def augment_episodes(episodes, config, rng, x0=0.0):
    """
    Returns the raw episodes followed by synthetic ones until there are
    ``config.n_train`` episodes. Contexts never become negative.
    """
    out = list(episodes)
    if config.n_train is None or config.n_train <= len(out):
        return out
    for k in range(config.n_train - len(episodes)):
        source = episodes[int(rng.integers(len(episodes)))].contexts
        shift = int(rng.integers(config.max_shift + 1))
        factor = rng.uniform(1.0 - config.scale_range,
                             1.0 + config.scale_range)
        y = np.roll(source, shift, axis=0) * factor
        y = y + rng.normal(0.0, config.jitter_std, y.shape)
        out.append(ProblemInstance(x0, np.maximum(y, 0.0),
                                   id='aug-%04i' % k))
    return out


def make_dataset(records, episode_len=24, split=(59, 31), augment_cfg=None,
                 seed=0, params=None, normalization=None, x0=0.0):
    """
    Builds training, validation and test episodes from hourly records.

    The hourly records are split chronologically: the first ``split[0]``
    days (of 24 records each) are for training, the next ``split[1]`` days
    for validation, and the rest for testing. Each range is then cut into
    consecutive, non-overlapping episodes of ``episode_len`` hours; hours
    left over at the end of a range are dropped. Only the training episodes
    are augmented. Contexts are divided by ``normalization``, which defaults
    to the 95th percentile of the raw training contexts.

    Test episodes all start from ``x0``; when evaluating with continuous
    testing their initial actions are chained at evaluation time.

    :return: ``(train, val, test)`` lists of :class:`ProblemInstance
        <expert_calibration.core.ProblemInstance>`
    :raises DataValidationError: if there are not enough records
    """
    params = RenewableParams() if params is None else params
    augment_cfg = AugmentConfig() if augment_cfg is None else augment_cfg
    train_days, val_days = split
    if train_days < 1 or val_days < 0:
        raise ValueError("split needs >= 1 training day and >= 0 "
                         "validation days.")
    if episode_len < 1 or episode_len > HOURS_PER_DAY * train_days:
        raise ValueError("episode_len must be in [1, %i], got %r" %
                         (HOURS_PER_DAY * train_days, episode_len))
    n_train_h = train_days * HOURS_PER_DAY
    n_val_h = val_days * HOURS_PER_DAY
    if len(records) < n_train_h + n_val_h + episode_len:
        raise DataValidationError(
            "%i records are too few for %i training days, %i validation "
            "days and at least one test episode of %i hours" %
            (len(records), train_days, val_days, episode_len))
    raw = build_contexts(records, params)
    if normalization is None:
        normalization = context_scale(raw[:n_train_h])
    contexts = raw / normalization
    logger.info("normalizing contexts by %g MW", normalization)

    rng = np.random.default_rng(seed)
    train = _episodes(contexts[:n_train_h], episode_len, 'train', x0)
    val = _episodes(contexts[n_train_h:n_train_h + n_val_h], episode_len,
                    'val', x0)
    test = _episodes(contexts[n_train_h + n_val_h:], episode_len, 'test',
                     x0)
    train = augment_episodes(train, augment_cfg, rng, x0)
    logger.info("dataset: %i train, %i val, %i test episodes", len(train),
                len(val), len(test))
    return train, val, test


def shift_contexts(episodes, factor=1.3):
    """
    Scales every context by a factor, inducing a distribution shift.
    """
    if factor < 0:
        raise ValueError("factor must be non-negative.")
    return [ProblemInstance(e.x0, e.contexts * factor, id=e.id)
            for e in episodes]


def write_dataset_csv(episodes, path):
    """
    Writes episodes to a CSV file with the columns ``episode_id,step,y``,
    one row per step. Vector contexts are space separated within a cell.
    """
    rows = {'episode_id': [], 'step': [], 'y': []}
    for episode in episodes:
        for t, y in enumerate(episode.contexts):
            rows['episode_id'].append(episode.id)
            rows['step'].append(t + 1)
            rows['y'].append(' '.join(repr(float(v)) for v in y))
    frame = pd.DataFrame(rows, columns=DATASET_COLUMNS)
    frame.to_csv(path, index=False, lineterminator='\n')


def read_dataset_csv(path, x0=0.0):
    """
    Reads episodes written by :func:`write_dataset_csv`, in file order.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != DATASET_COLUMNS:
        raise DataValidationError("%s: expected header %s, got %s" %
                                  (path, ','.join(DATASET_COLUMNS),
                                   ','.join(frame.columns)))
    episodes = []
    for episode_id, group in frame.groupby('episode_id', sort=False):
        steps = group['step'].astype(int).to_numpy()
        if not np.array_equal(steps, np.arange(1, steps.shape[0] + 1)):
            raise DataValidationError("%s: episode %r has steps out of "
                                      "order" % (path, episode_id))
        try:
            contexts = [[float(v) for v in cell.split()]
                        for cell in group['y']]
        except ValueError as err:
            raise DataValidationError("%s: episode %r: %s" %
                                      (path, episode_id, err))
        episodes.append(ProblemInstance(x0, as_sequence(contexts),
                                        id=episode_id))
    return episodes
