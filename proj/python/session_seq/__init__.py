"""Session-aware next-destination recommender.

Thin layer over the native core. Paths are booking CSV files in the
user_id,checkin,checkout,city_id,device_class,affiliate_id,booker_country,
hotel_country,utrip_id schema; run directories are the ones written by train().
"""

from ._sse import (
    ConfigError,
    DataError,
    Error,
    IoError,
    bench,
    evaluate,
    length_report,
    length_weights,
    predict,
    softmax,
    synth,
    top_k,
    train,
    verify,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "IoError",
    "bench",
    "evaluate",
    "length_report",
    "length_weights",
    "predict",
    "softmax",
    "synth",
    "top_k",
    "train",
    "verify",
]
