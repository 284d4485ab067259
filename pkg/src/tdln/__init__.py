"""tdln: deep recurrent feature extraction plus extra-trees classification
for fault detection in multivariate process time series."""

__version__ = "0.1.0"
