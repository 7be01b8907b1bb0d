# Authors: HistoML developers
# License: BSD 3 clause
