"""hogback: invert HOG descriptors back to natural images.

Four inverters: paired dictionaries (the main algorithm), ridge regression
on a stationary joint Gaussian, exemplar-LDA detection averaging, and direct
coordinate-descent optimization over a natural-image eigenbasis.
"""

from . import store as _store
from .gaussian import ImageBasis, MaterializedGaussian, StationaryModel
from .paired import PairedDictionary

_store.register_model("stationary_model", StationaryModel)
_store.register_model("materialized_gaussian", MaterializedGaussian)
_store.register_model("image_basis", ImageBasis)
_store.register_model("paired_dictionary", PairedDictionary)

__version__ = "0.1.0"
