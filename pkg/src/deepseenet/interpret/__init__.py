from .saliency import input_gradient, saliency, top_mass_fraction
from .tsne import DegenerateInputError, TsneConfig, TsneResult, nearest_centroid_purity, tsne

__all__ = ["input_gradient", "saliency", "top_mass_fraction", "DegenerateInputError",
           "TsneConfig", "TsneResult", "nearest_centroid_purity", "tsne"]
