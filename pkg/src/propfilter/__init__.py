"""Propagate-and-filter: opportunistic device-to-device exchange of
preference data, filtered on-device by peer similarity."""

from .prefs import (
    ContextData,
    NeighborhoodEntry,
    NeighborhoodPreferenceList,
    PeerPreferenceList,
    Rating,
    SimilarityData,
    SimilarityStore,
    admit_to_store,
    cosine_similarity,
    predict_ratings,
    resample_neighborhood,
    shared_view,
)

__version__ = "0.1.0"

__all__ = [
    "ContextData",
    "NeighborhoodEntry",
    "NeighborhoodPreferenceList",
    "PeerPreferenceList",
    "Rating",
    "SimilarityData",
    "SimilarityStore",
    "admit_to_store",
    "cosine_similarity",
    "predict_ratings",
    "resample_neighborhood",
    "shared_view",
]
