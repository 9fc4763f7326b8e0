"""Interaction-aware multi-vessel trajectory prediction for inland waterways."""

from .encounter import (
    EncounterKey,
    RelationValues,
    ShipDomainTensor,
    discretize,
    domain_lookup,
    export_domain,
    fuse_hidden,
    pair_weight,
    relation_values,
)
from .models import PredictionSet, TrajectoryModel, VariantConfig, masked_mse
from .traffic import (
    GeneratorConfig,
    Normalizer,
    Situation,
    VesselTrack,
    fit_normalizer,
    generate_scenarios,
    ingest_csv,
    window_situation,
)
from .waterway import (
    CurvilinearPose,
    CurvatureSample,
    WaterwayAxis,
    build_axis,
    load_axis,
    make_curved_axis,
    make_straight_axis,
    save_axis,
)

__all__ = [
    "CurvilinearPose",
    "CurvatureSample",
    "EncounterKey",
    "GeneratorConfig",
    "Normalizer",
    "PredictionSet",
    "RelationValues",
    "ShipDomainTensor",
    "Situation",
    "TrajectoryModel",
    "VariantConfig",
    "VesselTrack",
    "WaterwayAxis",
    "build_axis",
    "discretize",
    "domain_lookup",
    "export_domain",
    "fit_normalizer",
    "fuse_hidden",
    "generate_scenarios",
    "ingest_csv",
    "load_axis",
    "make_curved_axis",
    "make_straight_axis",
    "masked_mse",
    "pair_weight",
    "relation_values",
    "save_axis",
    "window_situation",
]
