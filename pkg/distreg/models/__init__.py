from distreg.models.epoch import Sex, EpochSeries, Exclusion, SubjectRecord, CohortTable
from distreg.models.quantile import QuantileScale, QuantileFunction, QuantileDraws, BoxCoxTransform
from distreg.models.missingness import MissingnessProfile, FpcBasis
from distreg.models.quantlet import QuantletBasis
from distreg.models.regression import SplineMap, DesignMapper, DesignBlock, PosteriorDraws
from distreg.models.summary import FunctionalSummary, CredibleBands

__all__ = [
    "Sex",
    "EpochSeries",
    "Exclusion",
    "SubjectRecord",
    "CohortTable",
    "QuantileScale",
    "QuantileFunction",
    "QuantileDraws",
    "BoxCoxTransform",
    "MissingnessProfile",
    "FpcBasis",
    "QuantletBasis",
    "SplineMap",
    "DesignMapper",
    "DesignBlock",
    "PosteriorDraws",
    "FunctionalSummary",
    "CredibleBands",
]
