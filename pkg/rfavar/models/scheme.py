try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__


class Scheme(StrEnum):
    IRA = "ira"  # latent loadings unrotated, structural fg covariance zeroed
    IRB = "irb"  # named factors: naming block of latent loadings pinned to identity


class Command(StrEnum):
    SIMULATE = "simulate"
    ESTIMATE = "estimate"
    IRF = "irf"
    MONTECARLO = "montecarlo"


class SeedMethod(StrEnum):
    PCA = "pca"
    RANDOM = "random"
