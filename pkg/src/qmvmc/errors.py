"""Exception hierarchy.

``ConfigError`` subclasses map to CLI exit code 1; everything else derived
from ``QmvmcError`` maps to exit code 2.
"""

from __future__ import annotations


class QmvmcError(Exception):
    """Base class for all package errors."""


class ConfigError(QmvmcError):
    """Bad user input (config files, CLI parameters)."""


# mrp
class InfiniteDepthWithoutTruncation(QmvmcError):
    pass


class InconsistentRewardDomain(QmvmcError):
    pass


class InfiniteHorizonUndiscounted(QmvmcError):
    pass


class InvalidDelta(QmvmcError):
    pass


class InvalidTransitionMatrix(QmvmcError):
    pass


# grid
class GridTooLarge(QmvmcError):
    pass


class EmptySet(QmvmcError):
    pass


class NonPowerOfTwoHadamard(QmvmcError):
    pass


# qsim
class NormDrift(QmvmcError):
    pass


# oracles
class NegativeRewardForAmplitudeOracle(QmvmcError):
    pass


class UnsupportedConversionEdge(QmvmcError):
    pass


class NonpositiveDelta(QmvmcError):
    pass


# pipeline
class TrimTooAggressive(QmvmcError):
    pass


class DepthOverflow(QmvmcError):
    pass


# fixtures
class ParameterOutOfLemmaRange(QmvmcError):
    pass


class BitsOutsideDomain(QmvmcError):
    pass


# harness
class ConfigInvalid(ConfigError):
    pass


class OutputUnwritable(QmvmcError):
    pass


class InsufficientPoints(QmvmcError):
    pass


class SlopeBoundViolated(QmvmcError):
    """Phase slope exceeds 2^n/3, so the QFT readout analysis does not apply."""
