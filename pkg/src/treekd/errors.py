"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class TreeKDError(Exception):
    """Base class for all errors raised by this package."""


# -- SMILES ------------------------------------------------------------------
class SmilesError(TreeKDError, ValueError):
    """Malformed or unsupported SMILES input."""


class UnbalancedRing(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class UnknownAtomSymbol(SmilesError):
    pass


class ValenceOverflow(SmilesError):
    pass


# -- SMARTS ------------------------------------------------------------------
class SmartsError(TreeKDError, ValueError):
    """Malformed or unsupported SMARTS input."""


class UnsupportedPrimitive(SmartsError):
    def __init__(self, token: str, message: str | None = None) -> None:
        self.token = token
        super().__init__(message or f"unsupported SMARTS primitive {token!r}")


class MalformedExpression(SmartsError):
    pass


# -- shapes and compatibility --------------------------------------------------
class DimensionMismatch(TreeKDError, ValueError):
    pass


class LibraryMismatch(TreeKDError, ValueError):
    pass


class WidthMismatch(TreeKDError, ValueError):
    pass


class FeatureOutOfRange(TreeKDError, IndexError):
    pass


class EmptyInput(TreeKDError, ValueError):
    pass


class EmptyForest(TreeKDError, ValueError):
    pass


# -- data ingestion ------------------------------------------------------------
class DataError(TreeKDError, ValueError):
    pass


class MissingColumn(DataError):
    pass


class EmptyDataset(DataError):
    pass


class InvalidLabel(DataError):
    pass


class RatioError(DataError):
    pass


class ConfigError(TreeKDError, ValueError):
    pass


# -- rule text -------------------------------------------------------------------
class RuleError(TreeKDError, ValueError):
    pass


class GrammarError(RuleError):
    pass


class IndentError(GrammarError):
    pass


class UnknownFGName(RuleError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


# -- inference -----------------------------------------------------------------
class BackendError(TreeKDError):
    """The predictor backend failed to produce a completion."""


class BackendUnavailable(BackendError):
    pass


class Timeout(BackendError):
    pass


class Unparseable(TreeKDError, ValueError):
    pass


class AllMembersFailed(TreeKDError):
    pass


# -- metrics ---------------------------------------------------------------------
class MetricError(TreeKDError, ValueError):
    pass


class LengthMismatch(MetricError):
    pass


class DegenerateLabels(MetricError):
    pass


class ZeroVariance(MetricError):
    pass


class MissingMember(MetricError, KeyError):
    pass
