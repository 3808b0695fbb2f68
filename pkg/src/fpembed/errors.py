"""Exception types raised across the fpembed pipeline."""


class FpembedError(Exception):
    """Base class for all fpembed errors."""


# --- floorplan ingestion ---

class MalformedInput(FpembedError):
    """Input bytes are not syntactically valid JSON."""


class SchemaViolation(FpembedError):
    """Document parses but does not match the fpjson-v1 schema."""


class InvariantViolation(FpembedError):
    """Schema-valid document violates a floorplan invariant."""


class CoincidentCentroids(FpembedError):
    """Two rooms share a centroid; no connection direction exists."""


class InfeasibleProfile(FpembedError):
    """Synthetic-corpus profile cannot be satisfied."""


# --- simulation ---

class NoExit(FpembedError):
    """Floorplan has no exit room to evacuate toward."""


# --- graph building ---

class MissingBehavior(FpembedError):
    """Behavior map does not cover every room of the floorplan."""


class UnknownRoomType(FpembedError):
    """Room type is not one of the ten known labels."""


class EmptyCorpus(FpembedError):
    """Operation requires a non-empty corpus."""


# --- walks ---

class IsolatedNode(FpembedError):
    """Node has no neighbors; a walk step cannot be taken."""


# --- numeric kernels / model ---

class ShapeMismatch(FpembedError):
    """Array shapes are inconsistent with the operation."""


class NonFiniteInput(FpembedError):
    """Input contains NaN or infinity."""


class StaleCache(FpembedError):
    """Backward pass invoked with a cache from a different forward call."""


class NonFiniteGradient(FpembedError):
    """Gradient contains NaN or infinity."""


class NonFiniteLoss(FpembedError):
    """Training loss diverged to NaN or infinity."""


class DimMismatch(FpembedError):
    """Sequence or latent dimensions do not match the model."""


class EmptySelection(FpembedError):
    """Run selector matched no sequences."""


# --- embedding index ---

class MissingProxy(FpembedError):
    """A graph lacks its main or proxy embedding record."""


class NoClusters(FpembedError):
    """Clustering produced no non-outlier cluster."""


class DegenerateCovariance(FpembedError):
    """Fewer than two records; no 2D projection is defined."""


# --- generation ---

class EmptyRun(FpembedError):
    """Selected walk run contains no sequences."""


class AlignmentMismatch(FpembedError):
    """Decoded sequence is not aligned with the source walk."""
