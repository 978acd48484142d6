"""Exception types shared across the package."""


class CenterMeshError(Exception):
    """Base class for all centermesh errors."""


class DegenerateRotationError(CenterMeshError):
    """6D rotation input has near-zero or parallel column vectors."""


class TensorFormatError(CenterMeshError):
    """A binary tensor container is malformed or truncated."""


class ModelLoadError(CenterMeshError):
    """A body-model file is missing tensors or violates model invariants."""


class NoVisibleJointsError(CenterMeshError):
    """A person has zero visible joints, so no body center exists."""


class NoPositiveCellsError(CenterMeshError):
    """Ground-truth center heatmap has no cell >= 1; focal loss undefined."""


class EmptySupervisionError(CenterMeshError):
    """No ground-truth term is available for the mesh parameter loss."""


class DegenerateGeometryError(CenterMeshError):
    """Point set is degenerate (all points coincident) for alignment."""
