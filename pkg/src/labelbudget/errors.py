"""Exception hierarchy. Everything raised on bad input or bad data derives
from LabelBudgetError so the CLI can map it to exit code 1."""


class LabelBudgetError(Exception):
    pass


class VolumeFormatError(LabelBudgetError):
    """Broken .vol container, PGM slice, or inconsistent voxel payload."""


class ManifestError(LabelBudgetError):
    """Missing volumes, invalid splits, or unreplayable provenance."""


class DomainError(LabelBudgetError):
    """Parameter outside its documented domain (fractions, steps, seeds)."""


class TrainingError(LabelBudgetError):
    """Empty train/val/test sets or a trainer that cannot run."""


class ProtocolError(LabelBudgetError):
    """External trainer violated the wire protocol."""


class GridError(LabelBudgetError):
    """Invalid grid specification or an unusable results table."""
