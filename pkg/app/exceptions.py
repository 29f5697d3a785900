"""Engine error types"""

from typing import Optional


class BessError(Exception):
    """Base class for engine errors"""


class DomainError(BessError, ValueError):
    """Argument outside the domain of an operation"""


class StrategyInfeasibleError(DomainError):
    """FCR commitment leaves an empty state-of-charge envelope"""


class ConfigurationError(BessError, ValueError):
    """Invalid or inconsistent configuration"""


class IngestionError(BessError, ValueError):
    """Input file does not conform to its schema"""

    def __init__(self, message: str, row: Optional[int] = None, path: Optional[str] = None):
        self.row = row
        self.path = path
        location = ""
        if path:
            location += f"{path}"
        if row is not None:
            location += f"{':' if path else ''}row {row}"
        super().__init__(f"{location}: {message}" if location else message)


class BookValidationError(IngestionError):
    """Order book violates ladder ordering or is crossed"""


class StreamGapError(IngestionError):
    """Time series or snapshot stream has a gap"""


class DataError(BessError, ValueError):
    """Required market data is missing"""

    def __init__(self, message: str, day=None, series: Optional[str] = None):
        self.day = day
        self.series = series
        super().__init__(message)


class FeatureError(DataError):
    """Feature input series missing for a day"""


class SchemaMismatchError(BessError):
    """Feature schema differs from the one a model was trained on"""
