"""Errors raised on purpose by the trainer."""


class TrainerError(Exception):
    """Base class for every deliberate failure in this package."""


class DatasetMissing(TrainerError):
    """A recipe's dataset files are not on disk where it expects them."""


class FormatError(TrainerError):
    """A checkpoint or exported artifact cannot be read or written."""
