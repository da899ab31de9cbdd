"""Exception types raised across the package."""


class LdlabError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(LdlabError, ValueError):
    pass


class UnsupportedError(LdlabError, TypeError):
    """Operation does not apply to this kind of dataset."""


class TrainingDivergedError(LdlabError, RuntimeError):
    def __init__(self, epoch: int, where: str = ""):
        self.epoch = epoch
        self.where = where
        msg = f"training diverged (non-finite loss) at epoch {epoch}"
        if where:
            msg = f"{where}: {msg}"
        super().__init__(msg)


class HypothesisError(LdlabError, ValueError):
    """A proposition's hypotheses cannot be met on the given sweep."""

    def __init__(self, hypothesis: str):
        self.hypothesis = hypothesis
        super().__init__(f"unsatisfiable hypothesis: {hypothesis}")


class UndefinedCorrelationError(LdlabError, ValueError):
    pass
