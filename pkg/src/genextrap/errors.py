"""Exception hierarchy shared by the library and the command line."""


class GenExtrapError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSequenceError(GenExtrapError, ValueError):
    pass


class MethodFormatError(GenExtrapError, ValueError):
    """A coefficient file could not be parsed or violates consistency."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnsupportedShapeError(GenExtrapError, ValueError):
    pass


class ConfigurationError(GenExtrapError, ValueError):
    pass


class DivergenceError(GenExtrapError, ArithmeticError):
    """A non-finite value appeared while stepping.

    The optional indices locate the failure: ``step`` is the macro-step,
    ``branch`` the term of the linear combination and ``stage`` the position
    inside that term's composition.
    """

    def __init__(self, message, *, step=None, branch=None, stage=None):
        self.step = step
        self.branch = branch
        self.stage = stage
        self.detail = message
        super().__init__(self._format())

    def _format(self):
        loc = [f"{k}={v}" for k, v in (("step", self.step), ("branch", self.branch),
                                       ("stage", self.stage)) if v is not None]
        return f"{self.detail} ({', '.join(loc)})" if loc else self.detail

    def tagged(self, **where):
        """Return a copy with the given location indices set."""
        kw = {"step": self.step, "branch": self.branch, "stage": self.stage}
        kw.update(where)
        err = type(self).__new__(type(self))
        DivergenceError.__init__(err, self.detail, **kw)
        return err


class SingularityError(DivergenceError):
    """The Kepler force was evaluated at the origin."""


class ReferenceSolverError(GenExtrapError, RuntimeError):
    pass


class WorkerError(GenExtrapError, RuntimeError):
    def __init__(self, message, branch=None):
        self.branch = branch
        super().__init__(message if branch is None else f"{message} (branch={branch})")
