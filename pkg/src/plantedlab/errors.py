"""Exception hierarchy shared by every module."""


class PlantedLabError(Exception):
    """Base class for errors raised by plantedlab."""


class ConfigurationError(PlantedLabError, ValueError):
    """Invalid dimensions, template family or plan."""


class DomainError(PlantedLabError, ValueError):
    """A numeric argument lies outside the domain of a closed form."""


class BudgetExceededError(PlantedLabError, RuntimeError):
    """An enumeration or rejection budget ran out."""


class BranchInapplicableError(PlantedLabError):
    """The requested bound does not apply to the given instance."""
