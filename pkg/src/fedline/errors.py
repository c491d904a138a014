"""Exception hierarchy shared by all fedline modules."""


class FedlineError(Exception):
    """Base class for all fedline errors."""


class ParseError(FedlineError):
    """A file could not be parsed (carries the offending line number)."""


class IntegrityError(FedlineError):
    """Input data violates a structural invariant (duplicate ids, empty file)."""


class SpecError(FedlineError):
    """A generator or config spec is infeasible or self-contradictory."""


class PartitionError(FedlineError):
    """A requested data partition cannot be built."""


class ContractError(FedlineError):
    """An operation was called with arguments violating its contract."""


class TrainingError(FedlineError):
    """Model training cannot proceed (e.g. single-class data)."""


class ProtocolError(FedlineError):
    """A federated protocol message is out of order or of the wrong kind."""


class MetricError(FedlineError):
    """A metric is undefined for the given inputs."""


class ConfigError(FedlineError):
    """An experiment configuration is invalid."""


class RoutingError(FedlineError):
    """A sample cannot be routed through a tree (missing feature)."""
