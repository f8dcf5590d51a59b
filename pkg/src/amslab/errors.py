"""Exception hierarchy shared by the whole package.

Every error the pipeline can raise deliberately derives from AmslabError so
callers can distinguish "our" structured failures from genuine bugs.
"""


class AmslabError(Exception):
    """Base class for all structured errors raised by this package."""


# --- netlist parsing / validation ---------------------------------------

class NetlistError(AmslabError):
    """Base for netlist construction and parse errors."""


class NetlistSyntaxError(NetlistError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class ArityError(NetlistError):
    def __init__(self, device: str, reason: str = ""):
        super().__init__(f"device {device}: wrong terminal count{': ' + reason if reason else ''}")
        self.device = device


class DuplicateNameError(NetlistError):
    def __init__(self, name: str):
        super().__init__(f"duplicate name: {name}")
        self.name = name


class UnknownCardError(NetlistError):
    def __init__(self, line_no: int, card: str):
        super().__init__(f"line {line_no}: unsupported card {card!r}")
        self.line_no = line_no
        self.card = card


# --- port annotation -----------------------------------------------------

class AnnotatorUnavailable(AmslabError):
    """The external annotator could not be reached after retries."""


class AnnotatorInvalidLabel(AmslabError):
    def __init__(self, port: str, raw: str):
        super().__init__(f"annotator returned label {raw!r} for port {port!r}, not in vocabulary")
        self.port = port
        self.raw = raw


class DegenerateDiffPair(AmslabError):
    """A detected differential pair has both gates on one net."""


# --- topology modification ------------------------------------------------

class TopologyError(AmslabError):
    """Base for topology-modification failures."""


class NotFullyDifferential(TopologyError):
    pass


class NoBiasNodeFound(TopologyError):
    pass


class NoPassDevice(TopologyError):
    pass


class NoFeedbackDivider(TopologyError):
    pass


class AlreadyModified(TopologyError):
    pass


# --- testbench instantiation ----------------------------------------------

class TemplateError(AmslabError):
    """Malformed testbench template file."""


class UnboundPort(AmslabError):
    def __init__(self, name: str):
        super().__init__(f"port {name!r} has no binding in the template")
        self.name = name


class MissingHarness(AmslabError):
    """Template requires a topology-modification harness that is absent."""


# --- simulation -----------------------------------------------------------

class SimulationError(AmslabError):
    """Base for simulator-backend failures (the fatal kind; per-trial failures
    are reported through Evaluation.status instead)."""


class MeasurementParseError(SimulationError):
    def __init__(self, name: str):
        super().__init__(f"measurement {name!r} missing from simulator output")
        self.name = name


class ParamOutOfBounds(SimulationError):
    """A requested evaluation point lies outside the declared space."""


class BackendDown(SimulationError):
    """Every trial in a generation failed; the backend is presumed broken."""


# --- sizing ----------------------------------------------------------------

class DegenerateSpec(AmslabError):
    def __init__(self, metric: str):
        super().__init__(f"metric {metric!r}: threshold equals target, score undefined")
        self.metric = metric


class NoFeasiblePolarity(AmslabError):
    """No polarity permutation reached feasibility within the trial budget."""


# --- database ----------------------------------------------------------------

class DatabaseError(AmslabError):
    pass


class DuplicateKey(DatabaseError):
    def __init__(self, key):
        super().__init__(f"entry with key {key} already ingested")
        self.key = key


class SchemaMismatch(DatabaseError):
    pass


# --- reports / cli -----------------------------------------------------------

class MisalignedIds(AmslabError):
    """Prediction and ground-truth label files cover different topology ids."""


class ConfigError(AmslabError):
    pass
