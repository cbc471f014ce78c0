from typing import Optional


class PhishscanError(Exception):
    """ Base class for errors reported on a single line by the command line interface """


class OpcodeTableError(PhishscanError, ValueError):
    pass


class OpcodeTableIntegrityError(OpcodeTableError):
    pass


class BytecodeDecodeError(PhishscanError, ValueError):
    pass


class OutputWriteError(PhishscanError, OSError):
    pass


class AddressError(PhishscanError, ValueError):
    pass


class RpcRemoteError(PhishscanError):
    def __init__(self, message: str, code: Optional[int] = None):
        super().__init__(f'{message} (code {code})' if code is not None else message)
        self.code = code


class RpcTransportError(PhishscanError):
    pass


class CorpusFormatError(PhishscanError, ValueError):
    pass


class LabelError(CorpusFormatError):
    pass


class EmptyInputError(PhishscanError, ValueError):
    pass


class DegenerateTrainingError(PhishscanError, ValueError):
    pass


class FeatureWidthError(PhishscanError, ValueError):
    pass


class LengthMismatchError(PhishscanError, ValueError):
    pass


class FoldError(PhishscanError, ValueError):
    pass


class ExperimentError(PhishscanError):
    """ Wraps an error raised while training or evaluating one fold """
    def __init__(self, message: str, model: str, run: Optional[int] = None, fold: Optional[int] = None):
        where = [f'model={model}']
        if run is not None:
            where.append(f'run={run}')
        if fold is not None:
            where.append(f'fold={fold}')
        super().__init__(f'{", ".join(where)}: {message}')
        self.model = model
        self.run = run
        self.fold = fold


class TimeWindowError(PhishscanError, ValueError):
    pass


class StatsPreconditionError(PhishscanError, ValueError):
    pass


class DegenerateSampleError(StatsPreconditionError):
    pass


class ModelFormatError(PhishscanError, ValueError):
    pass


class MetricsFormatError(PhishscanError, ValueError):
    pass


class ConfigError(PhishscanError, ValueError):
    pass
