"""Error taxonomy: configuration problems (bad flags, missing weights,
unusable fixtures) are ExporterConfigError; violated runtime guarantees
(wrong feature width, parity mismatch) are ExporterError."""


class ExporterError(RuntimeError):
    pass


class ExporterConfigError(ExporterError):
    pass


class ParityError(ExporterError):
    pass
