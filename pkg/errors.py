#!/usr/bin/env python3

"""
Exceptions shared by the engine and the command line.

Every failure the engine can report is a VceError. The command line maps
the classes to exit codes with exit_code().
"""


class VceError(Exception):
    pass


class ParseError(VceError):
    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self):
        if self.line is None:
            return self.message
        return 'line {}, column {}: {}'.format(self.line, self.column, self.message)


class ModelError(VceError):
    pass


class BindingError(ModelError):
    pass


class StateSpaceError(ModelError):
    pass


class QueryError(VceError):
    pass


class ZeroProbabilityError(VceError):
    pass


class AbsoluteContinuityError(VceError):
    pass


class UnavailableStratumError(VceError):
    pass


class PositivityError(VceError):
    pass


class DatasetError(VceError):
    pass


class OracleMismatch(VceError):
    pass


EXIT_OK = 0
EXIT_IO = 1
EXIT_SEMANTIC = 2
EXIT_MISMATCH = 3


def exit_code(error):
    if isinstance(error, OracleMismatch):
        return EXIT_MISMATCH
    if isinstance(error, (ParseError, DatasetError, OSError)):
        return EXIT_IO
    return EXIT_SEMANTIC
