"""Adapter-side errors; codes mirror the wire protocol."""

from __future__ import annotations


class AdapterError(Exception):
    pass


class AdapterStartupError(AdapterError):
    """The configured model backend could not be brought up."""


class RequestError(AdapterError):
    """A request is invalid; ``code`` goes onto the wire."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
