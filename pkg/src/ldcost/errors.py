"""Shared exception base for the ldcost toolkit.

Every module defines its own concrete exceptions; they all derive from
:class:`LdcostError` so callers (notably the CLI) can map failures to
exit codes without enumerating each module.
"""


class LdcostError(Exception):
    """Base class for all toolkit errors."""


class InputError(LdcostError):
    """Malformed user input: query text, catalog files, manifests, datasets."""


class FormatError(InputError):
    """A structured input file violates its expected format."""


class RemoteError(LdcostError):
    """A remote interaction (endpoint query, HTTP dereference) failed."""
