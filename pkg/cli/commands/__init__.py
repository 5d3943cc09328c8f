# cli/commands/__init__.py

from cli.commands import ensemble, field, regions, verify

COMMANDS = (field, regions, ensemble, verify)
