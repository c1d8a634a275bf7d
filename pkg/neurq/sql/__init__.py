"""SQL frontend: parse, unparse and bind the PREDICT-extended dialect."""

from neurq.sql.parser import parse
from neurq.sql.unparse import unparse

__all__ = ["parse", "unparse"]
