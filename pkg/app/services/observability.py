"""Structured logging with run context"""

import logging
import json
import sys
from contextlib import contextmanager
from datetime import datetime
from typing import Optional
from contextvars import ContextVar

# Context variables stamped on every JSON record
run_id_var: ContextVar[Optional[str]] = ContextVar('run_id', default=None)
day_var: ContextVar[Optional[str]] = ContextVar('day', default=None)
strategy_var: ContextVar[Optional[str]] = ContextVar('strategy', default=None)

TEXT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class JSONFormatter(logging.Formatter):
    """Format logs as JSON"""

    def format(self, record):
        log_data = {
            'timestamp': datetime.utcnow().isoformat(),
            'level': record.levelname,
            'message': record.getMessage(),
            'logger': record.name,
            'run_id': run_id_var.get(),
            'day': day_var.get(),
            'strategy': strategy_var.get(),
        }

        # Add structured data if present
        if hasattr(record, 'structured'):
            log_data.update(record.structured)
        if record.exc_info:
            log_data['exception'] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


def setup_logging(level: str = "INFO", fmt: str = "text") -> None:
    """Install a single stderr handler on the root logger"""
    handler = logging.StreamHandler(sys.stderr)
    if fmt == "json":
        handler.setFormatter(JSONFormatter())
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))
    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(level.upper())


@contextmanager
def log_context(run_id: Optional[str] = None, day=None, strategy=None):
    """Bind run/day/strategy to log records emitted inside the block"""
    tokens = []
    if run_id is not None:
        tokens.append((run_id_var, run_id_var.set(str(run_id))))
    if day is not None:
        tokens.append((day_var, day_var.set(str(day))))
    if strategy is not None:
        tokens.append((strategy_var, strategy_var.set(str(strategy))))
    try:
        yield
    finally:
        for var, token in reversed(tokens):
            var.reset(token)
