"""Core primitives for rff-distill: settings, logging, errors and the run ledger."""
