"""Repository layer for the run ledger."""
