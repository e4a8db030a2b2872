"""portsec: attribute-level message protection and a desk-scale permissioned
ledger for port community workflows."""

__version__ = "0.1.0"
