"""Invoices."""
from storage.db import Database


class Invoice:
    """A billable document."""

    def __init__(self, amount):
        self.amount = amount

    def total_with_tax(self, rate):
        """Compute total including tax."""
        return self.amount * (1 + rate)


def save_invoice(db: Database, invoice):
    """Persist an invoice."""
    db.insert("invoices", invoice.amount)
