"""Thickness, pin-wiggling and tree certificates for Cantor products."""
