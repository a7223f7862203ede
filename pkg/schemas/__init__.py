"""Pydantic models for certificate files."""
