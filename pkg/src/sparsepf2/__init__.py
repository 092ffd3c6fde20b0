"""Scalable PARAFAC2 for large sparse irregular tensors."""
