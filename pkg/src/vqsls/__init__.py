"""Surrogate Hessian line search for variational quantum circuits."""
