"""Stacked penalized logistic regression for multi-view data with missing views."""
