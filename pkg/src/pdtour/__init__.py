"""Pickup-and-delivery traveling salesman tours: feasibility-preserving operators, a learned operator policy, and the baselines and exact oracle it is measured against."""
