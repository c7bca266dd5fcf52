"""Randomized sketching, sampling and preconditioning for overdetermined regression."""
