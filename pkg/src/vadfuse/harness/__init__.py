"""Simulation, labelling, scoring and calibration around the detector."""
